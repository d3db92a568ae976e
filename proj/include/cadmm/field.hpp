#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cadmm/mesh.hpp"

namespace cadmm {

using Vec = std::vector<double>;

/// Coefficients of a continuous piecewise-linear function on a Mesh.
struct Field {
  std::shared_ptr<const Mesh> mesh;
  Vec values;

  Field() = default;
  Field(std::shared_ptr<const Mesh> m, Vec v) : mesh(std::move(m)), values(std::move(v)) {
    check();
  }
  Field(std::shared_ptr<const Mesh> m, double constant)
      : mesh(std::move(m)), values(mesh->n_vertices(), constant) {}

  void check() const {
    if (!mesh) throw std::invalid_argument("Field: null mesh");
    if (static_cast<int>(values.size()) != mesh->n_vertices()) {
      throw std::invalid_argument("Field: value count does not match vertex count");
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw std::invalid_argument("Field: non-finite value");
    }
  }
};

/// Field file: one real per line, order matching the mesh vertices.
inline void write_field(std::ostream& out, const Vec& values) {
  char buf[48];
  for (double v : values) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", v);
    out << buf;
  }
}

inline void write_field_file(const std::string& path, const Vec& values) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot open field file for writing: " + path);
  write_field(out, values);
}

inline Vec read_field(std::istream& in, int expected_size) {
  Vec values;
  values.reserve(expected_size);
  double v = 0.0;
  while (in >> v) values.push_back(v);
  if (static_cast<int>(values.size()) != expected_size) {
    throw std::invalid_argument("field file: expected " + std::to_string(expected_size) +
                                " values, got " + std::to_string(values.size()));
  }
  return values;
}

inline Vec read_field_file(const std::string& path, int expected_size) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open field file: " + path);
  return read_field(in, expected_size);
}

}  // namespace cadmm
