#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "cadmm/mesh.hpp"
#include "cadmm/sparse.hpp"

namespace cadmm {

/// Constant P1 shape-function gradients and area of one triangle.
struct ElementGeometry {
  double area = 0.0;
  std::array<std::array<double, 2>, 3> grad{};  // grad[i] = ∇φ_i
};

inline ElementGeometry element_geometry(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const auto& p0 = mesh.vertices[tri[0]];
  const auto& p1 = mesh.vertices[tri[1]];
  const auto& p2 = mesh.vertices[tri[2]];
  double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
  ElementGeometry g;
  g.area = 0.5 * det;
  double longest = std::max({std::hypot(p1[0] - p0[0], p1[1] - p0[1]),
                             std::hypot(p2[0] - p1[0], p2[1] - p1[1]),
                             std::hypot(p0[0] - p2[0], p0[1] - p2[1])});
  if (!(g.area > 1e-14 * longest * longest)) {
    throw std::invalid_argument("assembly: degenerate triangle " + std::to_string(t) +
                                " (area " + std::to_string(g.area) + ")");
  }
  // ∇φ_i = (b_i, c_i) / (2A) with b_i = y_j - y_k, c_i = x_k - x_j (cyclic)
  const std::array<const std::array<double, 2>*, 3> p{&p0, &p1, &p2};
  for (int i = 0; i < 3; ++i) {
    const auto& pj = *p[(i + 1) % 3];
    const auto& pk = *p[(i + 2) % 3];
    g.grad[i] = {(pj[1] - pk[1]) / det, (pk[0] - pj[0]) / det};
  }
  return g;
}

/// Unit-coefficient element stiffness: K_ij = A ∇φ_i·∇φ_j.
inline std::array<std::array<double, 3>, 3> element_stiffness(const ElementGeometry& g) {
  std::array<std::array<double, 3>, 3> k{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      k[i][j] = g.area * (g.grad[i][0] * g.grad[j][0] + g.grad[i][1] * g.grad[j][1]);
    }
  }
  return k;
}

/// Element mass (exact P1 quadrature): (A/12)·[[2,1,1],[1,2,1],[1,1,2]].
inline std::array<std::array<double, 3>, 3> element_mass(double area) {
  std::array<std::array<double, 3>, 3> m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      m[i][j] = area / 12.0 * (i == j ? 2.0 : 1.0);
    }
  }
  return m;
}

/// M_ij = ∫ φ_i φ_j dx.
inline SparseOperator assemble_mass(const Mesh& mesh) {
  std::vector<std::tuple<int, int, double>> trips;
  trips.reserve(9 * mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    auto g = element_geometry(mesh, t);
    auto m = element_mass(g.area);
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        trips.emplace_back(tri[i], tri[j], m[i][j]);
      }
    }
  }
  return SparseOperator::from_triplets(mesh.n_vertices(), trips);
}

/// K_ij = ∫ c ∇φ_i·∇φ_j dx with c the element-wise average of the nodal
/// coefficient field (one-point quadrature consistent with P1 accuracy).
inline SparseOperator assemble_stiffness(const Mesh& mesh, std::span<const double> nodal_coeff,
                                         bool require_positive = false) {
  if (static_cast<int>(nodal_coeff.size()) != mesh.n_vertices()) {
    throw std::invalid_argument("assemble_stiffness: coefficient size mismatch");
  }
  std::vector<std::tuple<int, int, double>> trips;
  trips.reserve(9 * mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    auto g = element_geometry(mesh, t);
    auto k = element_stiffness(g);
    const auto& tri = mesh.triangles[t];
    double c = (nodal_coeff[tri[0]] + nodal_coeff[tri[1]] + nodal_coeff[tri[2]]) / 3.0;
    if (require_positive && !(c > 0.0)) {
      throw std::invalid_argument("assemble_stiffness: nonpositive coefficient on triangle " +
                                  std::to_string(t));
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        trips.emplace_back(tri[i], tri[j], c * k[i][j]);
      }
    }
  }
  return SparseOperator::from_triplets(mesh.n_vertices(), trips);
}

inline SparseOperator assemble_stiffness(const Mesh& mesh, double constant_coeff,
                                         bool require_positive = false) {
  std::vector<double> c(mesh.n_vertices(), constant_coeff);
  return assemble_stiffness(mesh, c, require_positive);
}

/// Mass matrix weighted by the element-wise average of a nodal field:
/// (M_w)_ij = ∫ w φ_i φ_j dx with w constant per element.
inline SparseOperator assemble_weighted_mass(const Mesh& mesh, std::span<const double> nodal_weight) {
  if (static_cast<int>(nodal_weight.size()) != mesh.n_vertices()) {
    throw std::invalid_argument("assemble_weighted_mass: weight size mismatch");
  }
  std::vector<std::tuple<int, int, double>> trips;
  trips.reserve(9 * mesh.n_triangles());
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    auto g = element_geometry(mesh, t);
    auto m = element_mass(g.area);
    const auto& tri = mesh.triangles[t];
    double w = (nodal_weight[tri[0]] + nodal_weight[tri[1]] + nodal_weight[tri[2]]) / 3.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        trips.emplace_back(tri[i], tri[j], w * m[i][j]);
      }
    }
  }
  return SparseOperator::from_triplets(mesh.n_vertices(), trips);
}

/// Boundary mass over facets with the given marker:
/// (M_b)_ij = ∫_Γ φ_i φ_j ds; rows and columns of interior nodes are zero.
inline SparseOperator assemble_boundary_mass(const Mesh& mesh, int marker) {
  std::vector<std::tuple<int, int, double>> trips;
  bool found = false;
  for (const auto& f : mesh.boundary_facets) {
    if (f.marker != marker) continue;
    found = true;
    double len = facet_length(mesh, f);
    // 1D P1 facet mass: (L/6)·[[2,1],[1,2]]
    trips.emplace_back(f.a, f.a, len / 3.0);
    trips.emplace_back(f.b, f.b, len / 3.0);
    trips.emplace_back(f.a, f.b, len / 6.0);
    trips.emplace_back(f.b, f.a, len / 6.0);
  }
  if (!found) {
    throw std::invalid_argument("assemble_boundary_mass: no facet carries marker " +
                                std::to_string(marker));
  }
  return SparseOperator::from_triplets(mesh.n_vertices(), trips);
}

}  // namespace cadmm
