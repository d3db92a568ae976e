#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cadmm {

struct BoundaryFacet {
  int a = 0;
  int b = 0;
  int marker = 0;
};

/// 2D triangulation with piecewise-linear (P1) nodal unknowns.
/// Triangles are stored counter-clockwise; boundary facets carry an
/// integer marker and must each lie on exactly one triangle.
struct Mesh {
  std::vector<std::array<double, 2>> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryFacet> boundary_facets;
  std::vector<int> dirichlet_nodes;  // designated ground vertices (on the boundary)

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_triangles() const { return static_cast<int>(triangles.size()); }
};

inline double triangle_signed_area(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  const auto& p0 = mesh.vertices[tri[0]];
  const auto& p1 = mesh.vertices[tri[1]];
  const auto& p2 = mesh.vertices[tri[2]];
  return 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
}

inline double triangle_area(const Mesh& mesh, int t) {
  return std::abs(triangle_signed_area(mesh, t));
}

inline double facet_length(const Mesh& mesh, const BoundaryFacet& f) {
  const auto& pa = mesh.vertices[f.a];
  const auto& pb = mesh.vertices[f.b];
  return std::hypot(pb[0] - pa[0], pb[1] - pa[1]);
}

/// Reorders triangle vertices so every signed area is positive.
inline void fix_orientation(Mesh& mesh) {
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    if (triangle_signed_area(mesh, t) < 0.0) {
      std::swap(mesh.triangles[t][1], mesh.triangles[t][2]);
    }
  }
}

inline std::vector<int> boundary_vertices(const Mesh& mesh) {
  std::set<int> verts;
  for (const auto& f : mesh.boundary_facets) {
    verts.insert(f.a);
    verts.insert(f.b);
  }
  return {verts.begin(), verts.end()};
}

inline double max_edge_length(const Mesh& mesh) {
  double h = 0.0;
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      const auto& pa = mesh.vertices[tri[k]];
      const auto& pb = mesh.vertices[tri[(k + 1) % 3]];
      h = std::max(h, std::hypot(pb[0] - pa[0], pb[1] - pa[1]));
    }
  }
  return h;
}

inline int count_edges(const Mesh& mesh) {
  std::set<std::pair<int, int>> edges;
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  return static_cast<int>(edges.size());
}

/// Checks the structural invariants: positive areas, each marked facet on
/// exactly one triangle, facets forming closed loops, Dirichlet nodes on
/// the boundary. Throws std::invalid_argument on the first violation.
inline void validate_mesh(const Mesh& mesh) {
  const int nv = mesh.n_vertices();
  for (const auto& tri : mesh.triangles) {
    for (int idx : tri) {
      if (idx < 0 || idx >= nv) throw std::invalid_argument("mesh: triangle vertex index out of range");
    }
  }
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    if (triangle_signed_area(mesh, t) <= 0.0) {
      throw std::invalid_argument("mesh: triangle " + std::to_string(t) + " has nonpositive area");
    }
  }
  // edge -> number of adjacent triangles
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& tri : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      edge_count[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  std::map<int, int> facet_degree;
  for (const auto& f : mesh.boundary_facets) {
    if (f.a < 0 || f.a >= nv || f.b < 0 || f.b >= nv || f.a == f.b) {
      throw std::invalid_argument("mesh: malformed boundary facet");
    }
    auto it = edge_count.find({std::min(f.a, f.b), std::max(f.a, f.b)});
    if (it == edge_count.end() || it->second != 1) {
      throw std::invalid_argument("mesh: boundary facet (" + std::to_string(f.a) + "," +
                                  std::to_string(f.b) + ") is not an edge of exactly one triangle");
    }
    facet_degree[f.a]++;
    facet_degree[f.b]++;
  }
  for (const auto& [v, deg] : facet_degree) {
    if (deg != 2) {
      throw std::invalid_argument("mesh: boundary facets do not form closed loops at vertex " +
                                  std::to_string(v));
    }
  }
  for (int d : mesh.dirichlet_nodes) {
    if (facet_degree.find(d) == facet_degree.end()) {
      throw std::invalid_argument("mesh: Dirichlet node " + std::to_string(d) + " is not on the boundary");
    }
  }
}

namespace detail {

// One uniform refinement step: each triangle splits into four via edge
// midpoints; boundary facets split in two. Midpoints of boundary facets
// are projected onto the unit circle when project_boundary is set.
inline Mesh refine_once(const Mesh& coarse, bool project_boundary) {
  Mesh fine;
  fine.vertices = coarse.vertices;
  std::set<std::pair<int, int>> boundary_edges;
  for (const auto& f : coarse.boundary_facets) {
    boundary_edges.insert({std::min(f.a, f.b), std::max(f.a, f.b)});
  }
  std::map<std::pair<int, int>, int> midpoint;
  auto mid = [&](int a, int b) {
    auto key = std::make_pair(std::min(a, b), std::max(a, b));
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const auto& pa = coarse.vertices[a];
    const auto& pb = coarse.vertices[b];
    std::array<double, 2> p{0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])};
    if (project_boundary && boundary_edges.count(key)) {
      double r = std::hypot(p[0], p[1]);
      p[0] /= r;
      p[1] /= r;
    }
    int idx = static_cast<int>(fine.vertices.size());
    fine.vertices.push_back(p);
    midpoint.emplace(key, idx);
    return idx;
  };
  for (const auto& tri : coarse.triangles) {
    int m01 = mid(tri[0], tri[1]);
    int m12 = mid(tri[1], tri[2]);
    int m20 = mid(tri[2], tri[0]);
    fine.triangles.push_back({tri[0], m01, m20});
    fine.triangles.push_back({tri[1], m12, m01});
    fine.triangles.push_back({tri[2], m20, m12});
    fine.triangles.push_back({m01, m12, m20});
  }
  for (const auto& f : coarse.boundary_facets) {
    int m = mid(f.a, f.b);
    fine.boundary_facets.push_back({f.a, m, f.marker});
    fine.boundary_facets.push_back({m, f.b, f.marker});
  }
  fine.dirichlet_nodes = coarse.dirichlet_nodes;
  fix_orientation(fine);
  return fine;
}

}  // namespace detail

/// Triangulates the unit disc by recursive midpoint refinement of a coarse
/// fan of `initial_segments` triangles around the origin. New boundary
/// midpoints are projected onto the unit circle; the boundary carries
/// marker 1. The boundary vertex nearest angle 0 is recorded as the
/// designated ground vertex.
inline Mesh build_unit_disc_mesh(int refinement_level, int initial_segments = 8) {
  if (refinement_level < 0 || refinement_level > 8) {
    throw std::invalid_argument("build_unit_disc_mesh: refinement_level must be in [0, 8]");
  }
  if (initial_segments < 3) {
    throw std::invalid_argument("build_unit_disc_mesh: need at least 3 initial segments");
  }
  Mesh mesh;
  mesh.vertices.push_back({0.0, 0.0});
  for (int k = 0; k < initial_segments; ++k) {
    double theta = 2.0 * M_PI * k / initial_segments;
    mesh.vertices.push_back({std::cos(theta), std::sin(theta)});
  }
  for (int k = 0; k < initial_segments; ++k) {
    int a = 1 + k;
    int b = 1 + (k + 1) % initial_segments;
    mesh.triangles.push_back({0, a, b});
    mesh.boundary_facets.push_back({a, b, 1});
  }
  fix_orientation(mesh);
  for (int l = 0; l < refinement_level; ++l) {
    mesh = detail::refine_once(mesh, /*project_boundary=*/true);
  }
  // ground vertex: boundary vertex nearest angle 0, i.e. (1, 0)
  double best = std::numeric_limits<double>::max();
  int ground = -1;
  for (int v : boundary_vertices(mesh)) {
    double theta = std::atan2(mesh.vertices[v][1], mesh.vertices[v][0]);
    if (std::abs(theta) < best) {
      best = std::abs(theta);
      ground = v;
    }
  }
  mesh.dirichlet_nodes = {ground};
  validate_mesh(mesh);
  return mesh;
}

/// Structured triangulation of the unit square with cells_per_side^2 cells,
/// each split into two triangles. Whole boundary carries marker 1.
inline Mesh build_unit_square_mesh(int cells_per_side) {
  if (cells_per_side < 1) throw std::invalid_argument("build_unit_square_mesh: need at least one cell");
  const int n = cells_per_side;
  Mesh mesh;
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      mesh.vertices.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
    }
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      int v00 = vid(i, j), v10 = vid(i + 1, j), v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      mesh.triangles.push_back({v00, v10, v11});
      mesh.triangles.push_back({v00, v11, v01});
    }
  }
  for (int i = 0; i < n; ++i) {
    mesh.boundary_facets.push_back({vid(i, 0), vid(i + 1, 0), 1});
    mesh.boundary_facets.push_back({vid(i + 1, n), vid(i, n), 1});
    mesh.boundary_facets.push_back({vid(0, i + 1), vid(0, i), 1});
    mesh.boundary_facets.push_back({vid(n, i), vid(n, i + 1), 1});
  }
  fix_orientation(mesh);
  validate_mesh(mesh);
  return mesh;
}

/// Text format: header `V T F`, then V lines `x y`, T lines `i j k`,
/// F lines `i j marker`.
inline void write_mesh(std::ostream& out, const Mesh& mesh) {
  out << mesh.n_vertices() << " " << mesh.n_triangles() << " " << mesh.boundary_facets.size() << "\n";
  char buf[80];
  for (const auto& p : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", p[0], p[1]);
    out << buf;
  }
  for (const auto& t : mesh.triangles) {
    out << t[0] << " " << t[1] << " " << t[2] << "\n";
  }
  for (const auto& f : mesh.boundary_facets) {
    out << f.a << " " << f.b << " " << f.marker << "\n";
  }
}

inline Mesh read_mesh(std::istream& in) {
  Mesh mesh;
  int nv = 0, nt = 0, nf = 0;
  if (!(in >> nv >> nt >> nf)) throw std::invalid_argument("mesh file: bad header");
  if (nv < 3 || nt < 1 || nf < 3) throw std::invalid_argument("mesh file: implausible sizes in header");
  mesh.vertices.resize(nv);
  for (auto& p : mesh.vertices) {
    if (!(in >> p[0] >> p[1])) throw std::invalid_argument("mesh file: bad vertex line");
  }
  mesh.triangles.resize(nt);
  for (auto& t : mesh.triangles) {
    if (!(in >> t[0] >> t[1] >> t[2])) throw std::invalid_argument("mesh file: bad triangle line");
  }
  mesh.boundary_facets.resize(nf);
  for (auto& f : mesh.boundary_facets) {
    if (!(in >> f.a >> f.b >> f.marker)) throw std::invalid_argument("mesh file: bad facet line");
  }
  fix_orientation(mesh);
  validate_mesh(mesh);
  return mesh;
}

inline void write_mesh_file(const std::string& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot open mesh file for writing: " + path);
  write_mesh(out, mesh);
}

inline Mesh read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open mesh file: " + path);
  return read_mesh(in);
}

}  // namespace cadmm
