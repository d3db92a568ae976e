#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cadmm/assembly.hpp"
#include "cadmm/linear_solver.hpp"
#include "cadmm/model.hpp"

namespace cadmm {

/// One current-injection pattern: a Gaussian bump in boundary angle with
/// amplitude gamma and decay beta, grounded at a single boundary vertex.
struct SourceSpec {
  double theta = 0.0;
  double gamma = 0.1;
  double beta = 10.0;
  int ground_node = -1;        // -1: pick the boundary vertex nearest angle 0
  int observation_marker = 1;  // boundary marker carrying the measurements

  void validate() const {
    if (!(gamma >= 0.0) || !(beta > 0.0)) {
      throw std::invalid_argument("SourceSpec: gamma must be nonnegative and beta positive");
    }
  }
};

/// Incident current g(θ) = γ·exp(−β(θ−θ_i)²) with the angular difference
/// wrapped to (−π, π] so sources near ±π behave symmetrically.
inline double boundary_current(const SourceSpec& spec, double theta) {
  double d = std::remainder(theta - spec.theta, 2.0 * M_PI);
  if (d <= -M_PI) d += 2.0 * M_PI;
  return spec.gamma * std::exp(-spec.beta * d * d);
}

/// EIT forward model on log-conductivity m: the state u solves
///   ∫ e^m ∇u·∇v = ∫_Γ g v ds  for all v with v(ground) = 0,  u(ground) = 0,
/// and the misfit is ½∫_Γ (u − d)² ds on the observation boundary.
/// Discrete derivatives differentiate the assembled system exactly, so the
/// adjoint gradient and Hessian actions are consistent with the misfit to
/// solver tolerance.
class EitModel final : public InversionModel {
 public:
  EitModel(std::shared_ptr<const FemSpace> space, SourceSpec spec)
      : space_(std::move(space)), spec_(spec) {
    spec_.validate();
    const Mesh& mesh = space_->mesh();
    if (spec_.ground_node < 0) {
      if (!mesh.dirichlet_nodes.empty()) {
        spec_.ground_node = mesh.dirichlet_nodes.front();
      } else {
        double best = std::numeric_limits<double>::max();
        for (int v : boundary_vertices(mesh)) {
          double theta = std::atan2(mesh.vertices[v][1], mesh.vertices[v][0]);
          if (std::abs(theta) < best) {
            best = std::abs(theta);
            spec_.ground_node = v;
          }
        }
      }
    }
    boundary_mass_ = assemble_boundary_mass(mesh, spec_.observation_marker);
    support_ = boundary_vertices(mesh);
    // rhs_i = ∫_Γ g φ_i ds with g interpolated at boundary vertices
    Vec g_nodal(mesh.n_vertices(), 0.0);
    for (int v : support_) {
      g_nodal[v] = boundary_current(spec_, std::atan2(mesh.vertices[v][1], mesh.vertices[v][0]));
    }
    neumann_rhs_ = boundary_mass_.apply(g_nodal);
    data_.assign(mesh.n_vertices(), 0.0);
    element_geo_.reserve(mesh.n_triangles());
    for (int t = 0; t < mesh.n_triangles(); ++t) element_geo_.push_back(element_geometry(mesh, t));
  }

  const FemSpace& space() const override { return *space_; }
  int blocks() const override { return 1; }
  const SourceSpec& source() const { return spec_; }
  const Vec& data() const { return data_; }
  const SparseOperator& boundary_mass() const { return boundary_mass_; }

  void set_data(Vec d) override {
    if (static_cast<int>(d.size()) != space_->n_vertices()) {
      throw std::invalid_argument("EitModel::set_data: size mismatch");
    }
    // data lives on the observation boundary; interior entries are ignored
    data_.assign(d.size(), 0.0);
    for (int v : support_) data_[v] = d[v];
  }

  std::vector<int> observation_support() const override { return support_; }

  /// Solves the forward problem at m. One forward solve.
  Vec forward(std::span<const double> m) {
    ensure_factorization(m);
    ++counters_.forward;
    return factorization_->solve(neumann_rhs_);
  }

  /// ½ (u−d)ᵀ M_b (u−d); pure functional of the state, no solve.
  double misfit_of_state(std::span<const double> u) const {
    Vec r(u.size());
    for (size_t i = 0; i < u.size(); ++i) r[i] = u[i] - data_[i];
    return 0.5 * boundary_mass_.quad(r, r);
  }

  double misfit(std::span<const double> m) override { return misfit_of_state(forward(m)); }

  double state_misfit(std::span<const double> m) override { return 2.0 * misfit(m); }

  Vec synth_observation(std::span<const double> m_true) override {
    Vec u = forward(m_true);
    Vec obs(u.size(), 0.0);
    for (int v : support_) obs[v] = u[v];
    return obs;
  }

  /// Adjoint gradient: solves forward then adjoint (one each) and
  /// assembles g_i = Σ_{e∋i} (e^{m_i}/3) · p_eᵀ K_e u_e.
  Vec misfit_gradient(std::span<const double> m) override {
    ensure_factorization(m);
    ++counters_.forward;
    state_u_ = factorization_->solve(neumann_rhs_);
    Vec rhs(m.size());
    Vec r(m.size());
    for (size_t i = 0; i < m.size(); ++i) r[i] = state_u_[i] - data_[i];
    Vec mbr = boundary_mass_.apply(r);
    for (size_t i = 0; i < m.size(); ++i) rhs[i] = -mbr[i];
    ++counters_.adjoint;
    adjoint_p_ = factorization_->solve(rhs);
    state_valid_ = true;

    const Mesh& mesh = space_->mesh();
    Vec g(m.size(), 0.0);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      const auto& tri = mesh.triangles[t];
      auto ke = element_stiffness(element_geo_[t]);
      double kup = bilinear(ke, adjoint_p_, state_u_, tri);
      for (int i = 0; i < 3; ++i) {
        g[tri[i]] += std::exp(m[tri[i]]) / 3.0 * kup;
      }
    }
    return g;
  }

  /// Hessian action via incremental forward/adjoint solves (two per call).
  /// Requires u, p cached by a gradient evaluation at the same m.
  /// gauss_newton drops every term carrying the adjoint p.
  Vec misfit_hessian_action(std::span<const double> m, std::span<const double> dir,
                            HessianMode mode) override {
    if (!state_valid_ || !same_m(m)) {
      throw std::logic_error("EitModel::misfit_hessian_action: gradient state not cached at this m");
    }
    const Mesh& mesh = space_->mesh();
    const int n = space_->n_vertices();

    // incremental forward: K û = −K'(dir) u
    Vec rhs(n, 0.0);
    add_dstiffness_action(m, dir, state_u_, rhs, -1.0);
    ++counters_.incremental;
    Vec u_hat = factorization_->solve(rhs);

    // incremental adjoint: K p̂ = −M_b û − K'(dir) p   (GN: K p̂ = −M_b û)
    Vec rhs2 = boundary_mass_.apply(u_hat);
    for (double& v : rhs2) v = -v;
    if (mode == HessianMode::full) {
      add_dstiffness_action(m, dir, adjoint_p_, rhs2, -1.0);
    }
    ++counters_.incremental;
    Vec p_hat = factorization_->solve(rhs2);

    Vec h(n, 0.0);
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      const auto& tri = mesh.triangles[t];
      auto ke = element_stiffness(element_geo_[t]);
      double kphu = bilinear(ke, p_hat, state_u_, tri);
      if (mode == HessianMode::full) {
        double kpu = bilinear(ke, adjoint_p_, state_u_, tri);
        double kpuh = bilinear(ke, adjoint_p_, u_hat, tri);
        for (int i = 0; i < 3; ++i) {
          double em3 = std::exp(m[tri[i]]) / 3.0;
          h[tri[i]] += em3 * (dir[tri[i]] * kpu + kphu + kpuh);
        }
      } else {
        for (int i = 0; i < 3; ++i) {
          h[tri[i]] += std::exp(m[tri[i]]) / 3.0 * kphu;
        }
      }
    }
    return h;
  }

 private:
  static double bilinear(const std::array<std::array<double, 3>, 3>& ke, const Vec& a, const Vec& b,
                         const std::array<int, 3>& tri) {
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        acc += a[tri[i]] * ke[i][j] * b[tri[j]];
      }
    }
    return acc;
  }

  /// out += scale · K'(dir)·w, with K'(dir) = Σ_e (Σ_{i∈e} e^{m_i} dir_i / 3) K_e.
  void add_dstiffness_action(std::span<const double> m, std::span<const double> dir, const Vec& w,
                             Vec& out, double scale) const {
    const Mesh& mesh = space_->mesh();
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      const auto& tri = mesh.triangles[t];
      auto ke = element_stiffness(element_geo_[t]);
      double dsigma = 0.0;
      for (int i = 0; i < 3; ++i) dsigma += std::exp(m[tri[i]]) * dir[tri[i]] / 3.0;
      for (int i = 0; i < 3; ++i) {
        double kw = 0.0;
        for (int j = 0; j < 3; ++j) kw += ke[i][j] * w[tri[j]];
        out[tri[i]] += scale * dsigma * kw;
      }
    }
  }

  bool same_m(std::span<const double> m) const {
    if (cached_m_.size() != m.size()) return false;
    for (size_t i = 0; i < m.size(); ++i) {
      if (cached_m_[i] != m[i]) return false;
    }
    return true;
  }

  void ensure_factorization(std::span<const double> m) {
    if (static_cast<int>(m.size()) != space_->n_vertices()) {
      throw std::invalid_argument("EitModel: parameter size mismatch");
    }
    if (factorization_ && same_m(m)) return;
    Vec sigma(m.size());
    for (size_t i = 0; i < m.size(); ++i) {
      if (!std::isfinite(m[i])) throw std::invalid_argument("EitModel: non-finite parameter");
      sigma[i] = std::exp(m[i]);
    }
    SparseOperator k = assemble_stiffness(space_->mesh(), sigma, /*require_positive=*/true);
    factorization_ = std::make_unique<FactorizedOperator>(k, std::vector<int>{spec_.ground_node});
    cached_m_.assign(m.begin(), m.end());
    state_valid_ = false;
  }

  std::shared_ptr<const FemSpace> space_;
  SourceSpec spec_;
  SparseOperator boundary_mass_;
  std::vector<int> support_;
  Vec neumann_rhs_;
  Vec data_;
  std::vector<ElementGeometry> element_geo_;

  // cache at the last gradient point
  Vec cached_m_;
  std::unique_ptr<FactorizedOperator> factorization_;
  Vec state_u_;
  Vec adjoint_p_;
  bool state_valid_ = false;
};

}  // namespace cadmm
