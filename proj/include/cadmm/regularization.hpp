#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "cadmm/fem_space.hpp"

namespace cadmm {

/// Smoothed total variation plus Tikhonov:
///   alpha_tv ∫ |∇(m - m_ref)|_eps dx + (alpha_tk/2) ∫ (m - m_ref)² dx
/// with |g|_eps = sqrt(gᵀg + eps). An empty m_ref means zero reference.
struct TvSettings {
  double alpha_tv = 0.1;
  double alpha_tk = 0.01;
  double eps = 1e-4;
  Vec m_ref;

  void validate() const {
    if (!(eps > 0.0)) throw std::invalid_argument("TvSettings: eps must be positive");
    if (alpha_tv < 0.0 || alpha_tk < 0.0) throw std::invalid_argument("TvSettings: negative weight");
  }
};

namespace detail {

inline void check_tv_sizes(const FemSpace& space, std::span<const double> m, const TvSettings& s) {
  s.validate();
  if (static_cast<int>(m.size()) != space.n_vertices()) {
    throw std::invalid_argument("tv: field size does not match space");
  }
  if (!s.m_ref.empty() && s.m_ref.size() != m.size()) {
    throw std::invalid_argument("tv: m_ref size does not match field");
  }
}

inline double ref(const TvSettings& s, int i) { return s.m_ref.empty() ? 0.0 : s.m_ref[i]; }

}  // namespace detail

inline double tv_eval(const FemSpace& space, std::span<const double> m, const TvSettings& s) {
  detail::check_tv_sizes(space, m, s);
  const Mesh& mesh = space.mesh();
  double tv = 0.0;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    auto g = element_geometry(mesh, t);
    const auto& tri = mesh.triangles[t];
    double gx = 0.0, gy = 0.0;
    for (int k = 0; k < 3; ++k) {
      double w = m[tri[k]] - detail::ref(s, tri[k]);
      gx += w * g.grad[k][0];
      gy += w * g.grad[k][1];
    }
    tv += g.area * std::sqrt(gx * gx + gy * gy + s.eps);
  }
  double quad = 0.0;
  if (s.alpha_tk != 0.0) {
    Vec w(m.size());
    for (size_t i = 0; i < m.size(); ++i) w[i] = m[i] - detail::ref(s, static_cast<int>(i));
    quad = 0.5 * space.mass().quad(w, w);
  }
  return s.alpha_tv * tv + s.alpha_tk * quad;
}

/// Assembled Gateaux derivative: gᵀv = d/dτ tv_eval(m + τv)|₀.
inline Vec tv_gradient(const FemSpace& space, std::span<const double> m, const TvSettings& s) {
  detail::check_tv_sizes(space, m, s);
  const Mesh& mesh = space.mesh();
  Vec out(m.size(), 0.0);
  if (s.alpha_tv != 0.0) {
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      auto g = element_geometry(mesh, t);
      const auto& tri = mesh.triangles[t];
      double gx = 0.0, gy = 0.0;
      for (int k = 0; k < 3; ++k) {
        double w = m[tri[k]] - detail::ref(s, tri[k]);
        gx += w * g.grad[k][0];
        gy += w * g.grad[k][1];
      }
      double denom = std::sqrt(gx * gx + gy * gy + s.eps);
      for (int k = 0; k < 3; ++k) {
        out[tri[k]] += s.alpha_tv * g.area * (gx * g.grad[k][0] + gy * g.grad[k][1]) / denom;
      }
    }
  }
  if (s.alpha_tk != 0.0) {
    Vec w(m.size());
    for (size_t i = 0; i < m.size(); ++i) w[i] = m[i] - detail::ref(s, static_cast<int>(i));
    Vec mw = space.mass().apply(w);
    for (size_t i = 0; i < m.size(); ++i) out[i] += s.alpha_tk * mw[i];
  }
  return out;
}

/// Exact second derivative (anisotropic term included) applied to dir.
inline Vec tv_hessian_action(const FemSpace& space, std::span<const double> m,
                             std::span<const double> dir, const TvSettings& s) {
  detail::check_tv_sizes(space, m, s);
  if (dir.size() != m.size()) throw std::invalid_argument("tv_hessian_action: direction size mismatch");
  const Mesh& mesh = space.mesh();
  Vec out(m.size(), 0.0);
  if (s.alpha_tv != 0.0) {
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      auto g = element_geometry(mesh, t);
      const auto& tri = mesh.triangles[t];
      double gx = 0.0, gy = 0.0, hx = 0.0, hy = 0.0;
      for (int k = 0; k < 3; ++k) {
        double w = m[tri[k]] - detail::ref(s, tri[k]);
        gx += w * g.grad[k][0];
        gy += w * g.grad[k][1];
        hx += dir[tri[k]] * g.grad[k][0];
        hy += dir[tri[k]] * g.grad[k][1];
      }
      double s1 = std::sqrt(gx * gx + gy * gy + s.eps);
      double s3 = s1 * s1 * s1;
      double gh = gx * hx + gy * hy;
      for (int k = 0; k < 3; ++k) {
        double gi = gx * g.grad[k][0] + gy * g.grad[k][1];
        double hi = hx * g.grad[k][0] + hy * g.grad[k][1];
        out[tri[k]] += s.alpha_tv * g.area * (hi / s1 - gi * gh / s3);
      }
    }
  }
  if (s.alpha_tk != 0.0) {
    Vec mv = space.mass().apply(dir);
    for (size_t i = 0; i < m.size(); ++i) out[i] += s.alpha_tk * mv[i];
  }
  return out;
}

/// Same second derivative assembled as a sparse operator (sparsity of the
/// unit stiffness); used by the Newton consensus update.
inline SparseOperator tv_hessian_matrix(const FemSpace& space, std::span<const double> m,
                                        const TvSettings& s) {
  detail::check_tv_sizes(space, m, s);
  const Mesh& mesh = space.mesh();
  std::vector<std::tuple<int, int, double>> trips;
  trips.reserve(9 * mesh.n_triangles());
  if (s.alpha_tv != 0.0) {
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      auto g = element_geometry(mesh, t);
      const auto& tri = mesh.triangles[t];
      double gx = 0.0, gy = 0.0;
      for (int k = 0; k < 3; ++k) {
        double w = m[tri[k]] - detail::ref(s, tri[k]);
        gx += w * g.grad[k][0];
        gy += w * g.grad[k][1];
      }
      double s1 = std::sqrt(gx * gx + gy * gy + s.eps);
      double s3 = s1 * s1 * s1;
      for (int i = 0; i < 3; ++i) {
        double gi = gx * g.grad[i][0] + gy * g.grad[i][1];
        for (int j = 0; j < 3; ++j) {
          double gj = gx * g.grad[j][0] + gy * g.grad[j][1];
          double dd = g.grad[i][0] * g.grad[j][0] + g.grad[i][1] * g.grad[j][1];
          trips.emplace_back(tri[i], tri[j], s.alpha_tv * g.area * (dd / s1 - gi * gj / s3));
        }
      }
    }
  }
  SparseOperator tv = SparseOperator::from_triplets(space.n_vertices(), trips);
  if (s.alpha_tk != 0.0) {
    return SparseOperator::sum(tv, 1.0, space.mass(), s.alpha_tk);
  }
  return tv;
}

/// Composite qPACT regularizer on the stacked triple (s, c_thb, mus'):
///   gamma_s‖∇s‖² + delta_s‖s‖²
/// + gamma_cthb ∫|∇c_thb|_eps + delta_cthb ∫|c_thb|_eps
/// + gamma_mus‖∇mus'‖² + delta_mus‖mus'‖²
/// Quadratic terms carry no 1/2; the |·|_eps value penalty is integrated
/// with mass-lumped nodal quadrature.
struct QpactRegSettings {
  double gamma_s = 0.05;
  double delta_s = 0.001;
  double gamma_cthb = 0.005;
  double delta_cthb = 1e-6;
  double gamma_mus = 10.0;
  double delta_mus = 10.0;
  double eps = 1e-6;

  void validate() const {
    if (!(eps > 0.0)) throw std::invalid_argument("QpactRegSettings: eps must be positive");
    for (double v : {gamma_s, delta_s, gamma_cthb, delta_cthb, gamma_mus, delta_mus}) {
      if (v < 0.0) throw std::invalid_argument("QpactRegSettings: negative weight");
    }
  }
};

namespace detail {

inline Vec lumped_mass(const FemSpace& space) {
  Vec ones(space.n_vertices(), 1.0);
  return space.mass().apply(ones);
}

// quadratic H1-type block: gamma xᵀK₁x + delta xᵀMx (no 1/2)
inline double quad_block_eval(const FemSpace& sp, std::span<const double> x, double gamma, double delta) {
  return gamma * sp.stiffness_unit().quad(x, x) + delta * sp.mass().quad(x, x);
}

}  // namespace detail

inline double qpact_reg_eval(const FemSpace& space, std::span<const double> x,
                             const QpactRegSettings& s) {
  s.validate();
  const int n = space.n_vertices();
  if (static_cast<int>(x.size()) != 3 * n) throw std::invalid_argument("qpact_reg: expected 3 blocks");
  auto sb = x.subspan(0, n);
  auto cb = x.subspan(n, n);
  auto mb = x.subspan(2 * n, n);
  double val = detail::quad_block_eval(space, sb, s.gamma_s, s.delta_s) +
               detail::quad_block_eval(space, mb, s.gamma_mus, s.delta_mus);
  TvSettings tv{s.gamma_cthb, 0.0, s.eps, {}};
  val += tv_eval(space, cb, tv);
  Vec lumped = detail::lumped_mass(space);
  for (int i = 0; i < n; ++i) {
    val += s.delta_cthb * lumped[i] * std::sqrt(cb[i] * cb[i] + s.eps);
  }
  return val;
}

inline Vec qpact_reg_gradient(const FemSpace& space, std::span<const double> x,
                              const QpactRegSettings& s) {
  s.validate();
  const int n = space.n_vertices();
  if (static_cast<int>(x.size()) != 3 * n) throw std::invalid_argument("qpact_reg: expected 3 blocks");
  Vec out(3 * n, 0.0);
  auto add_quad = [&](int off, double gamma, double delta) {
    Vec kx = space.stiffness_unit().apply(x.subspan(off, n));
    Vec mx = space.mass().apply(x.subspan(off, n));
    for (int i = 0; i < n; ++i) out[off + i] += 2.0 * gamma * kx[i] + 2.0 * delta * mx[i];
  };
  add_quad(0, s.gamma_s, s.delta_s);
  add_quad(2 * n, s.gamma_mus, s.delta_mus);
  TvSettings tv{s.gamma_cthb, 0.0, s.eps, {}};
  Vec gtv = tv_gradient(space, x.subspan(n, n), tv);
  Vec lumped = detail::lumped_mass(space);
  for (int i = 0; i < n; ++i) {
    double c = x[n + i];
    out[n + i] += gtv[i] + s.delta_cthb * lumped[i] * c / std::sqrt(c * c + s.eps);
  }
  return out;
}

inline Vec qpact_reg_hessian_action(const FemSpace& space, std::span<const double> x,
                                    std::span<const double> v, const QpactRegSettings& s) {
  s.validate();
  const int n = space.n_vertices();
  if (static_cast<int>(x.size()) != 3 * n || v.size() != x.size()) {
    throw std::invalid_argument("qpact_reg: expected 3 blocks");
  }
  Vec out(3 * n, 0.0);
  auto add_quad = [&](int off, double gamma, double delta) {
    Vec kv = space.stiffness_unit().apply(v.subspan(off, n));
    Vec mv = space.mass().apply(v.subspan(off, n));
    for (int i = 0; i < n; ++i) out[off + i] += 2.0 * gamma * kv[i] + 2.0 * delta * mv[i];
  };
  add_quad(0, s.gamma_s, s.delta_s);
  add_quad(2 * n, s.gamma_mus, s.delta_mus);
  TvSettings tv{s.gamma_cthb, 0.0, s.eps, {}};
  Vec htv = tv_hessian_action(space, x.subspan(n, n), v.subspan(n, n), tv);
  Vec lumped = detail::lumped_mass(space);
  for (int i = 0; i < n; ++i) {
    double c = x[n + i];
    double se = std::sqrt(c * c + s.eps);
    out[n + i] += htv[i] + s.delta_cthb * lumped[i] * s.eps / (se * se * se) * v[n + i];
  }
  return out;
}

inline SparseOperator qpact_reg_hessian_matrix(const FemSpace& space, std::span<const double> x,
                                               const QpactRegSettings& s) {
  s.validate();
  const int n = space.n_vertices();
  if (static_cast<int>(x.size()) != 3 * n) throw std::invalid_argument("qpact_reg: expected 3 blocks");
  auto quad_block = [&](double gamma, double delta) {
    return SparseOperator::sum(space.stiffness_unit(), 2.0 * gamma, space.mass(), 2.0 * delta);
  };
  SparseOperator sblock = quad_block(s.gamma_s, s.delta_s);
  SparseOperator mblock = quad_block(s.gamma_mus, s.delta_mus);
  TvSettings tv{s.gamma_cthb, 0.0, s.eps, {}};
  SparseOperator ctv = tv_hessian_matrix(space, x.subspan(n, n), tv);
  Vec lumped = detail::lumped_mass(space);
  std::vector<std::tuple<int, int, double>> diag;
  diag.reserve(n);
  for (int i = 0; i < n; ++i) {
    double c = x[n + i];
    double se = std::sqrt(c * c + s.eps);
    diag.emplace_back(i, i, s.delta_cthb * lumped[i] * s.eps / (se * se * se));
  }
  SparseOperator cblock =
      SparseOperator::sum(ctv, 1.0, SparseOperator::from_triplets(n, diag), 1.0);
  return SparseOperator::block_diagonal({&sblock, &cblock, &mblock});
}

/// Interface consumed by the consensus update and the monolithic
/// objective; implementations are stateless over immutable inputs.
class Regularizer {
 public:
  virtual ~Regularizer() = default;
  virtual const FemSpace& space() const = 0;
  virtual int blocks() const = 0;
  int dim() const { return blocks() * space().n_vertices(); }
  virtual double eval(std::span<const double> x) const = 0;
  virtual Vec gradient(std::span<const double> x) const = 0;
  virtual Vec hessian_action(std::span<const double> x, std::span<const double> v) const = 0;
  virtual SparseOperator hessian_matrix(std::span<const double> x) const = 0;
};

class TvRegularizer final : public Regularizer {
 public:
  TvRegularizer(std::shared_ptr<const FemSpace> space, TvSettings settings)
      : space_(std::move(space)), settings_(std::move(settings)) {
    settings_.validate();
  }

  const FemSpace& space() const override { return *space_; }
  int blocks() const override { return 1; }
  const TvSettings& settings() const { return settings_; }
  double eval(std::span<const double> x) const override { return tv_eval(*space_, x, settings_); }
  Vec gradient(std::span<const double> x) const override { return tv_gradient(*space_, x, settings_); }
  Vec hessian_action(std::span<const double> x, std::span<const double> v) const override {
    return tv_hessian_action(*space_, x, v, settings_);
  }
  SparseOperator hessian_matrix(std::span<const double> x) const override {
    return tv_hessian_matrix(*space_, x, settings_);
  }

 private:
  std::shared_ptr<const FemSpace> space_;
  TvSettings settings_;
};

class QpactRegularizer final : public Regularizer {
 public:
  QpactRegularizer(std::shared_ptr<const FemSpace> space, QpactRegSettings settings)
      : space_(std::move(space)), settings_(settings) {
    settings_.validate();
  }

  const FemSpace& space() const override { return *space_; }
  int blocks() const override { return 3; }
  const QpactRegSettings& settings() const { return settings_; }
  double eval(std::span<const double> x) const override { return qpact_reg_eval(*space_, x, settings_); }
  Vec gradient(std::span<const double> x) const override {
    return qpact_reg_gradient(*space_, x, settings_);
  }
  Vec hessian_action(std::span<const double> x, std::span<const double> v) const override {
    return qpact_reg_hessian_action(*space_, x, v, settings_);
  }
  SparseOperator hessian_matrix(std::span<const double> x) const override {
    return qpact_reg_hessian_matrix(*space_, x, settings_);
  }

 private:
  std::shared_ptr<const FemSpace> space_;
  QpactRegSettings settings_;
};

}  // namespace cadmm
