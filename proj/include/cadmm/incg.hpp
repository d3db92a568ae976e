#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cadmm/fem_space.hpp"
#include "cadmm/model.hpp"

namespace cadmm {

/// Minimization target for the inexact Newton-CG solver. Gradients are
/// assembled dual vectors: gᵀv is the directional derivative along v.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual double cost(const Vec& x) = 0;
  virtual Vec gradient(const Vec& x) = 0;
  virtual Vec hessian_action(const Vec& x, const Vec& dir, HessianMode mode) = 0;
  virtual SolveCounters counters() const { return {}; }
};

/// CG forcing term η = min(0.5, (‖g‖/‖g₀‖)^{1/2}).
inline double eisenstat_walker_forcing(double grad_norm, double grad_norm0) {
  if (!(grad_norm0 > 0.0)) {
    throw std::invalid_argument("eisenstat_walker_forcing: reference gradient norm must be positive");
  }
  return std::min(0.5, std::sqrt(grad_norm / grad_norm0));
}

struct IncgSettings {
  int max_iter = 20;
  double grad_abs_tol = 1e-9;
  double grad_rel_tol = 1e-6;
  int max_cg_iter = 100;
  double c_armijo = 1e-4;
  int max_backtrack = 10;
  HessianMode hessian_mode = HessianMode::full;
  /// Replaces the Eisenstat-Walker forcing with a fixed CG tolerance
  /// (used by tests that need near-exact Newton steps).
  std::optional<double> forcing_override;
  /// Re-verify the CG residual bound with one extra Hessian action.
  bool verify_cg_residual = false;

  void validate() const {
    if (!(grad_abs_tol > 0.0) || !(grad_rel_tol > 0.0)) {
      throw std::invalid_argument("IncgSettings: tolerances must be positive");
    }
    if (!(c_armijo > 0.0 && c_armijo < 0.5)) {
      throw std::invalid_argument("IncgSettings: c_armijo must lie in (0, 1/2)");
    }
    if (max_backtrack < 1) throw std::invalid_argument("IncgSettings: max_backtrack must be >= 1");
    if (max_iter < 0 || max_cg_iter < 1) throw std::invalid_argument("IncgSettings: bad iteration caps");
  }
};

struct ArmijoRecord {
  double alpha = 0.0;
  double gradient_dot_step = 0.0;  // gᵀm̂ at the accepted step
  double cost_before = 0.0;
  double cost_after = 0.0;
};

struct CgRecord {
  int iterations = 0;
  double forcing = 0.0;
  bool hit_tolerance = false;
  bool negative_curvature = false;
  double certified_ratio = -1.0;  // ‖H m̂ + g‖_{P⁻¹} / ‖g‖_{P⁻¹}, if verified
};

struct IncgResult {
  Vec x;
  bool converged = false;
  int iterations = 0;
  double final_grad_norm = 0.0;
  std::vector<double> cost_history;       // cost at start and each accepted step
  std::vector<double> grad_norm_history;  // dual norms at each outer iteration
  std::vector<int> cg_iteration_history;
  std::vector<ArmijoRecord> armijo_history;
  std::vector<CgRecord> cg_history;
  std::string diagnostic;
  SolveCounters counters;  // solves attributable to this run
};

/// Observer called once per outer iteration with the current iterate,
/// before the termination test; iter 0 is the starting point.
using IncgObserver = std::function<void(int iter, const Vec& x, double cost, double grad_norm)>;

namespace detail {

struct CgOutcome {
  Vec direction;
  CgRecord record;
};

/// Preconditioned CG on H d = −g in the gram inner product, stopped by the
/// forcing-term residual test ‖Hd + g‖_{P⁻¹} ≤ η ‖g‖_{P⁻¹}, the iteration
/// cap, or negative curvature (returns the current iterate, or the
/// preconditioned steepest-descent direction on a first-iteration hit).
inline CgOutcome incg_cg(Objective& obj, const Vec& x, const Vec& g, double g_dual_norm, double eta,
                         int max_cg_iter, HessianMode mode, const ProductGram& gram) {
  CgOutcome out;
  out.record.forcing = eta;
  const size_t n = g.size();
  Vec d(n, 0.0);
  Vec r(n);
  for (size_t i = 0; i < n; ++i) r[i] = -g[i];
  Vec z = gram.solve(r);
  double rz = 0.0;
  for (size_t i = 0; i < n; ++i) rz += r[i] * z[i];
  Vec p = z;
  const double target = eta * g_dual_norm;
  for (int k = 0; k < max_cg_iter; ++k) {
    Vec hp = obj.hessian_action(x, p, mode);
    double kappa = 0.0;
    for (size_t i = 0; i < n; ++i) kappa += p[i] * hp[i];
    if (!(kappa > 0.0)) {
      out.record.negative_curvature = true;
      if (k == 0) d = z;  // preconditioned steepest descent
      break;
    }
    double alpha = rz / kappa;
    for (size_t i = 0; i < n; ++i) {
      d[i] += alpha * p[i];
      r[i] -= alpha * hp[i];
    }
    z = gram.solve(r);
    double rz_next = 0.0;
    for (size_t i = 0; i < n; ++i) rz_next += r[i] * z[i];
    ++out.record.iterations;
    if (std::sqrt(std::max(0.0, rz_next)) <= target) {
      out.record.hit_tolerance = true;
      rz = rz_next;
      break;
    }
    double beta = rz_next / rz;
    rz = rz_next;
    for (size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  out.direction = std::move(d);
  return out;
}

}  // namespace detail

/// Inexact Newton-CG: Eisenstat-Walker forced CG on the Hessian action,
/// Armijo backtracking with halving, termination on
/// ‖g‖ ≤ grad_abs_tol + grad_rel_tol·‖g₀‖ in the dual norm of `gram`.
inline IncgResult incg_solve(Objective& obj, const ProductGram& gram, const Vec& x0,
                             const IncgSettings& settings, const IncgObserver& observer = {}) {
  settings.validate();
  if (static_cast<int>(x0.size()) != gram.dim()) {
    throw std::invalid_argument("incg_solve: x0 dimension does not match gram");
  }
  SolveCounters at_start = obj.counters();
  IncgResult result;
  result.x = x0;
  double cost = obj.cost(result.x);
  result.cost_history.push_back(cost);

  double g0_norm = -1.0;
  double tol = 0.0;
  for (int iter = 0; iter < settings.max_iter; ++iter) {
    Vec g = obj.gradient(result.x);
    double g_norm = gram.dual_norm(g);
    result.grad_norm_history.push_back(g_norm);
    result.final_grad_norm = g_norm;
    if (iter == 0) {
      g0_norm = g_norm;
      tol = settings.grad_abs_tol + settings.grad_rel_tol * g0_norm;
    }
    if (observer) observer(iter, result.x, cost, g_norm);
    if (g_norm <= tol) {
      result.converged = true;
      break;
    }

    double eta = settings.forcing_override ? *settings.forcing_override
                                           : eisenstat_walker_forcing(g_norm, g0_norm);
    auto cg = detail::incg_cg(obj, result.x, g, g_norm, eta, settings.max_cg_iter,
                              settings.hessian_mode, gram);
    Vec& step = cg.direction;
    if (settings.verify_cg_residual) {
      Vec hd = obj.hessian_action(result.x, step, settings.hessian_mode);
      for (size_t i = 0; i < hd.size(); ++i) hd[i] += g[i];
      cg.record.certified_ratio = gram.dual_norm(hd) / g_norm;
    }
    result.cg_iteration_history.push_back(cg.record.iterations);
    result.cg_history.push_back(cg.record);

    double gd = 0.0;
    for (size_t i = 0; i < g.size(); ++i) gd += g[i] * step[i];
    if (!(gd < 0.0)) {
      // CG returned a non-descent direction (stagnation at roundoff level);
      // fall back to preconditioned steepest descent
      step = gram.solve(g);
      for (double& v : step) v = -v;
      gd = 0.0;
      for (size_t i = 0; i < g.size(); ++i) gd += g[i] * step[i];
    }

    bool accepted = false;
    double alpha = 1.0;
    for (int j = 0; j < settings.max_backtrack; ++j) {
      Vec trial(result.x.size());
      for (size_t i = 0; i < trial.size(); ++i) trial[i] = result.x[i] + alpha * step[i];
      double trial_cost = obj.cost(trial);
      if (trial_cost < cost + alpha * settings.c_armijo * gd) {
        result.armijo_history.push_back({alpha, gd, cost, trial_cost});
        result.x = std::move(trial);
        cost = trial_cost;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      result.diagnostic = "backtracking exhausted " + std::to_string(settings.max_backtrack) +
                          " halvings at iteration " + std::to_string(iter);
      result.converged = false;
      result.counters = obj.counters() - at_start;
      return result;
    }
    result.cost_history.push_back(cost);
    result.iterations = iter + 1;
  }
  result.counters = obj.counters() - at_start;
  return result;
}

}  // namespace cadmm
