#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cadmm/incg.hpp"
#include "cadmm/model.hpp"
#include "cadmm/parallel.hpp"
#include "cadmm/regularization.hpp"

namespace cadmm {

struct ZSolverSettings {
  double grad_abs_tol = 1e-12;
  double grad_rel_tol = 1e-9;
  int max_iter = 10;
};

struct AdmmSettings {
  double rho0 = 0.1;
  double mu = 2.0;
  double tau = 3.0;
  double eps_abs = 1e-5;
  double eps_rel = 2e-2;
  int max_global_iter = 10;
  NormKind consensus_norm = NormKind::H1;
  IncgSettings subproblem;  // subproblem.max_iter caps the inexactness
  ZSolverSettings z_solver;
  int workers = 0;  // 0: one worker per model

  void validate() const {
    if (!(rho0 > 0.0)) throw std::invalid_argument("AdmmSettings: rho0 must be positive");
    if (!(mu > 1.0) || !(tau > 1.0)) throw std::invalid_argument("AdmmSettings: mu, tau must exceed 1");
    if (!(eps_abs > 0.0) || !(eps_rel > 0.0)) {
      throw std::invalid_argument("AdmmSettings: tolerances must be positive");
    }
    if (max_global_iter < 1) throw std::invalid_argument("AdmmSettings: max_global_iter must be >= 1");
    subproblem.validate();
  }
};

struct AdmmIterationRecord {
  int k = 0;
  double rho = 0.0;  // penalty used for this iteration's updates
  double r_norm = 0.0;
  double s_norm = 0.0;
  double cost = 0.0;       // split objective (1/q)Σ L_i(m_i) + R(z)
  double rel_error = -1.0; // against the truth, when known
  SolveCounters counters;  // cumulative over the run so far
  int subproblem_failures = 0;
  bool z_newton_converged = true;
};

struct AdmmState {
  std::vector<Vec> m;  // per-model parameters, physical variables
  Vec z;               // consensus
  std::vector<Vec> u;  // scaled duals y/rho
  double rho = 0.0;
  int k = 0;
  bool converged = false;
  std::vector<AdmmIterationRecord> history;
  std::vector<std::string> errors;
};

/// Split-form subproblem objective in optimizer coordinates x:
///   (1/q) L_i(T(x)) + (rho/2q) ‖T(x) − (z − u_i)‖²_G
class AdmmSubproblemObjective final : public Objective {
 public:
  AdmmSubproblemObjective(InversionModel& model, const ProductGram& gram, Vec offset, double rho,
                          int q)
      : model_(model), gram_(gram), offset_(std::move(offset)), rho_(rho), q_(q) {}

  double cost(const Vec& x) override {
    Vec m = model_.transform().to_physical(x);
    Vec d = diff(m);
    return model_.misfit(m) / q_ + 0.5 * rho_ / q_ * gram_.dot(d, d);
  }

  Vec gradient(const Vec& x) override {
    const Transform& tr = model_.transform();
    Vec m = tr.to_physical(x);
    Vec g = model_.misfit_gradient(m);
    Vec pen = gram_.apply(diff(m));
    for (size_t i = 0; i < g.size(); ++i) g[i] = g[i] / q_ + rho_ / q_ * pen[i];
    if (!tr.is_identity()) {
      last_x_ = x;
      last_phys_grad_ = g;
      Vec jac = tr.jacobian_diag(x);
      for (size_t i = 0; i < g.size(); ++i) g[i] *= jac[i];
    }
    return g;
  }

  Vec hessian_action(const Vec& x, const Vec& dir, HessianMode mode) override {
    const Transform& tr = model_.transform();
    if (tr.is_identity()) {
      Vec h = model_.misfit_hessian_action(x, dir, mode);
      Vec pen = gram_.apply(dir);
      for (size_t i = 0; i < h.size(); ++i) h[i] = h[i] / q_ + rho_ / q_ * pen[i];
      return h;
    }
    Vec m = tr.to_physical(x);
    Vec jac = tr.jacobian_diag(x);
    Vec md(dir.size());
    for (size_t i = 0; i < dir.size(); ++i) md[i] = jac[i] * dir[i];
    Vec h = model_.misfit_hessian_action(m, md, mode);
    Vec pen = gram_.apply(md);
    for (size_t i = 0; i < h.size(); ++i) h[i] = (h[i] / q_ + rho_ / q_ * pen[i]) * jac[i];
    if (mode == HessianMode::full) {
      if (last_x_ != x) {
        throw std::logic_error("AdmmSubproblemObjective: gradient not cached at this point");
      }
      Vec curv = tr.curvature_diag(x);
      for (size_t i = 0; i < h.size(); ++i) h[i] += curv[i] * last_phys_grad_[i] * dir[i];
    }
    return h;
  }

  SolveCounters counters() const override { return model_.counters(); }

 private:
  Vec diff(const Vec& m) const {
    Vec d(m.size());
    for (size_t i = 0; i < m.size(); ++i) d[i] = m[i] - offset_[i];
    return d;
  }

  InversionModel& model_;
  const ProductGram& gram_;
  Vec offset_;  // z − u_i
  double rho_;
  int q_;
  Vec last_x_;
  Vec last_phys_grad_;
};

/// Approximately minimizes (1/2q)‖f_i(m) − d_i‖² + (rho/2q)‖m − z + u_i‖²_G
/// with INCG, warm-started at `warm` (physical variables). Returns the
/// physical iterate; `info` receives the INCG diagnostics when non-null.
inline Vec admm_subproblem_solve(InversionModel& model, const ProductGram& gram, const Vec& z,
                                 const Vec& u, double rho, int q, const IncgSettings& settings,
                                 const Vec& warm, IncgResult* info = nullptr) {
  Vec offset(z.size());
  for (size_t i = 0; i < z.size(); ++i) offset[i] = z[i] - u[i];
  AdmmSubproblemObjective objective(model, gram, std::move(offset), rho, q);
  Vec x0 = model.transform().to_optimizer(warm);
  IncgResult result = incg_solve(objective, gram, x0, settings);
  Vec m = model.transform().to_physical(result.x);
  if (info) *info = std::move(result);
  return m;
}

struct ZUpdateResult {
  Vec z;
  bool converged = false;
  int iterations = 0;
  double final_grad_norm = 0.0;
};

/// Consensus update: minimizes R(z) + (rho/2)‖m̄ + ū − z‖²_G by damped
/// Newton with the assembled regularizer Hessian, to the z-solver gradient
/// tolerances. Nonconvergence returns the best iterate with a warning flag.
inline ZUpdateResult admm_z_update(const Regularizer& reg, const ProductGram& gram, const Vec& m_bar,
                                   const Vec& u_bar, double rho, const ZSolverSettings& settings,
                                   const Vec& warm) {
  const int dim = gram.dim();
  if (static_cast<int>(m_bar.size()) != dim || static_cast<int>(u_bar.size()) != dim) {
    throw std::invalid_argument("admm_z_update: dimension mismatch");
  }
  Vec target(dim);
  for (int i = 0; i < dim; ++i) target[i] = m_bar[i] + u_bar[i];

  auto value = [&](const Vec& z) {
    Vec d(dim);
    for (int i = 0; i < dim; ++i) d[i] = target[i] - z[i];
    return reg.eval(z) + 0.5 * rho * gram.dot(d, d);
  };
  auto grad = [&](const Vec& z) {
    Vec g = reg.gradient(z);
    Vec d(dim);
    for (int i = 0; i < dim; ++i) d[i] = z[i] - target[i];
    Vec pen = gram.apply(d);
    for (int i = 0; i < dim; ++i) g[i] += rho * pen[i];
    return g;
  };

  std::vector<const SparseOperator*> gram_blocks(gram.blocks(), &gram.block());
  SparseOperator gram_full = SparseOperator::block_diagonal(gram_blocks);

  ZUpdateResult out;
  out.z = warm;
  double g0 = -1.0;
  double fz = value(out.z);
  for (int it = 0; it < settings.max_iter; ++it) {
    Vec g = grad(out.z);
    double gnorm = gram.dual_norm(g);
    out.final_grad_norm = gnorm;
    if (it == 0) g0 = gnorm;
    if (gnorm <= settings.grad_abs_tol || gnorm <= settings.grad_rel_tol * g0) {
      out.converged = true;
      break;
    }
    SparseOperator hess = SparseOperator::sum(reg.hessian_matrix(out.z), 1.0, gram_full, rho);
    Vec rhs(dim);
    for (int i = 0; i < dim; ++i) rhs[i] = -g[i];
    Vec step = FactorizedOperator(hess).solve(rhs);
    double gd = 0.0;
    for (int i = 0; i < dim; ++i) gd += g[i] * step[i];
    double alpha = 1.0;
    bool accepted = false;
    for (int j = 0; j < 40; ++j) {
      Vec trial(dim);
      for (int i = 0; i < dim; ++i) trial[i] = out.z[i] + alpha * step[i];
      double ft = value(trial);
      if (ft <= fz + 1e-4 * alpha * gd) {
        out.z = std::move(trial);
        fz = ft;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++out.iterations;
    if (!accepted) break;  // numerically flat; report best iterate
  }
  return out;
}

/// Primal and dual residual norms in the consensus norm:
///   r = sqrt((1/q) Σ_i ‖m_i − z‖²),  s = rho ‖z − z_prev‖.
inline std::pair<double, double> admm_residuals(const std::vector<Vec>& m, const Vec& z,
                                                const Vec& z_prev, double rho,
                                                const ProductGram& gram) {
  const int q = static_cast<int>(m.size());
  double r2 = 0.0;
  Vec d(z.size());
  for (const auto& mi : m) {
    for (size_t i = 0; i < z.size(); ++i) d[i] = mi[i] - z[i];
    r2 += gram.dot(d, d);
  }
  for (size_t i = 0; i < z.size(); ++i) d[i] = z[i] - z_prev[i];
  double s = rho * gram.norm(d);
  return {std::sqrt(r2 / q), s};
}

/// Adaptive penalty: grow by tau when the primal residual dominates,
/// shrink by tau when the dual residual dominates. Returns the new rho and
/// the factor rho_old/rho_new by which scaled duals must be multiplied.
inline std::pair<double, double> update_rho(double rho, double r_norm, double s_norm, double mu,
                                            double tau) {
  double next = rho;
  if (r_norm > mu * s_norm) {
    next = tau * rho;
  } else if (s_norm > mu * r_norm) {
    next = rho / tau;
  }
  return {next, rho / next};
}

/// Gradient-free stopping test:
///   ‖r‖ ≤ eps_abs + eps_rel·‖m‖ and ‖s‖ ≤ eps_abs + eps_rel·‖z‖.
inline bool admm_check_convergence(double r_norm, double s_norm, double m_norm, double z_norm,
                                   double eps_abs, double eps_rel) {
  return r_norm <= eps_abs + eps_rel * m_norm && s_norm <= eps_abs + eps_rel * z_norm;
}

/// Scaled consensus ADMM with the mean-based consensus update. Subproblem
/// solves within one iteration are independent and run on `workers`
/// threads; the coordinator alone appends history. Results do not depend
/// on worker scheduling.
inline AdmmState admm_run(const std::vector<InversionModel*>& models, const Regularizer& reg,
                          const AdmmSettings& settings, const ProductGram& gram, const Vec& m0,
                          const Vec* truth = nullptr) {
  settings.validate();
  const int q = static_cast<int>(models.size());
  if (q < 1) throw std::invalid_argument("admm_run: need at least one model");
  const int dim = gram.dim();
  if (static_cast<int>(m0.size()) != dim) throw std::invalid_argument("admm_run: m0 dimension mismatch");
  for (auto* model : models) {
    if (model->dim() != dim) throw std::invalid_argument("admm_run: model dimension mismatch");
  }

  AdmmState state;
  state.m.assign(q, m0);
  state.z = m0;
  state.u.assign(q, Vec(dim, 0.0));
  state.rho = settings.rho0;

  const int workers = settings.workers > 0 ? settings.workers : q;
  Vec truth_diff(dim);

  for (int k = 1; k <= settings.max_global_iter; ++k) {
    AdmmIterationRecord rec;
    rec.k = k;
    rec.rho = state.rho;

    // local inversion subproblems (parallel, no shared mutable state)
    std::vector<Vec> offsets(q);
    std::vector<IncgResult> infos(q);
    std::vector<std::string> failures(q);
    for (int i = 0; i < q; ++i) {
      offsets[i].resize(dim);
      for (int j = 0; j < dim; ++j) offsets[i][j] = state.z[j] - state.u[i][j];
    }
    parallel_for(q, workers, [&](int i) {
      try {
        state.m[i] = admm_subproblem_solve(*models[i], gram, state.z, state.u[i], state.rho, q,
                                           settings.subproblem, state.m[i], &infos[i]);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    });
    double misfit_sum = 0.0;
    for (int i = 0; i < q; ++i) {
      if (!failures[i].empty()) {
        ++rec.subproblem_failures;
        state.errors.push_back("iteration " + std::to_string(k) + ", model " + std::to_string(i) +
                               ": " + failures[i]);
        continue;
      }
      // recover L_i(m_i) from the split objective without extra solves
      Vec d(dim);
      for (int j = 0; j < dim; ++j) d[j] = state.m[i][j] - offsets[i][j];
      double penalty = 0.5 * state.rho / q * gram.dot(d, d);
      misfit_sum += q * (infos[i].cost_history.back() - penalty);
    }
    if (rec.subproblem_failures == q) {
      throw SolverError("admm_run: every subproblem failed at iteration " + std::to_string(k));
    }

    // mean-based consensus update
    Vec m_bar(dim, 0.0), u_bar(dim, 0.0);
    for (int i = 0; i < q; ++i) {
      for (int j = 0; j < dim; ++j) {
        m_bar[j] += state.m[i][j] / q;
        u_bar[j] += state.u[i][j] / q;
      }
    }
    Vec z_prev = state.z;
    ZUpdateResult zres =
        admm_z_update(reg, gram, m_bar, u_bar, state.rho, settings.z_solver, state.z);
    state.z = zres.z;
    rec.z_newton_converged = zres.converged;

    // scaled dual ascent
    for (int i = 0; i < q; ++i) {
      for (int j = 0; j < dim; ++j) state.u[i][j] += state.m[i][j] - state.z[j];
    }

    auto [r_norm, s_norm] = admm_residuals(state.m, state.z, z_prev, state.rho, gram);
    rec.r_norm = r_norm;
    rec.s_norm = s_norm;
    rec.cost = misfit_sum / q + reg.eval(state.z);
    if (truth) {
      // relative L2 error of the consensus, stacked over blocks
      for (int j = 0; j < dim; ++j) truth_diff[j] = (*truth)[j] - state.z[j];
      double num = 0.0, den = 0.0;
      const int n = gram.space().n_vertices();
      for (int b = 0; b < gram.blocks(); ++b) {
        auto db = std::span<const double>(truth_diff).subspan(b * n, n);
        auto tb = std::span<const double>(*truth).subspan(b * n, n);
        num += gram.space().mass().quad(db, db);
        den += gram.space().mass().quad(tb, tb);
      }
      rec.rel_error = std::sqrt(num / den);
    }
    for (auto* model : models) rec.counters += model->counters();
    state.history.push_back(rec);
    state.k = k;

    double m_norm2 = 0.0;
    for (const auto& mi : state.m) m_norm2 += gram.dot(mi, mi);
    double m_norm = std::sqrt(m_norm2 / q);
    if (admm_check_convergence(r_norm, s_norm, m_norm, gram.norm(state.z), settings.eps_abs,
                               settings.eps_rel)) {
      state.converged = true;
      break;
    }
    auto [rho_next, rescale] = update_rho(state.rho, r_norm, s_norm, settings.mu, settings.tau);
    if (rescale != 1.0) {
      for (auto& ui : state.u) {
        for (double& v : ui) v *= rescale;
      }
    }
    state.rho = rho_next;
  }
  return state;
}

}  // namespace cadmm
