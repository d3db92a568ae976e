#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "cadmm/eit.hpp"
#include "cadmm/incg.hpp"
#include "cadmm/regularization.hpp"
#include "support/oracles.hpp"

using namespace cadmm;
using oracles::random_vec;
using oracles::rel_err_vec;

namespace {

std::shared_ptr<const FemSpace> disc_space(int level) {
  return std::make_shared<const FemSpace>(std::make_shared<const Mesh>(build_unit_disc_mesh(level)));
}

class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(SparseOperator a, Vec b) : a_(std::move(a)), b_(std::move(b)) {}
  double cost(const Vec& x) override { return 0.5 * a_.quad(x, x) - oracles::dot(b_, x); }
  Vec gradient(const Vec& x) override {
    Vec g = a_.apply(x);
    for (size_t i = 0; i < g.size(); ++i) g[i] -= b_[i];
    return g;
  }
  Vec hessian_action(const Vec&, const Vec& dir, HessianMode) override { return a_.apply(dir); }

 private:
  SparseOperator a_;
  Vec b_;
};

// coercive double-well-style objective with an indefinite Hessian near 0
class DoubleWellObjective final : public Objective {
 public:
  explicit DoubleWellObjective(int n) : n_(n) {}
  double cost(const Vec& x) override {
    double f = 0.0;
    for (int i = 0; i < n_; ++i) f += -0.5 * x[i] * x[i] + 0.25 * x[i] * x[i] * x[i] * x[i];
    return f;
  }
  Vec gradient(const Vec& x) override {
    Vec g(n_);
    for (int i = 0; i < n_; ++i) g[i] = -x[i] + x[i] * x[i] * x[i];
    return g;
  }
  Vec hessian_action(const Vec& x, const Vec& dir, HessianMode) override {
    Vec h(n_);
    for (int i = 0; i < n_; ++i) h[i] = (-1.0 + 3.0 * x[i] * x[i]) * dir[i];
    return h;
  }

 private:
  int n_;
};

// reports the negated true gradient, so every "descent" direction ascends
class LyingGradientObjective final : public Objective {
 public:
  double cost(const Vec& x) override { return oracles::dot(x, x); }
  Vec gradient(const Vec& x) override {
    Vec g(x.size());
    for (size_t i = 0; i < x.size(); ++i) g[i] = -2.0 * x[i];
    return g;
  }
  Vec hessian_action(const Vec&, const Vec& dir, HessianMode) override {
    Vec h(dir.size());
    for (size_t i = 0; i < dir.size(); ++i) h[i] = 2.0 * dir[i];
    return h;
  }
};

// EIT misfit plus smoothed TV, the q = 1 regularized inversion objective
class EitTvObjective final : public Objective {
 public:
  EitTvObjective(EitModel& model, TvSettings tv) : model_(model), tv_(std::move(tv)) {}
  double cost(const Vec& x) override { return model_.misfit(x) + tv_eval(model_.space(), x, tv_); }
  Vec gradient(const Vec& x) override {
    Vec g = model_.misfit_gradient(x);
    Vec r = tv_gradient(model_.space(), x, tv_);
    for (size_t i = 0; i < g.size(); ++i) g[i] += r[i];
    return g;
  }
  Vec hessian_action(const Vec& x, const Vec& dir, HessianMode mode) override {
    Vec h = model_.misfit_hessian_action(x, dir, mode);
    Vec r = tv_hessian_action(model_.space(), x, dir, tv_);
    for (size_t i = 0; i < h.size(); ++i) h[i] += r[i];
    return h;
  }
  SolveCounters counters() const override { return model_.counters(); }

 private:
  EitModel& model_;
  TvSettings tv_;
};

Vec smooth_bump(const FemSpace& space) {
  Vec m(space.n_vertices());
  for (int v = 0; v < space.n_vertices(); ++v) {
    double x = space.mesh().vertices[v][0], y = space.mesh().vertices[v][1];
    m[v] = 0.5 * std::exp(-((x - 0.2) * (x - 0.2) + y * y) / 0.1);
  }
  return m;
}

}  // namespace

TEST(EisenstatWalker, FormulaAndCap) {
  EXPECT_DOUBLE_EQ(eisenstat_walker_forcing(0.01, 1.0), 0.1);
  EXPECT_DOUBLE_EQ(eisenstat_walker_forcing(1.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(eisenstat_walker_forcing(1e-8, 1.0), 1e-4);
  EXPECT_THROW(eisenstat_walker_forcing(1.0, 0.0), std::invalid_argument);
}

TEST(IncgSettings, Validation) {
  IncgSettings s;
  EXPECT_NO_THROW(s.validate());
  s.c_armijo = 0.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.c_armijo = 1e-4;
  s.max_backtrack = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Incg, QuadraticConvergesInOneNewtonIteration) {
  auto space = disc_space(1);
  ProductGram gram(space, 1, NormKind::L2);
  SparseOperator a = SparseOperator::sum(space->stiffness_unit(), 1.0, space->mass(), 2.0);
  std::mt19937 rng(3);
  Vec b = random_vec(space->n_vertices(), rng);
  QuadraticObjective obj(a, b);

  IncgSettings s;
  s.max_iter = 10;
  s.max_cg_iter = 500;          // exact CG budget
  s.forcing_override = 1e-12;   // solve the Newton system to roundoff
  s.grad_abs_tol = 1e-10;
  s.grad_rel_tol = 1e-8;
  IncgResult r = incg_solve(obj, gram, Vec(space->n_vertices(), 0.0), s);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LE(r.final_grad_norm, s.grad_abs_tol + s.grad_rel_tol * r.grad_norm_history.front());
}

TEST(Incg, ConvergedImmediatelyAtMinimizer) {
  auto space = disc_space(1);
  ProductGram gram(space, 1, NormKind::L2);
  SparseOperator a = SparseOperator::sum(space->stiffness_unit(), 1.0, space->mass(), 2.0);
  Vec xstar(space->n_vertices(), 0.7);
  Vec b = a.apply(xstar);
  QuadraticObjective obj(a, b);
  IncgSettings s;
  IncgResult r = incg_solve(obj, gram, xstar, s);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 0);
}

TEST(Incg, NegativeCurvatureTruncationStillOptimizes) {
  auto space = disc_space(0);
  ProductGram gram(space, 1, NormKind::L2);
  DoubleWellObjective obj(space->n_vertices());
  std::mt19937 rng(5);
  Vec x0 = random_vec(space->n_vertices(), rng, 0.05);
  IncgSettings s;
  s.max_iter = 60;
  s.grad_abs_tol = 1e-10;
  s.grad_rel_tol = 1e-10;
  IncgResult r = incg_solve(obj, gram, x0, s);
  EXPECT_TRUE(r.converged);
  bool saw_negative = false;
  for (const auto& cg : r.cg_history) saw_negative |= cg.negative_curvature;
  EXPECT_TRUE(saw_negative);
  // minimizers have |x_i| = 1
  for (double v : r.x) EXPECT_NEAR(std::abs(v), 1.0, 1e-6);
}

TEST(Incg, BacktrackingFailureReturnsDiagnostic) {
  auto space = disc_space(0);
  ProductGram gram(space, 1, NormKind::L2);
  LyingGradientObjective obj;
  Vec x0(space->n_vertices(), 1.0);
  IncgSettings s;
  s.max_iter = 5;
  IncgResult r = incg_solve(obj, gram, x0, s);
  EXPECT_FALSE(r.converged);
  EXPECT_NE(r.diagnostic.find("backtracking"), std::string::npos);
}

TEST(Incg, EitTvRunSatisfiesCertificatesAndCounters) {
  auto space = disc_space(2);
  SourceSpec spec;
  spec.theta = M_PI / 2.0;
  EitModel model(space, spec);
  Vec truth = smooth_bump(*space);
  Vec obs = model.synth_observation(truth);
  for (int v : model.observation_support()) obs[v] += 2e-4 * std::sin(7.0 * v);
  model.set_data(obs);
  model.reset_counters();

  TvSettings tv{0.01, 0.1, 1e-2, {}};
  EitTvObjective obj(model, tv);
  ProductGram gram(space, 1, NormKind::H1);
  IncgSettings s;
  s.max_iter = 12;
  s.grad_abs_tol = 1e-10;
  s.grad_rel_tol = 1e-5;
  s.verify_cg_residual = true;
  IncgResult r = incg_solve(obj, gram, Vec(space->n_vertices(), 0.0), s);
  EXPECT_TRUE(r.converged);

  // accepted-step cost monotonicity and Armijo replay
  for (size_t k = 1; k < r.cost_history.size(); ++k) EXPECT_LT(r.cost_history[k], r.cost_history[k - 1]);
  ASSERT_EQ(r.armijo_history.size(), static_cast<size_t>(r.iterations));
  for (const auto& rec : r.armijo_history) {
    EXPECT_LT(rec.gradient_dot_step, 0.0);
    EXPECT_LT(rec.cost_after, rec.cost_before + rec.alpha * s.c_armijo * rec.gradient_dot_step);
  }
  // CG residual certificate where the forcing test terminated CG
  for (const auto& cg : r.cg_history) {
    if (cg.hit_tolerance) {
      ASSERT_GE(cg.certified_ratio, 0.0);
      EXPECT_LE(cg.certified_ratio, cg.forcing * (1.0 + 1e-6));
    }
  }
  // counter accounting: one adjoint per gradient; two incrementals per
  // Hessian action (CG actions, negative-curvature probes, certificates)
  long long grad_evals = static_cast<long long>(r.grad_norm_history.size());
  EXPECT_EQ(r.counters.adjoint, grad_evals);
  long long actions = 0;
  for (const auto& cg : r.cg_history) {
    actions += cg.iterations + (cg.negative_curvature ? 1 : 0) + 1;  // +1 certificate
  }
  EXPECT_EQ(r.counters.incremental, 2 * actions);
}

TEST(Incg, SuperlinearTailOnEitTv) {
  auto space = disc_space(2);
  SourceSpec spec;
  spec.theta = 1.0;
  EitModel model(space, spec);
  Vec truth = smooth_bump(*space);
  model.set_data(model.synth_observation(truth));
  model.reset_counters();
  TvSettings tv{0.01, 0.05, 1e-2, {}};
  EitTvObjective obj(model, tv);
  ProductGram gram(space, 1, NormKind::H1);
  IncgSettings s;
  s.max_iter = 30;
  s.max_cg_iter = 300;
  s.grad_abs_tol = 1e-9;
  s.grad_rel_tol = 1e-5;
  IncgResult r = incg_solve(obj, gram, Vec(space->n_vertices(), 0.0), s);
  ASSERT_TRUE(r.converged);
  const auto& gn = r.grad_norm_history;
  ASSERT_GE(gn.size(), 4u);
  size_t last = gn.size() - 1;
  double q1 = gn[last] / gn[last - 1];
  double q2 = gn[last - 1] / gn[last - 2];
  double q3 = gn[last - 2] / gn[last - 3];
  EXPECT_LT(q1, q2);
  EXPECT_LT(q2, q3);
}

TEST(Incg, RecoversSyntheticOptimum) {
  auto space = disc_space(2);
  SourceSpec spec;
  spec.theta = 2.2;
  EitModel model(space, spec);
  Vec truth = smooth_bump(*space);
  model.set_data(model.synth_observation(truth));
  model.reset_counters();
  // regularizer centered at the truth keeps the global minimizer exactly there
  TvSettings tv{0.1, 1.0, 1e-2, truth};
  EitTvObjective obj(model, tv);
  ProductGram gram(space, 1, NormKind::H1);
  IncgSettings s;
  s.max_iter = 40;
  s.max_cg_iter = 300;
  s.grad_abs_tol = 1e-14;
  s.grad_rel_tol = 1e-6;
  IncgResult r = incg_solve(obj, gram, Vec(space->n_vertices(), 0.0), s);
  ASSERT_TRUE(r.converged);
  double num = 0.0, den = 0.0;
  Vec diff(truth.size());
  for (size_t i = 0; i < truth.size(); ++i) diff[i] = r.x[i] - truth[i];
  num = space->ip(diff, diff, NormKind::L2);
  den = space->ip(truth, truth, NormKind::L2);
  EXPECT_LE(std::sqrt(num / den), 10.0 * s.grad_rel_tol);
}

TEST(Incg, NormKindChangesPathBothConverge) {
  auto space = disc_space(1);
  std::mt19937 rng(9);
  Vec w = random_vec(space->n_vertices(), rng, 0.5);
  // convex: smoothed TV plus a quadratic data term pulling toward w
  class ConvexObjective final : public Objective {
   public:
    ConvexObjective(const FemSpace& space, Vec w, TvSettings tv)
        : space_(space), w_(std::move(w)), tv_(std::move(tv)) {}
    double cost(const Vec& x) override {
      Vec d(x.size());
      for (size_t i = 0; i < x.size(); ++i) d[i] = x[i] - w_[i];
      return tv_eval(space_, x, tv_) + 0.5 * space_.mass().quad(d, d);
    }
    Vec gradient(const Vec& x) override {
      Vec d(x.size());
      for (size_t i = 0; i < x.size(); ++i) d[i] = x[i] - w_[i];
      Vec g = tv_gradient(space_, x, tv_);
      Vec md = space_.mass().apply(d);
      for (size_t i = 0; i < g.size(); ++i) g[i] += md[i];
      return g;
    }
    Vec hessian_action(const Vec& x, const Vec& dir, HessianMode) override {
      Vec h = tv_hessian_action(space_, x, dir, tv_);
      Vec md = space_.mass().apply(dir);
      for (size_t i = 0; i < h.size(); ++i) h[i] += md[i];
      return h;
    }
   private:
    const FemSpace& space_;
    Vec w_;
    TvSettings tv_;
  };
  TvSettings tv{0.3, 0.0, 1e-3, {}};
  ConvexObjective obj(*space, w, tv);
  IncgSettings s;
  s.max_iter = 50;
  s.grad_abs_tol = 1e-11;
  s.grad_rel_tol = 1e-8;
  ProductGram gl2(space, 1, NormKind::L2);
  ProductGram gh1(space, 1, NormKind::H1);
  IncgResult rl2 = incg_solve(obj, gl2, Vec(space->n_vertices(), 0.0), s);
  IncgResult rh1 = incg_solve(obj, gh1, Vec(space->n_vertices(), 0.0), s);
  EXPECT_TRUE(rl2.converged);
  EXPECT_TRUE(rh1.converged);
  // same minimizer through different paths
  EXPECT_LT(rel_err_vec(rl2.x, rh1.x), 1e-5);
  EXPECT_NE(rl2.grad_norm_history.front(), rh1.grad_norm_history.front());
}
