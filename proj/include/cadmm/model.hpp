#pragma once

#include <span>
#include <vector>

#include "cadmm/fem_space.hpp"
#include "cadmm/field.hpp"

namespace cadmm {

/// Tallies of PDE solves by kind. One gradient evaluation is exactly one
/// forward plus one adjoint solve; one Hessian action is exactly two
/// incremental solves; a cost-only evaluation is one forward solve.
struct SolveCounters {
  long long forward = 0;
  long long adjoint = 0;
  long long incremental = 0;

  SolveCounters& operator+=(const SolveCounters& o) {
    forward += o.forward;
    adjoint += o.adjoint;
    incremental += o.incremental;
    return *this;
  }
  SolveCounters operator-(const SolveCounters& o) const {
    return {forward - o.forward, adjoint - o.adjoint, incremental - o.incremental};
  }
  long long total() const { return forward + adjoint + incremental; }
};

enum class HessianMode { full, gauss_newton };

/// Diagonal change of variables between optimizer coordinates x and the
/// physical parameter m, applied coordinate-wise. The base class is the
/// identity; bound-preserving models override it (logit/log maps).
class Transform {
 public:
  virtual ~Transform() = default;
  virtual bool is_identity() const { return true; }
  virtual Vec to_physical(std::span<const double> x) const { return {x.begin(), x.end()}; }
  virtual Vec to_optimizer(std::span<const double> m) const { return {m.begin(), m.end()}; }
  /// dm/dx, per coordinate.
  virtual Vec jacobian_diag(std::span<const double> x) const { return Vec(x.size(), 1.0); }
  /// d²m/dx², per coordinate.
  virtual Vec curvature_diag(std::span<const double> x) const { return Vec(x.size(), 0.0); }
};

/// One experiment unit: a data-fidelity functional backed by a PDE forward
/// model, exposing cost, adjoint-based gradient, Hessian action and solve
/// counters. Instances are independently usable from their own threads and
/// share only immutable structures.
class InversionModel {
 public:
  virtual ~InversionModel() = default;

  virtual const FemSpace& space() const = 0;
  virtual int blocks() const = 0;
  int dim() const { return blocks() * space().n_vertices(); }

  virtual double misfit(std::span<const double> m) = 0;
  virtual Vec misfit_gradient(std::span<const double> m) = 0;
  virtual Vec misfit_hessian_action(std::span<const double> m, std::span<const double> dir,
                                    HessianMode mode) = 0;
  /// Squared data residual ‖f(m) - d‖² in the model's data norm.
  virtual double state_misfit(std::span<const double> m) = 0;

  /// Noise-free observation at a ground-truth parameter (one forward solve).
  virtual Vec synth_observation(std::span<const double> m_true) = 0;
  /// Indices of observation entries eligible for noise.
  virtual std::vector<int> observation_support() const = 0;
  virtual bool positive_data() const { return false; }
  virtual void set_data(Vec d) = 0;

  virtual const Transform& transform() const {
    static const Transform identity;
    return identity;
  }

  const SolveCounters& counters() const { return counters_; }
  void reset_counters() { counters_ = {}; }

 protected:
  SolveCounters counters_;
};

}  // namespace cadmm
