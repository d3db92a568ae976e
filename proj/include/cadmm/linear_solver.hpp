#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "cadmm/sparse.hpp"

namespace cadmm {

struct SolverError : std::runtime_error {
  double residual;
  explicit SolverError(const std::string& what, double res = 0.0)
      : std::runtime_error(what), residual(res) {}
};

namespace detail {

inline Eigen::SparseMatrix<double> to_eigen(const SparseOperator& a) {
  Eigen::SparseMatrix<double> m(a.dim(), a.dim());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(a.nnz());
  const auto& off = a.row_offsets();
  const auto& cols = a.col_indices();
  const auto& vals = a.values();
  for (int i = 0; i < a.dim(); ++i) {
    for (int k = off[i]; k < off[i + 1]; ++k) {
      trips.emplace_back(i, cols[k], vals[k]);
    }
  }
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

}  // namespace detail

/// Sparse Cholesky factorization of a symmetric positive definite operator
/// after symmetric row/column elimination of the given Dirichlet nodes.
/// Reusable across right-hand sides (forward, adjoint, and incremental
/// solves share the operator). Each solve checks the relative residual of
/// the eliminated system against 1e-10 and throws SolverError beyond it.
class FactorizedOperator {
 public:
  FactorizedOperator(const SparseOperator& a, std::vector<int> dirichlet_nodes = {})
      : dim_(a.dim()), dirichlet_nodes_(std::move(dirichlet_nodes)), original_(a) {
    is_dirichlet_.assign(dim_, 0);
    for (int d : dirichlet_nodes_) {
      if (d < 0 || d >= dim_) throw std::invalid_argument("FactorizedOperator: Dirichlet node out of range");
      is_dirichlet_[d] = 1;
    }
    Eigen::SparseMatrix<double> m(dim_, dim_);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(a.nnz() + dirichlet_nodes_.size());
    const auto& off = a.row_offsets();
    const auto& cols = a.col_indices();
    const auto& vals = a.values();
    for (int i = 0; i < dim_; ++i) {
      for (int k = off[i]; k < off[i + 1]; ++k) {
        int j = cols[k];
        if (is_dirichlet_[i] || is_dirichlet_[j]) continue;
        trips.emplace_back(i, j, vals[k]);
      }
    }
    for (int d : dirichlet_nodes_) trips.emplace_back(d, d, 1.0);
    m.setFromTriplets(trips.begin(), trips.end());
    eliminated_ = std::move(m);
    ldlt_.compute(eliminated_);
    if (ldlt_.info() != Eigen::Success) {
      throw SolverError("FactorizedOperator: factorization failed (matrix not SPD after elimination?)");
    }
  }

  int dim() const { return dim_; }

  /// Solve A x = rhs with the Dirichlet nodes held at the given values
  /// (empty span means homogeneous). Dirichlet values are enforced exactly;
  /// the right-hand side receives the symmetric correction.
  std::vector<double> solve(std::span<const double> rhs,
                            std::span<const double> dirichlet_values = {}) const {
    if (static_cast<int>(rhs.size()) != dim_) {
      throw std::invalid_argument("FactorizedOperator::solve: rhs size mismatch");
    }
    if (!dirichlet_values.empty() && dirichlet_values.size() != dirichlet_nodes_.size()) {
      throw std::invalid_argument("FactorizedOperator::solve: Dirichlet value count mismatch");
    }
    Eigen::VectorXd b(dim_);
    for (int i = 0; i < dim_; ++i) b[i] = rhs[i];
    if (!dirichlet_values.empty()) {
      // b_i -= sum_d A_id * x_d for free rows; uses the original columns
      const auto& off = original_.row_offsets();
      const auto& cols = original_.col_indices();
      const auto& vals = original_.values();
      std::vector<double> xfix(dim_, 0.0);
      for (size_t k = 0; k < dirichlet_nodes_.size(); ++k) xfix[dirichlet_nodes_[k]] = dirichlet_values[k];
      for (int i = 0; i < dim_; ++i) {
        if (is_dirichlet_[i]) continue;
        double corr = 0.0;
        for (int k = off[i]; k < off[i + 1]; ++k) {
          if (is_dirichlet_[cols[k]]) corr += vals[k] * xfix[cols[k]];
        }
        b[i] -= corr;
      }
    }
    for (size_t k = 0; k < dirichlet_nodes_.size(); ++k) {
      b[dirichlet_nodes_[k]] = dirichlet_values.empty() ? 0.0 : dirichlet_values[k];
    }
    Eigen::VectorXd x = ldlt_.solve(b);
    if (ldlt_.info() != Eigen::Success) {
      throw SolverError("FactorizedOperator::solve: back substitution failed");
    }
    double rnorm = (eliminated_ * x - b).norm();
    double bnorm = b.norm();
    double rel = bnorm > 0.0 ? rnorm / bnorm : rnorm;
    if (!(rel <= 1e-10)) {
      throw SolverError("FactorizedOperator::solve: relative residual " + std::to_string(rel) +
                            " exceeds 1e-10",
                        rel);
    }
    std::vector<double> out(dim_);
    for (int i = 0; i < dim_; ++i) out[i] = x[i];
    // enforce constraints exactly
    for (size_t k = 0; k < dirichlet_nodes_.size(); ++k) {
      out[dirichlet_nodes_[k]] = dirichlet_values.empty() ? 0.0 : dirichlet_values[k];
    }
    return out;
  }

 private:
  int dim_ = 0;
  std::vector<int> dirichlet_nodes_;
  std::vector<char> is_dirichlet_;
  SparseOperator original_;
  Eigen::SparseMatrix<double> eliminated_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

/// One-shot solve of A x = rhs with Dirichlet constraints given as
/// (node, value) pairs. A must be SPD after elimination.
inline std::vector<double> solve_sparse(const SparseOperator& a, std::span<const double> rhs,
                                        const std::vector<std::pair<int, double>>& dirichlet = {}) {
  std::vector<int> nodes;
  std::vector<double> values;
  nodes.reserve(dirichlet.size());
  values.reserve(dirichlet.size());
  for (const auto& [n, v] : dirichlet) {
    nodes.push_back(n);
    values.push_back(v);
  }
  FactorizedOperator fact(a, nodes);
  return fact.solve(rhs, values);
}

}  // namespace cadmm
