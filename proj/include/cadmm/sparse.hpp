#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

namespace cadmm {

/// Symmetric sparse matrix in compressed-row form. Built from triplets;
/// immutable once compressed, safe to share across threads.
class SparseOperator {
 public:
  SparseOperator() = default;

  static SparseOperator from_triplets(int dim, const std::vector<std::tuple<int, int, double>>& trips) {
    SparseOperator op;
    op.dim_ = dim;
    std::vector<std::vector<std::pair<int, double>>> rows(dim);
    for (const auto& [i, j, v] : trips) {
      if (i < 0 || i >= dim || j < 0 || j >= dim) {
        throw std::invalid_argument("SparseOperator: triplet index out of range");
      }
      rows[i].push_back({j, v});
    }
    op.row_offsets_.resize(dim + 1, 0);
    for (int i = 0; i < dim; ++i) {
      auto& r = rows[i];
      std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      int distinct = 0;
      for (size_t k = 0; k < r.size(); ++k) {
        if (k == 0 || r[k].first != r[k - 1].first) ++distinct;
      }
      op.row_offsets_[i + 1] = op.row_offsets_[i] + distinct;
    }
    op.cols_.resize(op.row_offsets_[dim]);
    op.vals_.resize(op.row_offsets_[dim]);
    for (int i = 0; i < dim; ++i) {
      int at = op.row_offsets_[i] - 1;
      int prev = -1;
      for (const auto& [j, v] : rows[i]) {
        if (j != prev) {
          ++at;
          op.cols_[at] = j;
          op.vals_[at] = v;
          prev = j;
        } else {
          op.vals_[at] += v;
        }
      }
    }
    return op;
  }

  int dim() const { return dim_; }
  int nnz() const { return static_cast<int>(vals_.size()); }
  const std::vector<int>& row_offsets() const { return row_offsets_; }
  const std::vector<int>& col_indices() const { return cols_; }
  const std::vector<double>& values() const { return vals_; }

  double coeff(int i, int j) const {
    for (int k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
      if (cols_[k] == j) return vals_[k];
    }
    return 0.0;
  }

  void multiply(std::span<const double> x, std::span<double> y) const {
    for (int i = 0; i < dim_; ++i) {
      double acc = 0.0;
      for (int k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
        acc += vals_[k] * x[cols_[k]];
      }
      y[i] = acc;
    }
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> y(dim_);
    multiply(x, y);
    return y;
  }

  /// aᵀ A b
  double quad(std::span<const double> a, std::span<const double> b) const {
    double acc = 0.0;
    for (int i = 0; i < dim_; ++i) {
      double row = 0.0;
      for (int k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
        row += vals_[k] * b[cols_[k]];
      }
      acc += a[i] * row;
    }
    return acc;
  }

  SparseOperator scaled(double factor) const {
    SparseOperator op = *this;
    for (double& v : op.vals_) v *= factor;
    return op;
  }

  static SparseOperator sum(const SparseOperator& a, double wa, const SparseOperator& b, double wb) {
    if (a.dim() != b.dim()) throw std::invalid_argument("SparseOperator::sum: dimension mismatch");
    std::vector<std::tuple<int, int, double>> trips;
    trips.reserve(a.nnz() + b.nnz());
    for (int i = 0; i < a.dim(); ++i) {
      for (int k = a.row_offsets_[i]; k < a.row_offsets_[i + 1]; ++k) {
        trips.emplace_back(i, a.cols_[k], wa * a.vals_[k]);
      }
      for (int k = b.row_offsets_[i]; k < b.row_offsets_[i + 1]; ++k) {
        trips.emplace_back(i, b.cols_[k], wb * b.vals_[k]);
      }
    }
    return from_triplets(a.dim(), trips);
  }

  /// Embeds this operator as one diagonal block of a larger block-diagonal
  /// operator; used for product-space Gram matrices and Hessians.
  static SparseOperator block_diagonal(const std::vector<const SparseOperator*>& blocks) {
    int dim = 0;
    for (const auto* b : blocks) dim += b->dim();
    std::vector<std::tuple<int, int, double>> trips;
    int offset = 0;
    for (const auto* b : blocks) {
      for (int i = 0; i < b->dim(); ++i) {
        for (int k = b->row_offsets_[i]; k < b->row_offsets_[i + 1]; ++k) {
          trips.emplace_back(offset + i, offset + b->cols_[k], b->vals_[k]);
        }
      }
      offset += b->dim();
    }
    return from_triplets(dim, trips);
  }

 private:
  int dim_ = 0;
  std::vector<int> row_offsets_;
  std::vector<int> cols_;
  std::vector<double> vals_;
};

}  // namespace cadmm
