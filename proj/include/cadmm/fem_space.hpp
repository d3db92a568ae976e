#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "cadmm/assembly.hpp"
#include "cadmm/field.hpp"
#include "cadmm/linear_solver.hpp"
#include "cadmm/mesh.hpp"
#include "cadmm/sparse.hpp"

namespace cadmm {

enum class NormKind { L2, H1 };

inline const char* to_string(NormKind k) { return k == NormKind::L2 ? "l2" : "h1"; }

/// P1 space on a mesh with its preassembled mass and unit-coefficient
/// stiffness operators. Immutable after construction; shared by models,
/// regularizers and the ADMM coordinator.
class FemSpace {
 public:
  explicit FemSpace(std::shared_ptr<const Mesh> mesh)
      : mesh_(std::move(mesh)),
        mass_(assemble_mass(*mesh_)),
        stiffness_unit_(assemble_stiffness(*mesh_, 1.0)) {
    std::vector<double> ones(mesh_->n_vertices(), 1.0);
    area_ = mass_.quad(ones, ones);
  }

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  int n_vertices() const { return mesh_->n_vertices(); }
  const SparseOperator& mass() const { return mass_; }
  const SparseOperator& stiffness_unit() const { return stiffness_unit_; }
  double area() const { return area_; }

  double ip(std::span<const double> a, std::span<const double> b, NormKind kind) const {
    double v = mass_.quad(a, b);
    if (kind == NormKind::H1) v += stiffness_unit_.quad(a, b);
    return v;
  }

  double norm(std::span<const double> a, NormKind kind) const { return std::sqrt(ip(a, a, kind)); }

  double inner_product(const Field& a, const Field& b, NormKind kind) const {
    if (a.mesh.get() != mesh_.get() || b.mesh.get() != mesh_.get()) {
      throw std::invalid_argument("inner_product: fields live on a different mesh");
    }
    return ip(a.values, b.values, kind);
  }

 private:
  std::shared_ptr<const Mesh> mesh_;
  SparseOperator mass_;
  SparseOperator stiffness_unit_;
  double area_ = 0.0;
};

/// Block-diagonal Gram matrix of a q-block product of one FemSpace under
/// the L2 or H1 inner product, with a cached factorization for Riesz
/// (dual-norm) computations and preconditioning.
class ProductGram {
 public:
  ProductGram(std::shared_ptr<const FemSpace> space, int blocks, NormKind kind)
      : space_(std::move(space)), blocks_(blocks), kind_(kind) {
    const auto& m = space_->mass();
    gram_block_ = (kind == NormKind::L2) ? m : SparseOperator::sum(m, 1.0, space_->stiffness_unit(), 1.0);
    fact_ = std::make_shared<FactorizedOperator>(gram_block_);
  }

  const FemSpace& space() const { return *space_; }
  std::shared_ptr<const FemSpace> space_ptr() const { return space_; }
  int blocks() const { return blocks_; }
  NormKind kind() const { return kind_; }
  int dim() const { return blocks_ * space_->n_vertices(); }
  const SparseOperator& block() const { return gram_block_; }

  double dot(std::span<const double> a, std::span<const double> b) const {
    check(a);
    check(b);
    const int n = space_->n_vertices();
    double acc = 0.0;
    for (int k = 0; k < blocks_; ++k) {
      acc += gram_block_.quad(a.subspan(k * n, n), b.subspan(k * n, n));
    }
    return acc;
  }

  double norm(std::span<const double> a) const { return std::sqrt(dot(a, a)); }

  Vec apply(std::span<const double> a) const {
    check(a);
    const int n = space_->n_vertices();
    Vec out(dim());
    for (int k = 0; k < blocks_; ++k) {
      gram_block_.multiply(a.subspan(k * n, n), std::span<double>(out).subspan(k * n, n));
    }
    return out;
  }

  Vec solve(std::span<const double> a) const {
    check(a);
    const int n = space_->n_vertices();
    Vec out(dim());
    for (int k = 0; k < blocks_; ++k) {
      Vec xk = fact_->solve(a.subspan(k * n, n));
      std::copy(xk.begin(), xk.end(), out.begin() + k * n);
    }
    return out;
  }

  /// Norm of a dual vector (assembled gradient): sqrt(gᵀ G⁻¹ g).
  double dual_norm(std::span<const double> g) const {
    Vec riesz = solve(g);
    double acc = 0.0;
    for (int i = 0; i < dim(); ++i) acc += g[i] * riesz[i];
    return std::sqrt(std::max(0.0, acc));
  }

 private:
  void check(std::span<const double> a) const {
    if (static_cast<int>(a.size()) != dim()) {
      throw std::invalid_argument("ProductGram: vector has wrong dimension");
    }
  }

  std::shared_ptr<const FemSpace> space_;
  int blocks_;
  NormKind kind_;
  SparseOperator gram_block_;
  std::shared_ptr<FactorizedOperator> fact_;
};

}  // namespace cadmm
