#pragma once

#include "dynreg/types.hpp"

#include <utility>
#include <vector>

namespace dynreg::linalg {

/// Largest singular value. Exact (Jacobi SVD) for small matrices, power
/// iteration on A^T A for large ones.
double spectral_norm(const Matrix& A);

/// Largest |eigenvalue| of a symmetric matrix.
double sym_spectral_norm(const Matrix& S);

/// (min, max) eigenvalue of a symmetric matrix. Exact below a size cutoff,
/// power-iteration bounds above it.
std::pair<double, double> sym_eig_range(const Matrix& S);

/// ||A - A^T||_F / max(1, ||A||_F)
double relative_asymmetry(const Matrix& A);

inline Matrix symmetrized(const Matrix& A) { return 0.5 * (A + A.transpose()); }

/// F_k^T L_k F_k per grid node, with a one-entry cache so constant-operator
/// sequences (shared storage) pay for the product once.
class GramCache {
 public:
  GramCache(const OperatorSequence& ops, const WeightSpec& L) : ops_(ops), L_(L) {}

  const Matrix& at(int k) {
    const auto& ptr = ops_.ptr(k);
    const bool reusable = L_.node_independent();
    if (have_ && reusable && ptr == key_) return value_;
    key_ = ptr;
    value_ = symmetrized(Matrix(ptr->transpose() * L_.apply(*ptr, k)));
    have_ = reusable;
    return value_;
  }

  /// max_k of the spectral norm of F_k^T L_k F_k (pointer-identity cached).
  double max_norm(int n_nodes);

 private:
  const OperatorSequence& ops_;
  const WeightSpec& L_;
  OperatorSequence::MatrixPtr key_;
  Matrix value_;
  bool have_ = false;
};

/// Cholesky-based solve of the symmetric block-tridiagonal system with
/// diagonal blocks D_k and constant scalar off-diagonal couplings off*I:
///
///   [ D_1   off*I              ] [x_1]   [r_1]
///   [ off*I  D_2   off*I       ] [x_2] = [r_2]
///   [        ...               ] [...]   [...]
///   [              off*I  D_n  ] [x_n]   [r_n]
///
/// Block forward elimination; every pivot block must stay SPD
/// (LinearSolveFailure otherwise).
std::vector<Vector> solve_block_tridiagonal_spd(const std::vector<Matrix>& diag,
                                                double off,
                                                const std::vector<Vector>& rhs);

}  // namespace dynreg::linalg
