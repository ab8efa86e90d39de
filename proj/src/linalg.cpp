#include "dynreg/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>

namespace dynreg::linalg {

namespace {

constexpr int kExactCutoff = 96;

// Power iteration for the top eigenvalue of a symmetric PSD-shifted matrix.
// Deterministic start vector; converges linearly, adequate for norm bounds.
double power_top_eig(const Matrix& S) {
  const int n = static_cast<int>(S.rows());
  Vector v = Vector::Ones(n);
  // break symmetry a little so eigenvectors orthogonal to ones are reachable
  for (int i = 0; i < n; ++i) v[i] += 1e-3 * (i % 7);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 600; ++it) {
    Vector w = S * v;
    double nw = w.norm();
    if (nw == 0.0) return 0.0;
    w /= nw;
    double next = w.dot(S * w);
    if (std::abs(next - lambda) <= 1e-12 * std::max(1.0, std::abs(next)) && it > 4) {
      return next;
    }
    lambda = next;
    v = w;
  }
  return lambda;
}

}  // namespace

double spectral_norm(const Matrix& A) {
  if (A.rows() == 0 || A.cols() == 0) return 0.0;
  if (std::min(A.rows(), A.cols()) <= kExactCutoff) {
    return Eigen::JacobiSVD<Matrix>(A).singularValues()(0);
  }
  // sigma_max^2 = top eigenvalue of the (smaller) Gram matrix
  if (A.cols() <= A.rows()) {
    return std::sqrt(std::max(0.0, power_top_eig(A.transpose() * A)));
  }
  return std::sqrt(std::max(0.0, power_top_eig(A * A.transpose())));
}

double sym_spectral_norm(const Matrix& S) {
  auto [lo, hi] = sym_eig_range(S);
  return std::max(std::abs(lo), std::abs(hi));
}

std::pair<double, double> sym_eig_range(const Matrix& S) {
  const int n = static_cast<int>(S.rows());
  if (n == 0) return {0.0, 0.0};
  if (n <= kExactCutoff) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return {ev(0), ev(n - 1)};
  }
  // shift so the iterated matrix is PSD: |lambda| <= ||S||_inf
  double shift = S.cwiseAbs().rowwise().sum().maxCoeff();
  Matrix I = Matrix::Identity(n, n);
  double hi = power_top_eig(S + shift * I) - shift;
  double lo = shift - power_top_eig(shift * I - S);
  return {lo, hi};
}

double relative_asymmetry(const Matrix& A) {
  double scale = std::max(1.0, A.norm());
  return (A - A.transpose()).norm() / scale;
}

double GramCache::max_norm(int n_nodes) {
  double worst = 0.0;
  OperatorSequence::MatrixPtr prev_key;
  double prev_norm = 0.0;
  const bool reusable = L_.node_independent();
  for (int k = 0; k < n_nodes; ++k) {
    const auto& key = ops_.ptr(k);
    if (!(reusable && k > 0 && key == prev_key)) {
      prev_norm = sym_spectral_norm(at(k));
      prev_key = key;
    }
    worst = std::max(worst, prev_norm);
  }
  return worst;
}

std::vector<Vector> solve_block_tridiagonal_spd(const std::vector<Matrix>& diag,
                                                double off,
                                                const std::vector<Vector>& rhs) {
  const size_t n = diag.size();
  if (n == 0 || rhs.size() != n) {
    raise(ErrorCode::DimensionMismatch, "block tridiagonal solve: size mismatch");
  }
  const auto mdim = diag.front().rows();

  // forward block elimination: S_k = D_k - off^2 S_{k-1}^{-1}
  std::vector<Eigen::LLT<Matrix>> pivots;
  pivots.reserve(n);
  std::vector<Vector> z(n);
  Matrix S = diag[0];
  for (size_t k = 0; k < n; ++k) {
    if (k > 0) {
      S = diag[k] - (off * off) * pivots[k - 1].solve(Matrix::Identity(mdim, mdim));
      S = symmetrized(S);
    }
    pivots.emplace_back(S);
    if (pivots.back().info() != Eigen::Success) {
      raise(ErrorCode::LinearSolveFailure,
            "block tridiagonal pivot lost positive definiteness at block " + std::to_string(k));
    }
    z[k] = rhs[k];
    if (k > 0) z[k] -= off * pivots[k - 1].solve(z[k - 1]);
  }

  // back substitution
  std::vector<Vector> x(n);
  x[n - 1] = pivots[n - 1].solve(z[n - 1]);
  for (size_t k = n - 1; k-- > 0;) {
    x[k] = pivots[k].solve(Vector(z[k] - off * x[k + 1]));
  }
  return x;
}

}  // namespace dynreg::linalg
