#include "dynreg/discrete.hpp"

#include "dynreg/linalg.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <sstream>

namespace dynreg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::max(std::chrono::duration<double>(Clock::now() - t0).count(), 1e-9);
}

// Guard against a numerically broken (Q + aI): with Q PSD the condition
// number is bounded by (||Q|| + a)/a, estimated here with the Frobenius norm.
void check_conditioning(const Matrix& Q, double alpha, int k) {
  double bound = (Q.norm() + alpha) / alpha;
  if (!(bound < kCondLimit)) {
    std::ostringstream msg;
    msg << "(Q + alpha I) at step " << k << " has condition estimate " << bound
        << " beyond " << kCondLimit;
    raise(ErrorCode::LinearSolveFailure, msg.str());
  }
}

Eigen::LLT<Matrix> factor_shifted(const Matrix& Q, double alpha, int k) {
  check_conditioning(Q, alpha, k);
  const auto n = Q.rows();
  Eigen::LLT<Matrix> llt(Matrix(Q + alpha * Matrix::Identity(n, n)));
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "(Q + alpha I) lost positive definiteness at step " << k;
    raise(ErrorCode::LinearSolveFailure, msg.str());
  }
  return llt;
}

}  // namespace

RiccatiSolution riccati_backward(const Problem& problem) {
  const int N = problem.n_steps();
  const int m = problem.m();
  const double alpha = problem.config().alpha;
  const WeightSpec& L = problem.config().weight_L;

  RiccatiSolution sol;
  sol.Q_seq.resize(static_cast<size_t>(N + 1));
  sol.b_seq.resize(static_cast<size_t>(N + 1));

  linalg::GramCache gram(problem.ops(), L);

  // terminal values
  {
    Matrix QN = gram.at(N);
    Vector bN = -(problem.F(N).transpose() * L.apply(problem.y(N), N));
    sol.Q_seq[static_cast<size_t>(N)] = std::move(QN);
    sol.b_seq[static_cast<size_t>(N)] = std::move(bN);
  }

  const Matrix I = Matrix::Identity(m, m);
  for (int k = N; k >= 1; --k) {
    const Matrix& Qk = sol.Q_seq[static_cast<size_t>(k)];
    const Vector& bk = sol.b_seq[static_cast<size_t>(k)];

    auto llt = factor_shifted(Qk, alpha, k);
    // a (Q + aI)^{-1} Q == aI - a^2 (Q + aI)^{-1}, symmetric by construction
    Matrix shrink = linalg::symmetrized(llt.solve(I));
    Matrix Qprev = alpha * I - (alpha * alpha) * shrink + gram.at(k - 1);

    if (linalg::relative_asymmetry(Qprev) > kSymmetryTol) {
      std::ostringstream msg;
      msg << "Q at step " << k - 1 << " drifted from symmetry by "
          << linalg::relative_asymmetry(Qprev);
      raise(ErrorCode::SymmetryViolation, msg.str());
    }
    sol.Q_seq[static_cast<size_t>(k - 1)] = linalg::symmetrized(Qprev);

    Vector bprev = alpha * llt.solve(bk) -
                   problem.F(k - 1).transpose() * L.apply(problem.y(k - 1), k - 1);
    sol.b_seq[static_cast<size_t>(k - 1)] = std::move(bprev);
  }
  return sol;
}

Trajectory trajectory_forward(const RiccatiSolution& riccati, const RegConfig& cfg) {
  const int N = riccati.size() - 1;
  const double alpha = cfg.alpha;
  if (riccati.size() == 0 || cfg.u0.size() != riccati.Q_seq.front().rows()) {
    raise(ErrorCode::DimensionMismatch, "trajectory_forward: u0 does not match Q dimension");
  }

  Trajectory u;
  u.values.resize(static_cast<size_t>(N + 1));
  u.values[0] = cfg.u0;
  for (int k = 0; k < N; ++k) {
    const Matrix& Qn = riccati.Q_seq[static_cast<size_t>(k + 1)];
    const Vector& bn = riccati.b_seq[static_cast<size_t>(k + 1)];
    auto llt = factor_shifted(Qn, alpha, k + 1);
    u.values[static_cast<size_t>(k + 1)] = llt.solve(Vector(alpha * u.values[static_cast<size_t>(k)] - bn));
  }
  return u;
}

double euler_lagrange_residual(const Problem& problem, const Trajectory& u) {
  const int N = problem.n_steps();
  if (u.size() != N + 1 || u.dim() != problem.m()) {
    raise(ErrorCode::DimensionMismatch, "euler_lagrange_residual: trajectory shape mismatch");
  }
  const double alpha = problem.config().alpha;
  const WeightSpec& L = problem.config().weight_L;

  double sq = 0.0;
  for (int k = 1; k <= N; ++k) {
    const Vector& uk = u.at(k);
    const Vector& prev = u.at(k - 1);
    const Vector& next = (k == N) ? u.at(N) : u.at(k + 1);  // ghost u_{N+1} = u_N
    Vector second_diff = prev - 2.0 * uk + next;
    Vector row = problem.F(k).transpose() *
                     L.apply(Vector(problem.F(k) * uk - problem.y(k)), k) -
                 alpha * second_diff;
    sq += row.squaredNorm();
  }
  return std::sqrt(sq);
}

double tikhonov_cost_discrete(const Problem& problem, const Trajectory& u) {
  const int N = problem.n_steps();
  if (u.size() != N + 1 || u.dim() != problem.m()) {
    raise(ErrorCode::DimensionMismatch, "tikhonov_cost_discrete: trajectory shape mismatch");
  }
  const double alpha = problem.config().alpha;
  const WeightSpec& L = problem.config().weight_L;

  double acc = 0.0;
  for (int j = 0; j < N; ++j) {
    Vector r = problem.F(j) * u.at(j) - problem.y(j);
    acc += L.quadratic(r, j);
    acc += alpha * (u.at(j + 1) - u.at(j)).squaredNorm();
  }
  Vector rN = problem.F(N) * u.at(N) - problem.y(N);
  acc += L.quadratic(rN, N);
  return 0.5 * acc;
}

Trajectory direct_tikhonov_oracle(const Problem& problem) {
  const int N = problem.n_steps();
  const int m = problem.m();
  if (static_cast<long long>(N) * m > kOracleGuard) {
    std::ostringstream msg;
    msg << "oracle system dimension " << static_cast<long long>(N) * m
        << " exceeds guard " << kOracleGuard;
    raise(ErrorCode::ProblemTooLarge, msg.str());
  }
  const double alpha = problem.config().alpha;
  const WeightSpec& L = problem.config().weight_L;
  const Matrix I = Matrix::Identity(m, m);

  // Stationarity rows for k = 1..N:
  //   k < N: (F_k^T L_k F_k + 2aI) u_k - a u_{k-1} - a u_{k+1} = F_k^T L_k y_k
  //   k = N: (F_N^T L_N F_N +  aI) u_N - a u_{N-1}             = F_N^T L_N y_N
  // The k=1 row moves a*u_0 to the right-hand side.
  std::vector<Matrix> diag;
  std::vector<Vector> rhs;
  diag.reserve(static_cast<size_t>(N));
  rhs.reserve(static_cast<size_t>(N));
  for (int k = 1; k <= N; ++k) {
    Matrix gram = linalg::symmetrized(
        Matrix(problem.F(k).transpose() * L.apply(problem.F(k), k)));
    diag.push_back(gram + ((k == N) ? alpha : 2.0 * alpha) * I);
    Vector r = problem.F(k).transpose() * L.apply(problem.y(k), k);
    if (k == 1) r += alpha * problem.config().u0;
    rhs.push_back(std::move(r));
  }

  std::vector<Vector> x = linalg::solve_block_tridiagonal_spd(diag, -alpha, rhs);

  Trajectory u;
  u.values.resize(static_cast<size_t>(N + 1));
  u.values[0] = problem.config().u0;
  for (int k = 1; k <= N; ++k) u.values[static_cast<size_t>(k)] = std::move(x[static_cast<size_t>(k - 1)]);
  return u;
}

DiscreteSolveReport solve_discrete(const Problem& problem) {
  DiscreteSolveReport report;
  auto t0 = Clock::now();

  report.riccati = riccati_backward(problem);
  report.timings.backward = seconds_since(t0);

  auto t1 = Clock::now();
  report.trajectory = trajectory_forward(report.riccati, problem.config());
  report.timings.forward = seconds_since(t1);

  auto t2 = Clock::now();
  report.el_residual = euler_lagrange_residual(problem, report.trajectory);
  report.cost = tikhonov_cost_discrete(problem, report.trajectory);

  // Norm bound from the backward recursion: every Q_k stays below
  // alpha + max_k ||F_k^T L_k F_k|| (equals alpha + max ||F_k||^2 for L = I).
  linalg::GramCache gram(problem.ops(), problem.config().weight_L);
  const double gram_max = gram.max_norm(problem.n_steps() + 1);
  double q_max = 0.0;
  for (const Matrix& Q : report.riccati.Q_seq) {
    q_max = std::max(q_max, linalg::sym_spectral_norm(Q));
  }
  const double bound = problem.config().alpha + gram_max;
  report.q_norm_bound_ok = q_max <= bound * (1.0 + 1e-8);

  report.timings.diagnostics = seconds_since(t2);
  report.timings.total = seconds_since(t0);
  return report;
}

}  // namespace dynreg
