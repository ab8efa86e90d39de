#include "dynreg/continuous.hpp"

#include "dynreg/linalg.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace dynreg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::max(std::chrono::duration<double>(Clock::now() - t0).count(), 1e-9);
}

// Effective step-size margin with the misfit weight folded in:
// 1/2 - dt^2 max_k ||a^{-1} F_k^T L_k F_k||. Coincides with the plain
// formula for L = I.
double effective_margin(const Problem& p) {
  linalg::GramCache gram(p.ops(), p.config().weight_L);
  double gmax = gram.max_norm(p.grid().n_nodes());
  double dt = p.grid().dt();
  return 0.5 - dt * dt * gmax / p.config().alpha;
}

void require_cfl(const Problem& p, const EulerOptions& opts) {
  if (!opts.enforce_cfl) return;
  if (effective_margin(p) >= 0.0) return;
  CflReport rep = cfl_check(p.ops(), p.grid(), p.config().alpha);
  std::ostringstream msg;
  msg << "explicit scheme is conditionally stable and the step-size condition fails "
      << "(dt = " << p.grid().dt() << ", largest admissible dt = " << rep.max_dt
      << "); reduce dt or use the discrete method, which has no step restriction";
  raise(ErrorCode::CFLViolation, msg.str());
}

bool spectrum_within(const Matrix& Q, double dt) {
  auto [lo, hi] = linalg::sym_eig_range(Q);
  return dt * lo >= -kSpectrumTol && dt * hi <= 1.0 + kSpectrumTol;
}

// Linear-in-t interpolation onto the half-step grid (2N+1 nodes).
Problem refined_problem(const Problem& p) {
  const int N = p.n_steps();
  OperatorSequence ops = [&] {
    if (p.ops().is_constant()) return OperatorSequence::constant(p.F(0), 2 * N + 1);
    std::vector<Matrix> fine;
    fine.reserve(static_cast<size_t>(2 * N + 1));
    for (int k = 0; k < N; ++k) {
      fine.push_back(p.F(k));
      fine.push_back(0.5 * (p.F(k) + p.F(k + 1)));
    }
    fine.push_back(p.F(N));
    return OperatorSequence(std::move(fine));
  }();

  DataSequence data;
  data.noise_level = p.data().noise_level;
  data.samples.reserve(static_cast<size_t>(2 * N + 1));
  for (int k = 0; k < N; ++k) {
    data.samples.push_back(p.y(k));
    data.samples.push_back(0.5 * (p.y(k) + p.y(k + 1)));
  }
  data.samples.push_back(p.y(N));

  return validate_problem(ops, data, TimeGrid(p.grid().t_end(), 2 * N), p.config());
}

}  // namespace

CflReport cfl_check(const OperatorSequence& ops, const TimeGrid& grid, double alpha) {
  CflReport rep;
  double fmax = operator_norm_max(ops);
  double dt = grid.dt();
  rep.margin = 0.5 - dt * dt * fmax * fmax / alpha;
  rep.pass = rep.margin >= 0.0;
  rep.max_dt = fmax == 0.0 ? std::numeric_limits<double>::infinity()
                           : std::sqrt(alpha / 2.0) / fmax;
  return rep;
}

RiccatiSolution euler_riccati_backward(const Problem& problem, const EulerOptions& opts) {
  require_cfl(problem, opts);

  const int N = problem.n_steps();
  const int m = problem.m();
  const double dt = problem.grid().dt();
  const double inv_alpha = 1.0 / problem.config().alpha;
  const WeightSpec& L = problem.config().weight_L;
  linalg::GramCache gram(problem.ops(), L);

  RiccatiSolution sol;
  sol.Q_seq.resize(static_cast<size_t>(N + 1));
  sol.b_seq.resize(static_cast<size_t>(N + 1));
  sol.Q_seq[static_cast<size_t>(N)] = Matrix::Zero(m, m);
  sol.b_seq[static_cast<size_t>(N)] = Vector::Zero(m);

  for (int k = N; k >= 1; --k) {
    const Matrix& Qk = sol.Q_seq[static_cast<size_t>(k)];
    const Vector& bk = sol.b_seq[static_cast<size_t>(k)];

    Matrix Qprev = Qk - dt * (Qk * Qk - inv_alpha * gram.at(k));
    Qprev = linalg::symmetrized(Qprev);
    if (opts.enforce_cfl && !spectrum_within(Qprev, dt)) {
      std::ostringstream msg;
      msg << "spectrum(dt Q) left [0, 1] at step " << k - 1
          << " despite the step-size condition holding";
      raise(ErrorCode::SpectrumEscape, msg.str());
    }
    sol.Q_seq[static_cast<size_t>(k - 1)] = std::move(Qprev);

    Vector rhs = problem.F(k).transpose() * L.apply(problem.y(k), k);
    sol.b_seq[static_cast<size_t>(k - 1)] = bk - dt * (Qk * bk + inv_alpha * rhs);
  }
  return sol;
}

Trajectory euler_trajectory_forward(const RiccatiSolution& riccati, const RegConfig& cfg,
                                    const TimeGrid& grid) {
  const int N = grid.n_steps();
  if (riccati.size() != N + 1) {
    raise(ErrorCode::DimensionMismatch, "euler_trajectory_forward: riccati/grid length mismatch");
  }
  if (cfg.u0.size() != riccati.Q_seq.front().rows()) {
    raise(ErrorCode::DimensionMismatch, "euler_trajectory_forward: u0 does not match Q dimension");
  }
  const double dt = grid.dt();

  Trajectory u;
  u.values.resize(static_cast<size_t>(N + 1));
  u.values[0] = cfg.u0;
  for (int k = 0; k < N; ++k) {
    const Matrix& Qk = riccati.Q_seq[static_cast<size_t>(k)];
    const Vector& bk = riccati.b_seq[static_cast<size_t>(k)];
    const Vector& uk = u.values[static_cast<size_t>(k)];
    u.values[static_cast<size_t>(k + 1)] = uk + dt * (-(Qk * uk) - bk);
  }
  return u;
}

double tikhonov_cost_continuous(const Problem& problem, const Trajectory& u) {
  const int N = problem.n_steps();
  if (u.size() != N + 1 || u.dim() != problem.m()) {
    raise(ErrorCode::DimensionMismatch, "tikhonov_cost_continuous: trajectory shape mismatch");
  }
  const double dt = problem.grid().dt();
  const double inv_alpha = 1.0 / problem.config().alpha;
  const WeightSpec& L = problem.config().weight_L;

  double misfit = 0.0;
  for (int k = 0; k <= N; ++k) {
    Vector r = problem.F(k) * u.at(k) - problem.y(k);
    double w = (k == 0 || k == N) ? 0.5 : 1.0;
    misfit += w * inv_alpha * L.quadratic(r, k);
  }
  double velocity = 0.0;
  for (int j = 0; j < N; ++j) {
    velocity += (u.at(j + 1) - u.at(j)).squaredNorm() / dt;
  }
  return 0.5 * (dt * misfit + velocity);
}

ContinuousSolveReport solve_continuous(const Problem& problem, const EulerOptions& opts) {
  ContinuousSolveReport report;
  auto t0 = Clock::now();

  report.riccati = euler_riccati_backward(problem, opts);
  report.timings.backward = seconds_since(t0);

  auto t1 = Clock::now();
  report.trajectory = euler_trajectory_forward(report.riccati, problem.config(), problem.grid());
  report.timings.forward = seconds_since(t1);

  auto t2 = Clock::now();
  report.cfl_margin = effective_margin(problem);
  const double dt = problem.grid().dt();
  report.spectrum_ok = true;
  for (const Matrix& Q : report.riccati.Q_seq) {
    if (!spectrum_within(Q, dt)) {
      report.spectrum_ok = false;
      break;
    }
  }
  report.cost = tikhonov_cost_continuous(problem, report.trajectory);

  if (opts.refine_check) {
    EulerOptions sub = opts;
    sub.refine_check = false;
    ContinuousSolveReport fine = solve_continuous(refined_problem(problem), sub);
    double worst = 0.0;
    for (int k = 0; k <= problem.n_steps(); ++k) {
      worst = std::max(worst,
                       (report.trajectory.at(k) - fine.trajectory.at(2 * k)).norm());
    }
    report.self_convergence = worst;
  }

  report.timings.diagnostics = seconds_since(t2);
  report.timings.total = seconds_since(t0);
  return report;
}

Trajectory eta_system_solve(const Problem& problem, const EulerOptions& opts) {
  if (!problem.ops().is_constant()) {
    raise(ErrorCode::NotConstantOperator,
          "eta system requires a time-constant operator sequence");
  }
  require_cfl(problem, opts);

  const int N = problem.n_steps();
  const int m = problem.m();
  const double dt = problem.grid().dt();
  const double inv_alpha = 1.0 / problem.config().alpha;
  const WeightSpec& L = problem.config().weight_L;
  const Matrix& F = problem.F(0);

  // Residual-space curvature integrated backwards from Q(T) = 0; only its
  // state-space image S_k = F^T Q_k F is kept for the later sweeps.
  const int d = problem.d();
  Matrix Qr = Matrix::Zero(d, d);
  std::vector<Matrix> S(static_cast<size_t>(N + 1));
  S[static_cast<size_t>(N)] = Matrix::Zero(m, m);
  const Matrix FFt = linalg::symmetrized(Matrix(F * F.transpose()));
  for (int k = N; k >= 1; --k) {
    Matrix Lk = inv_alpha * L.apply(Matrix(Matrix::Identity(d, d)), k);
    Qr = linalg::symmetrized(Matrix(Qr - dt * (Qr * FFt * Qr - Lk)));
    S[static_cast<size_t>(k - 1)] = linalg::symmetrized(Matrix(F.transpose() * Qr * F));
  }

  // eta backwards from eta(T) = 0
  std::vector<Vector> eta(static_cast<size_t>(N + 1));
  eta[static_cast<size_t>(N)] = Vector::Zero(m);
  for (int k = N; k >= 1; --k) {
    Vector data_term = inv_alpha * (F.transpose() * L.apply(problem.y(k), k));
    eta[static_cast<size_t>(k - 1)] =
        eta[static_cast<size_t>(k)] -
        dt * (S[static_cast<size_t>(k)] * eta[static_cast<size_t>(k)] - data_term);
  }

  // forward sweep for the trajectory
  Trajectory u;
  u.values.resize(static_cast<size_t>(N + 1));
  u.values[0] = problem.config().u0;
  for (int k = 0; k < N; ++k) {
    const Vector& uk = u.values[static_cast<size_t>(k)];
    u.values[static_cast<size_t>(k + 1)] =
        uk + dt * (-(S[static_cast<size_t>(k)] * uk) + eta[static_cast<size_t>(k)]);
  }
  return u;
}

}  // namespace dynreg
