#include "dynreg/discrete.hpp"

#include "dynreg/linalg.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>

using namespace dynreg;
using namespace dynreg::testing;

namespace {

// Hand-checkable scalar bundle: m = d = 1, N = 1, F = 1, L = I, alpha = 1,
// y = (1, 1), u0 = 0.
Problem scalar_bundle() {
  OperatorSequence ops = OperatorSequence::constant(Matrix::Ones(1, 1), 2);
  DataSequence data;
  data.samples = {Vector::Ones(1), Vector::Ones(1)};
  RegConfig cfg;
  cfg.alpha = 1.0;
  cfg.u0 = Vector::Zero(1);
  return validate_problem(ops, data, TimeGrid(1.0, 1), cfg);
}

Problem zero_operator_bundle(int m, int d, int N, std::mt19937_64& rng) {
  OperatorSequence ops = OperatorSequence::constant(Matrix::Zero(d, m), N + 1);
  DataSequence data;
  for (int k = 0; k <= N; ++k) data.samples.push_back(random_vector(rng, d));
  RegConfig cfg;
  cfg.alpha = 1.0;
  cfg.u0 = random_vector(rng, m);
  return validate_problem(ops, data, TimeGrid(1.0, N), cfg);
}

// Brute-force reference: assemble the full stationarity system densely and
// factor it. Kept independent of the library's block elimination.
Trajectory dense_oracle(const Problem& p) {
  const int N = p.n_steps();
  const int m = p.m();
  const double a = p.config().alpha;
  const WeightSpec& L = p.config().weight_L;
  Matrix A = Matrix::Zero(N * m, N * m);
  Vector rhs = Vector::Zero(N * m);
  for (int k = 1; k <= N; ++k) {
    const int r = (k - 1) * m;
    Matrix gram = p.F(k).transpose() * L.apply(p.F(k), k);
    A.block(r, r, m, m) = gram + ((k == N) ? a : 2.0 * a) * Matrix::Identity(m, m);
    if (k > 1) {
      A.block(r, r - m, m, m) = -a * Matrix::Identity(m, m);
      A.block(r - m, r, m, m) = -a * Matrix::Identity(m, m);
    }
    rhs.segment(r, m) = p.F(k).transpose() * L.apply(p.y(k), k);
  }
  rhs.segment(0, m) += a * p.config().u0;
  Vector x = Eigen::LDLT<Matrix>(A).solve(rhs);
  Trajectory u;
  u.values.push_back(p.config().u0);
  for (int k = 1; k <= N; ++k) u.values.push_back(x.segment((k - 1) * m, m));
  return u;
}

}  // namespace

TEST_CASE("riccati_backward scalar hand values") {
  RiccatiSolution sol = riccati_backward(scalar_bundle());
  REQUIRE(sol.size() == 2);
  CHECK(sol.Q_seq[1](0, 0) == doctest::Approx(1.0));
  CHECK(sol.Q_seq[0](0, 0) == doctest::Approx(1.5));
  CHECK(sol.b_seq[1](0) == doctest::Approx(-1.0));
  CHECK(sol.b_seq[0](0) == doctest::Approx(-1.5));
}

TEST_CASE("riccati_backward zero operator gives zero solution") {
  std::mt19937_64 rng(23);
  Problem p = zero_operator_bundle(3, 2, 5, rng);
  RiccatiSolution sol = riccati_backward(p);
  for (int k = 0; k <= 5; ++k) {
    CHECK(sol.Q_seq[static_cast<size_t>(k)].norm() == 0.0);
    CHECK(sol.b_seq[static_cast<size_t>(k)].norm() == 0.0);
  }
}

TEST_CASE("riccati_backward b is linear in y, Q untouched") {
  std::mt19937_64 rng(29);
  BundleParams params{.m = 3, .d = 4, .n_steps = 7, .alpha = 0.3};
  Problem p = random_bundle(rng, params);
  RiccatiSolution base = riccati_backward(p);

  DataSequence doubled = p.data();
  for (auto& s : doubled.samples) s *= 2.0;
  Problem p2 = validate_problem(p.ops(), doubled, p.grid(), p.config());
  RiccatiSolution twice = riccati_backward(p2);

  DataSequence zeroed = p.data();
  for (auto& s : zeroed.samples) s.setZero();
  Problem p0 = validate_problem(p.ops(), zeroed, p.grid(), p.config());
  RiccatiSolution none = riccati_backward(p0);

  for (int k = 0; k <= 7; ++k) {
    auto uk = static_cast<size_t>(k);
    CHECK(base.Q_seq[uk] == twice.Q_seq[uk]);  // bitwise: Q never sees y
    CHECK(base.Q_seq[uk] == none.Q_seq[uk]);
    CHECK((2.0 * base.b_seq[uk] - twice.b_seq[uk]).norm() == 0.0);
    CHECK(none.b_seq[uk].norm() == 0.0);
  }
}

TEST_CASE("trajectory_forward scalar hand value and fixed points") {
  Problem p = scalar_bundle();
  Trajectory u = trajectory_forward(riccati_backward(p), p.config());
  REQUIRE(u.size() == 2);
  CHECK(u.at(0)(0) == 0.0);
  CHECK(u.at(1)(0) == doctest::Approx(0.5));

  std::mt19937_64 rng(31);
  Problem pz = zero_operator_bundle(2, 3, 6, rng);
  Trajectory uz = trajectory_forward(riccati_backward(pz), pz.config());
  for (int k = 0; k <= 6; ++k) CHECK((uz.at(k) - pz.config().u0).norm() == 0.0);
}

TEST_CASE("trajectory_forward reproduces a constant exactly-fitting trajectory") {
  // F = I, y = c constant, u0 = c: the constant trajectory fits the data
  // with zero misfit and zero velocity, so it is the unique minimizer.
  const int N = 8;
  Vector c(2);
  c << 0.7, -1.2;
  OperatorSequence ops = OperatorSequence::constant(Matrix::Identity(2, 2), N + 1);
  DataSequence data;
  for (int k = 0; k <= N; ++k) data.samples.push_back(c);
  RegConfig cfg;
  cfg.alpha = 0.5;
  cfg.u0 = c;
  Problem p = validate_problem(ops, data, TimeGrid(1.0, N), cfg);

  Trajectory u = trajectory_forward(riccati_backward(p), p.config());
  for (int k = 0; k <= N; ++k) {
    CHECK((u.at(k) - c).norm() <= 1e-12 * c.norm());
  }
  CHECK(euler_lagrange_residual(p, u) <= 1e-10);
}

TEST_CASE("euler_lagrange_residual hand value") {
  // F = 1, L = I, alpha = 1, y = 1, u = 0, N = 2: each of the two rows is -1.
  OperatorSequence ops = OperatorSequence::constant(Matrix::Ones(1, 1), 3);
  DataSequence data;
  data.samples = {Vector::Ones(1), Vector::Ones(1), Vector::Ones(1)};
  RegConfig cfg;
  cfg.alpha = 1.0;
  cfg.u0 = Vector::Zero(1);
  Problem p = validate_problem(ops, data, TimeGrid(1.0, 2), cfg);
  Trajectory zero;
  zero.values = {Vector::Zero(1), Vector::Zero(1), Vector::Zero(1)};
  CHECK(euler_lagrange_residual(p, zero) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("tikhonov_cost_discrete hand values") {
  Problem p = scalar_bundle();
  Trajectory u;
  u.values = {Vector::Zero(1), 0.5 * Vector::Ones(1)};
  CHECK(tikhonov_cost_discrete(p, u) == doctest::Approx(0.75));

  // all-zero data and trajectory
  OperatorSequence ops = OperatorSequence::constant(Matrix::Ones(2, 2), 3);
  DataSequence data;
  data.samples = {Vector::Zero(2), Vector::Zero(2), Vector::Zero(2)};
  RegConfig cfg;
  cfg.alpha = 2.0;
  cfg.u0 = Vector::Zero(2);
  Problem pz = validate_problem(ops, data, TimeGrid(1.0, 2), cfg);
  Trajectory z;
  z.values = {Vector::Zero(2), Vector::Zero(2), Vector::Zero(2)};
  CHECK(tikhonov_cost_discrete(pz, z) == 0.0);
}

TEST_CASE("solve_discrete composes the pieces") {
  DiscreteSolveReport rep = solve_discrete(scalar_bundle());
  CHECK(rep.trajectory.at(0)(0) == 0.0);
  CHECK(rep.trajectory.at(1)(0) == doctest::Approx(0.5));
  CHECK(rep.q_norm_bound_ok);  // max ||Q|| = 1.5 <= alpha + max||F||^2 = 2
  CHECK(rep.cost == doctest::Approx(0.75));
  CHECK(rep.el_residual <= 1e-12);
  CHECK(rep.timings.total > 0.0);
}

TEST_CASE("solve_discrete with zero operator leaves u0 and accumulates data cost") {
  const int N = 4;
  OperatorSequence ops = OperatorSequence::constant(Matrix::Zero(1, 1), N + 1);
  DataSequence data;
  double want = 0.0;
  for (int k = 0; k <= N; ++k) {
    Vector y(1);
    y << 1.0 + k;
    data.samples.push_back(y);
    want += y(0) * y(0);
  }
  RegConfig cfg;
  cfg.alpha = 1.0;
  cfg.u0 = Vector::Zero(1);
  Problem p = validate_problem(ops, data, TimeGrid(1.0, N), cfg);
  DiscreteSolveReport rep = solve_discrete(p);
  for (int k = 0; k <= N; ++k) CHECK(rep.trajectory.at(k)(0) == 0.0);
  CHECK(rep.cost == doctest::Approx(0.5 * want));
  CHECK(rep.el_residual <= 1e-14);
}

TEST_CASE("direct_tikhonov_oracle hand values") {
  Trajectory u = direct_tikhonov_oracle(scalar_bundle());
  CHECK(u.at(1)(0) == doctest::Approx(0.5));

  std::mt19937_64 rng(37);
  Problem pz = zero_operator_bundle(2, 2, 5, rng);
  Trajectory uz = direct_tikhonov_oracle(pz);
  for (int k = 0; k <= 5; ++k) CHECK((uz.at(k) - pz.config().u0).norm() <= 1e-14);
}

TEST_CASE("direct_tikhonov_oracle matches a dense brute-force assembly") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    BundleParams params;
    params.m = 1 + static_cast<int>(rng() % 4);
    params.d = 1 + static_cast<int>(rng() % 4);
    params.n_steps = 2 + static_cast<int>(rng() % 6);
    params.alpha = 0.05 + 0.5 * static_cast<double>(rng() % 100) / 100.0;
    Problem p = random_bundle(rng, params);
    Trajectory lib = direct_tikhonov_oracle(p);
    Trajectory ref = dense_oracle(p);
    CHECK(lib.max_diff(ref) <= 1e-10);
  }
}

TEST_CASE("oracle guard rejects oversized systems") {
  std::mt19937_64 rng(43);
  BundleParams params{.m = 5, .d = 1, .n_steps = 4005, .alpha = 1.0};
  Problem p = random_bundle(rng, params);
  try {
    direct_tikhonov_oracle(p);
    FAIL("expected ProblemTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ProblemTooLarge);
  }
}

TEST_CASE("DP solution and oracle characterize the same minimizer") {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> log_alpha(std::log(1e-3), std::log(10.0));
  for (int trial = 0; trial < 40; ++trial) {
    BundleParams params;
    params.m = 1 + static_cast<int>(rng() % 8);
    params.d = 1 + static_cast<int>(rng() % 8);
    params.n_steps = 1 + static_cast<int>(rng() % 20);
    params.alpha = std::exp(log_alpha(rng));
    Problem p = random_bundle(rng, params);

    DiscreteSolveReport rep = solve_discrete(p);
    Trajectory oracle = direct_tikhonov_oracle(p);

    const double ynorm = p.data().total_norm();
    const double tol = 1e-8 * (1.0 + p.config().u0.norm() + ynorm);
    CHECK(rep.trajectory.max_diff(oracle) <= tol);
    CHECK(rep.el_residual <= 1e-8 * (1.0 + ynorm));
    CHECK(euler_lagrange_residual(p, oracle) <= 1e-9 * (1.0 + ynorm));
  }
}

TEST_CASE("PSD lemma: Q symmetric PSD with the norm bound") {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> log_alpha(std::log(1e-3), std::log(10.0));
  for (int trial = 0; trial < 25; ++trial) {
    BundleParams params;
    params.m = 1 + static_cast<int>(rng() % 6);
    params.d = 1 + static_cast<int>(rng() % 6);
    params.n_steps = 1 + static_cast<int>(rng() % 20);
    params.alpha = std::exp(log_alpha(rng));
    params.constant_ops = (trial % 3 == 0);
    Problem p = random_bundle(rng, params);

    RiccatiSolution sol = riccati_backward(p);
    double fmax = operator_norm_max(p.ops());
    double bound = p.config().alpha + fmax * fmax;
    for (const Matrix& Q : sol.Q_seq) {
      CHECK(linalg::relative_asymmetry(Q) <= kSymmetryTol);
      auto [lo, hi] = linalg::sym_eig_range(Q);
      CHECK(lo >= -kPsdTol * std::max(1.0, hi));
      CHECK(hi <= bound * (1.0 + 1e-8));
    }
  }
}

TEST_CASE("DP solution minimizes the discrete objective") {
  std::mt19937_64 rng(59);
  BundleParams params{.m = 3, .d = 2, .n_steps = 6, .alpha = 0.2};
  Problem p = random_bundle(rng, params);
  DiscreteSolveReport rep = solve_discrete(p);
  const double base_cost = rep.cost;

  // single-component nudge of an interior node
  {
    Trajectory w = rep.trajectory;
    w.at(3)(1) += 0.01;
    CHECK(base_cost < tikhonov_cost_discrete(p, w));
  }
  // random perturbations keeping u0 fixed
  std::normal_distribution<double> gauss(0.0, 0.05);
  for (int trial = 0; trial < 100; ++trial) {
    Trajectory w = rep.trajectory;
    for (int k = 1; k <= p.n_steps(); ++k) {
      for (int i = 0; i < p.m(); ++i) w.at(k)(i) += gauss(rng);
    }
    CHECK(base_cost <= tikhonov_cost_discrete(p, w));
  }
}

TEST_CASE("static problem: reconstruction approaches the least-squares solution as alpha -> 0") {
  std::mt19937_64 rng(61);
  // full-column-rank F with singular values near 1; generic y is
  // inconsistent, so the least-squares solution is a genuine projection.
  Matrix F = random_matrix(rng, 4, 3);
  F /= Eigen::JacobiSVD<Matrix>(F).singularValues()(0);
  Vector y = random_vector(rng, 4);

  // Short horizon: the influence of the fixed u0 = 0 decays geometrically
  // along the trajectory, so N must stay small for the alpha sweep to stay
  // above the floating-point floor.
  const int N = 3;
  OperatorSequence ops = OperatorSequence::constant(F, N + 1);
  DataSequence data;
  for (int k = 0; k <= N; ++k) data.samples.push_back(y);

  Vector pinv_sol = Eigen::JacobiSVD<Matrix>(F, Eigen::ComputeThinU | Eigen::ComputeThinV)
                        .solve(y);

  double prev_err = std::numeric_limits<double>::infinity();
  for (double alpha : {1.0, 1e-2, 1e-4}) {
    RegConfig cfg;
    cfg.alpha = alpha;
    cfg.u0 = Vector::Zero(3);
    Problem p = validate_problem(ops, data, TimeGrid(1.0, N), cfg);
    Trajectory u = trajectory_forward(riccati_backward(p), cfg);
    double err = (u.at(N) - pinv_sol).norm();
    CHECK(err < prev_err);
    prev_err = err;
  }
  CHECK(prev_err <= 1e-3 * (1.0 + pinv_sol.norm()));
}

TEST_CASE("noise/parameter coupling alpha(delta) = delta shrinks the error") {
  std::mt19937_64 rng(67);
  Matrix F = random_matrix(rng, 3, 3) + 3.0 * Matrix::Identity(3, 3);
  Vector ustar = random_vector(rng, 3);
  const int N = 12;
  OperatorSequence ops = OperatorSequence::constant(F, N + 1);
  DataSequence clean;
  for (int k = 0; k <= N; ++k) clean.samples.push_back(F * ustar);

  // unit-norm perturbation direction per sample
  std::vector<Vector> w;
  for (int k = 0; k <= N; ++k) {
    Vector v = random_vector(rng, 3);
    w.push_back(v / v.norm());
  }

  double prev_err = std::numeric_limits<double>::infinity();
  for (double delta : {1e-1, 1e-2, 1e-3}) {
    DataSequence noisy = clean;
    noisy.noise_level = delta;
    for (int k = 0; k <= N; ++k) noisy.samples[static_cast<size_t>(k)] += delta * w[static_cast<size_t>(k)];
    RegConfig cfg;
    cfg.alpha = delta;
    cfg.u0 = ustar;  // noise-free minimizer is the constant trajectory u*
    Problem p = validate_problem(ops, noisy, TimeGrid(1.0, N), cfg);
    Trajectory u = trajectory_forward(riccati_backward(p), cfg);
    double err = 0.0;
    for (int k = 0; k <= N; ++k) err = std::max(err, (u.at(k) - ustar).norm());
    CHECK(err <= prev_err);
    prev_err = err;
  }
}

TEST_CASE("explicit SPD misfit weights flow through solver, oracle and diagnostics") {
  std::mt19937_64 rng(71);
  const int N = 6, m = 3, d = 4;

  auto random_spd = [&](double shift) {
    Matrix A = random_matrix(rng, d, d);
    return Matrix(linalg::symmetrized(Matrix(A * A.transpose())) + shift * Matrix::Identity(d, d));
  };

  BundleParams params{.m = m, .d = d, .n_steps = N, .alpha = 0.4};
  Problem base = random_bundle(rng, params);

  // one constant matrix weight, and a per-node list (with constant operators
  // so per-node weights defeat any operator-level caching)
  std::vector<Matrix> per_node;
  for (int k = 0; k <= N; ++k) per_node.push_back(random_spd(0.5 + 0.1 * k));
  BundleParams cparams = params;
  cparams.constant_ops = true;
  Problem cbase = random_bundle(rng, cparams);

  struct Case {
    Problem p;
  };
  RegConfig cfg1 = base.config();
  cfg1.weight_L = WeightSpec::matrix(random_spd(1.0));
  RegConfig cfg2 = cbase.config();
  cfg2.weight_L = WeightSpec::matrix_per_node(per_node);
  std::vector<Case> cases{
      {validate_problem(base.ops(), base.data(), base.grid(), cfg1)},
      {validate_problem(cbase.ops(), cbase.data(), cbase.grid(), cfg2)},
  };

  for (const Case& c : cases) {
    DiscreteSolveReport rep = solve_discrete(c.p);
    Trajectory oracle = direct_tikhonov_oracle(c.p);
    Trajectory dense = dense_oracle(c.p);
    double tol = 1e-8 * (1.0 + c.p.config().u0.norm() + c.p.data().total_norm());
    CHECK(rep.trajectory.max_diff(oracle) <= tol);
    CHECK(rep.trajectory.max_diff(dense) <= tol);
    CHECK(rep.el_residual <= tol);
    CHECK(rep.q_norm_bound_ok);

    // minimizer property holds in the weighted geometry too
    std::normal_distribution<double> gauss(0.0, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
      Trajectory w = rep.trajectory;
      for (int k = 1; k <= N; ++k)
        for (int i = 0; i < m; ++i) w.at(k)(i) += gauss(rng);
      CHECK(tikhonov_cost_discrete(c.p, rep.trajectory) <= tikhonov_cost_discrete(c.p, w));
    }
  }
}

TEST_CASE("conditioning guard triggers on degenerate alpha") {
  OperatorSequence ops = OperatorSequence::constant(10.0 * Matrix::Ones(1, 1), 3);
  DataSequence data;
  data.samples = {Vector::Ones(1), Vector::Ones(1), Vector::Ones(1)};
  RegConfig cfg;
  cfg.alpha = 1e-13;
  cfg.u0 = Vector::Zero(1);
  Problem p = validate_problem(ops, data, TimeGrid(1.0, 2), cfg);
  try {
    riccati_backward(p);
    FAIL("expected LinearSolveFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LinearSolveFailure);
  }
}
