#pragma once

#include "dynreg/types.hpp"

namespace dynreg {

/// Wall-clock seconds per solver phase.
struct PhaseTimings {
  double backward = 0.0;
  double forward = 0.0;
  double diagnostics = 0.0;
  double total = 0.0;
};

struct DiscreteSolveReport {
  Trajectory trajectory;
  RiccatiSolution riccati;
  double el_residual = 0.0;     // optimality-system residual of the solution
  double cost = 0.0;            // objective value at the solution
  bool q_norm_bound_ok = false; // max_k ||Q_k|| <= alpha + max_k ||F_k^* L_k F_k||
  PhaseTimings timings;
};

/// Backward value-function sweep:
///   Q_N = F_N^T L_N F_N,                b_N = -F_N^T L_N y_N
///   Q_{k-1} = a (Q_k + aI)^{-1} Q_k + F_{k-1}^T L_{k-1} F_{k-1}
///   b_{k-1} = a (Q_k + aI)^{-1} b_k - F_{k-1}^T L_{k-1} y_{k-1}
/// down to k = 0, with a = alpha. (Q_k + aI)^{-1} is applied through a
/// Cholesky factorization and each Q_k is re-symmetrized, so the returned
/// sequence is symmetric PSD to rounding.
RiccatiSolution riccati_backward(const Problem& problem);

/// Forward sweep u_{k+1} = (Q_{k+1} + aI)^{-1} (a u_k - b_{k+1}) from u_0.
Trajectory trajectory_forward(const RiccatiSolution& riccati, const RegConfig& cfg);

/// Backward + forward sweeps plus diagnostics.
DiscreteSolveReport solve_discrete(const Problem& problem);

/// Root-sum-square over k = 1..N of the optimality-system rows
///   F_k^T L_k F_k u_k - a (u_{k-1} - 2 u_k + u_{k+1}) - F_k^T L_k y_k
/// with the ghost value u_{N+1} = u_N.
double euler_lagrange_residual(const Problem& problem, const Trajectory& u);

/// 1/2 [ sum_{j<N} ( <F_j u_j - y_j, L_j (F_j u_j - y_j)> + a ||u_{j+1} - u_j||^2 ) ]
///   + 1/2 <F_N u_N - y_N, L_N (F_N u_N - y_N)>
double tikhonov_cost_discrete(const Problem& problem, const Trajectory& u);

/// Independent check: assembles the full optimality system over
/// (u_1, ..., u_N) with u_0 fixed — an SPD block-tridiagonal system — and
/// solves it directly. Guarded to N*m <= 20000 (ProblemTooLarge beyond).
Trajectory direct_tikhonov_oracle(const Problem& problem);

inline constexpr int kOracleGuard = 20000;

/// Condition-number ceiling for the (Q_k + aI) solves; beyond it the solver
/// reports LinearSolveFailure instead of returning garbage.
inline constexpr double kCondLimit = 1e14;

}  // namespace dynreg
