#pragma once

#include "dynreg/discrete.hpp"
#include "dynreg/types.hpp"

#include <optional>

namespace dynreg {

struct CflReport {
  bool pass = false;
  double margin = 0.0;  // 1/2 - dt^2 max||F||^2 / alpha
  double max_dt = 0.0;  // largest admissible step, +inf for F == 0
};

/// Step-size check for the explicit scheme:
///   dt^2 * max_t ||F(t)||^2 / alpha <= 1/2.
CflReport cfl_check(const OperatorSequence& ops, const TimeGrid& grid, double alpha);

struct EulerOptions {
  /// Refuse to integrate when the step-size condition fails. Switching this
  /// off exists for instability demonstrations and disables the spectrum
  /// guard as well.
  bool enforce_cfl = true;
  /// Re-solve at dt/2 (operators/data interpolated linearly in t) and record
  /// the difference as a self-convergence estimate.
  bool refine_check = false;
};

/// Explicit Euler sweep of the matrix Riccati system, backwards from
/// Q(T) = 0, b(T) = 0:
///   Q_{k-1} = Q_k - dt (Q_k^2 - a^{-1} F_k^T L_k F_k)
///   b_{k-1} = b_k - dt (Q_k b_k + a^{-1} F_k^T L_k y_k)
/// This realizes the control weight M = I with misfit weight a^{-1} L.
/// Under the step-size condition every Q_k is symmetric PSD with
/// spectrum(dt Q_k) inside [0, 1]; leaving that interval raises
/// SpectrumEscape.
RiccatiSolution euler_riccati_backward(const Problem& problem, const EulerOptions& opts = {});

/// Forward sweep u_{k+1} = u_k + dt (-Q_k u_k - b_k) from u_0.
Trajectory euler_trajectory_forward(const RiccatiSolution& riccati, const RegConfig& cfg,
                                    const TimeGrid& grid);

struct ContinuousSolveReport {
  Trajectory trajectory;
  RiccatiSolution riccati;
  double cfl_margin = 0.0;
  bool spectrum_ok = false;  // spectrum(dt Q_k) within [-1e-10, 1+1e-10] for all k
  double cost = 0.0;
  PhaseTimings timings;
  std::optional<double> self_convergence;  // set when refine_check requested
};

ContinuousSolveReport solve_continuous(const Problem& problem, const EulerOptions& opts = {});

/// Constant-operator shortcut that never touches the data derivative:
/// integrates the residual-space Riccati operator backwards, then
///   eta_{k-1} = eta_k - dt (F^T Q_k F eta_k - a^{-1} F^T L y_k),  eta_N = 0
///   u_{k+1}   = u_k + dt (-F^T Q_k F u_k + eta_k)
/// Requires every F_k equal (NotConstantOperator otherwise); algebraically
/// step-equivalent to the general path on the same grid.
Trajectory eta_system_solve(const Problem& problem, const EulerOptions& opts = {});

/// 1/2 integral of <F u - y, a^{-1} L (F u - y)> + ||u'||^2: trapezoidal rule
/// for the misfit, forward differences (exact for the piecewise-linear
/// interpolant) for the velocity term.
double tikhonov_cost_continuous(const Problem& problem, const Trajectory& u);

/// Spectrum slack for the stability checks.
inline constexpr double kSpectrumTol = 1e-10;

}  // namespace dynreg
