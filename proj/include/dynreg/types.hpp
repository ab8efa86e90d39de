#pragma once

#include <Eigen/Dense>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorCode {
  DimensionMismatch,
  NonFinite,
  InvalidWeight,
  LinearSolveFailure,
  SymmetryViolation,
  ProblemTooLarge,
  CFLViolation,
  SpectrumEscape,
  NotConstantOperator,
  InvalidMeshSpec,
  EllipticityViolation,
  SingularSchurComplement,
  InvalidScenario,
  ConfigError,
  DegenerateFrame,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + msg),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

// ---------------------------------------------------------------------------
// Time grid
// ---------------------------------------------------------------------------

/// Uniform grid t_k = k*T/N on [0, T] with N steps (N+1 nodes).
/// dt is derived, never stored, so dt*n_steps == t_end by construction.
class TimeGrid {
 public:
  TimeGrid(double t_end, int n_steps);

  double t_start() const { return 0.0; }
  double t_end() const { return t_end_; }
  int n_steps() const { return n_steps_; }
  int n_nodes() const { return n_steps_ + 1; }
  double dt() const { return t_end_ / n_steps_; }
  double node(int k) const { return (k * t_end_) / n_steps_; }

  bool operator==(const TimeGrid& other) const = default;

 private:
  double t_end_;
  int n_steps_;
};

// ---------------------------------------------------------------------------
// Operator / data sequences
// ---------------------------------------------------------------------------

/// Time-indexed family of dense operators F_k : R^m -> R^d, one per grid
/// node. Entries are shared (constant-in-time sequences store one matrix),
/// which both saves memory and lets solvers cache per-operator products.
class OperatorSequence {
 public:
  using MatrixPtr = std::shared_ptr<const Matrix>;

  explicit OperatorSequence(std::vector<Matrix> ops);

  /// All nodes share one underlying matrix.
  static OperatorSequence constant(Matrix op, int count);

  int size() const { return static_cast<int>(ops_.size()); }
  int rows() const { return rows_; }  // d
  int cols() const { return cols_; }  // m

  const Matrix& at(int k) const { return *ops_[static_cast<size_t>(k)]; }
  const MatrixPtr& ptr(int k) const { return ops_[static_cast<size_t>(k)]; }

  /// True iff every entry is bitwise equal to the first (shared storage
  /// short-circuits the comparison).
  bool is_constant() const;

  bool operator==(const OperatorSequence& other) const;

 private:
  std::vector<MatrixPtr> ops_;
  int rows_ = 0;
  int cols_ = 0;
};

/// Measured data y_k per grid node, plus the noise level used to create it
/// (0 for noise-free data).
struct DataSequence {
  std::vector<Vector> samples;
  double noise_level = 0.0;

  int size() const { return static_cast<int>(samples.size()); }
  int dim() const { return samples.empty() ? 0 : static_cast<int>(samples.front().size()); }

  /// Root-sum-square norm over all samples; the scale used in residual
  /// tolerances.
  double total_norm() const;

  bool operator==(const DataSequence& other) const;
};

// ---------------------------------------------------------------------------
// Weights and solver configuration
// ---------------------------------------------------------------------------

/// Data-misfit weight L: identity, c*I, or an explicit SPD matrix
/// (optionally one per grid node).
class WeightSpec {
 public:
  enum class Kind { Identity, ScaledIdentity, Matrix };

  WeightSpec() : kind_(Kind::Identity), scale_(1.0) {}

  static WeightSpec identity() { return WeightSpec(); }
  static WeightSpec scaled_identity(double c);
  static WeightSpec matrix(Matrix L);
  static WeightSpec matrix_per_node(std::vector<Matrix> Ls);

  Kind kind() const { return kind_; }
  double scale() const { return scale_; }
  bool node_independent() const { return kind_ != Kind::Matrix || matrices_.size() == 1; }
  int matrix_count() const { return static_cast<int>(matrices_.size()); }
  const Matrix& matrix_at(int k) const;

  /// L * X without materializing scaled identities.
  Matrix apply(const Matrix& X, int k) const;
  Vector apply(const Vector& x, int k) const;
  /// <r, L r>
  double quadratic(const Vector& r, int k) const;

  bool operator==(const WeightSpec& other) const;

 private:
  Kind kind_;
  double scale_;
  std::vector<Matrix> matrices_;  // one entry = constant in time
};

/// Regularization configuration. The control weight M is restricted to
/// alpha*I: the discrete recursions use M = alpha*I directly, the
/// continuous scheme the equivalent parametrization M = I, L_eff =
/// alpha^{-1} L. It therefore carries no storage of its own.
struct RegConfig {
  double alpha = 1.0;
  WeightSpec weight_L;
  Vector u0;

  double m_scale() const { return alpha; }

  bool operator==(const RegConfig& other) const;
};

// ---------------------------------------------------------------------------
// Solver outputs
// ---------------------------------------------------------------------------

/// Reconstructed parameter trajectory u_k, one value per grid node.
struct Trajectory {
  std::vector<Vector> values;

  int size() const { return static_cast<int>(values.size()); }
  int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }

  const Vector& at(int k) const { return values[static_cast<size_t>(k)]; }
  Vector& at(int k) { return values[static_cast<size_t>(k)]; }

  double max_diff(const Trajectory& other) const;

  bool operator==(const Trajectory& other) const;
};

/// Backward Riccati sweep output: value-function curvature Q_k (symmetric
/// PSD) and offset b_k per node.
struct RiccatiSolution {
  std::vector<Matrix> Q_seq;
  std::vector<Vector> b_seq;

  int size() const { return static_cast<int>(Q_seq.size()); }
};

// Tolerances for the RiccatiSolution invariants (relative Frobenius
// asymmetry, and the PSD slack on the minimum eigenvalue).
inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kPsdTol = 1e-10;

// ---------------------------------------------------------------------------
// Validated problem bundle
// ---------------------------------------------------------------------------

/// Immutable, dimension-checked bundle of everything a solver needs.
/// Only constructible through validate_problem().
class Problem {
 public:
  const TimeGrid& grid() const { return grid_; }
  const OperatorSequence& ops() const { return ops_; }
  const DataSequence& data() const { return data_; }
  const RegConfig& config() const { return cfg_; }

  int n_steps() const { return grid_.n_steps(); }
  int m() const { return ops_.cols(); }
  int d() const { return ops_.rows(); }

  const Vector& y(int k) const { return data_.samples[static_cast<size_t>(k)]; }
  const Matrix& F(int k) const { return ops_.at(k); }

  bool operator==(const Problem& other) const;

 private:
  friend Problem validate_problem(const OperatorSequence&, const DataSequence&,
                                  const TimeGrid&, const RegConfig&);

  Problem(OperatorSequence ops, DataSequence data, TimeGrid grid, RegConfig cfg)
      : grid_(grid), ops_(std::move(ops)), data_(std::move(data)), cfg_(std::move(cfg)) {}

  TimeGrid grid_;
  OperatorSequence ops_;
  DataSequence data_;
  RegConfig cfg_;
};

/// Checks mutual dimensional consistency and finiteness of all components.
/// Throws DimensionMismatch / NonFinite / InvalidWeight with the offending
/// component and index in the message.
Problem validate_problem(const OperatorSequence& ops, const DataSequence& data,
                         const TimeGrid& grid, const RegConfig& cfg);

inline Problem validate_problem(const Problem& p) {
  return validate_problem(p.ops(), p.data(), p.grid(), p.config());
}

/// max_k of the spectral norm (largest singular value) of F_k.
double operator_norm_max(const OperatorSequence& ops);

}  // namespace dynreg
