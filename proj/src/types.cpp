#include "dynreg/types.hpp"

#include "dynreg/linalg.hpp"

#include <cmath>
#include <sstream>

namespace dynreg {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidWeight: return "InvalidWeight";
    case ErrorCode::LinearSolveFailure: return "LinearSolveFailure";
    case ErrorCode::SymmetryViolation: return "SymmetryViolation";
    case ErrorCode::ProblemTooLarge: return "ProblemTooLarge";
    case ErrorCode::CFLViolation: return "CFLViolation";
    case ErrorCode::SpectrumEscape: return "SpectrumEscape";
    case ErrorCode::NotConstantOperator: return "NotConstantOperator";
    case ErrorCode::InvalidMeshSpec: return "InvalidMeshSpec";
    case ErrorCode::EllipticityViolation: return "EllipticityViolation";
    case ErrorCode::SingularSchurComplement: return "SingularSchurComplement";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DegenerateFrame: return "DegenerateFrame";
  }
  return "UnknownError";
}

// ---------------------------------------------------------------------------
// TimeGrid
// ---------------------------------------------------------------------------

TimeGrid::TimeGrid(double t_end, int n_steps) : t_end_(t_end), n_steps_(n_steps) {
  if (!(t_end > 0.0) || !std::isfinite(t_end)) {
    raise(ErrorCode::DimensionMismatch, "TimeGrid: t_end must be finite and > t_start (0)");
  }
  if (n_steps < 1) {
    raise(ErrorCode::DimensionMismatch, "TimeGrid: n_steps must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// OperatorSequence
// ---------------------------------------------------------------------------

OperatorSequence::OperatorSequence(std::vector<Matrix> ops) {
  if (ops.empty()) {
    raise(ErrorCode::DimensionMismatch, "OperatorSequence: needs at least one operator");
  }
  rows_ = static_cast<int>(ops.front().rows());
  cols_ = static_cast<int>(ops.front().cols());
  if (rows_ < 1 || cols_ < 1) {
    raise(ErrorCode::DimensionMismatch, "OperatorSequence: operators must be nonempty");
  }
  ops_.reserve(ops.size());
  for (size_t k = 0; k < ops.size(); ++k) {
    if (ops[k].rows() != rows_ || ops[k].cols() != cols_) {
      std::ostringstream msg;
      msg << "OperatorSequence: entry " << k << " is " << ops[k].rows() << "x"
          << ops[k].cols() << ", expected " << rows_ << "x" << cols_;
      raise(ErrorCode::DimensionMismatch, msg.str());
    }
    ops_.push_back(std::make_shared<const Matrix>(std::move(ops[k])));
  }
}

OperatorSequence OperatorSequence::constant(Matrix op, int count) {
  if (count < 1) {
    raise(ErrorCode::DimensionMismatch, "OperatorSequence::constant: count must be >= 1");
  }
  OperatorSequence seq(std::vector<Matrix>{std::move(op)});
  seq.ops_.resize(static_cast<size_t>(count), seq.ops_.front());
  return seq;
}

bool OperatorSequence::is_constant() const {
  for (size_t k = 1; k < ops_.size(); ++k) {
    if (ops_[k] == ops_.front()) continue;
    if (*ops_[k] != *ops_.front()) return false;
  }
  return true;
}

bool OperatorSequence::operator==(const OperatorSequence& other) const {
  if (size() != other.size() || rows_ != other.rows_ || cols_ != other.cols_) return false;
  for (int k = 0; k < size(); ++k) {
    if (ops_[static_cast<size_t>(k)] == other.ops_[static_cast<size_t>(k)]) continue;
    if (at(k) != other.at(k)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// DataSequence
// ---------------------------------------------------------------------------

double DataSequence::total_norm() const {
  double sq = 0.0;
  for (const auto& y : samples) sq += y.squaredNorm();
  return std::sqrt(sq);
}

bool DataSequence::operator==(const DataSequence& other) const {
  if (samples.size() != other.samples.size() || noise_level != other.noise_level) return false;
  for (size_t k = 0; k < samples.size(); ++k) {
    if (samples[k] != other.samples[k]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// WeightSpec
// ---------------------------------------------------------------------------

WeightSpec WeightSpec::scaled_identity(double c) {
  WeightSpec w;
  w.kind_ = Kind::ScaledIdentity;
  w.scale_ = c;
  return w;
}

WeightSpec WeightSpec::matrix(Matrix L) {
  WeightSpec w;
  w.kind_ = Kind::Matrix;
  w.scale_ = 0.0;
  w.matrices_.push_back(std::move(L));
  return w;
}

WeightSpec WeightSpec::matrix_per_node(std::vector<Matrix> Ls) {
  if (Ls.empty()) {
    raise(ErrorCode::InvalidWeight, "weight matrix list must not be empty");
  }
  WeightSpec w;
  w.kind_ = Kind::Matrix;
  w.scale_ = 0.0;
  w.matrices_ = std::move(Ls);
  return w;
}

const Matrix& WeightSpec::matrix_at(int k) const {
  if (matrices_.size() == 1) return matrices_.front();
  return matrices_[static_cast<size_t>(k)];
}

Matrix WeightSpec::apply(const Matrix& X, int k) const {
  switch (kind_) {
    case Kind::Identity: return X;
    case Kind::ScaledIdentity: return scale_ * X;
    case Kind::Matrix: return matrix_at(k) * X;
  }
  return X;
}

Vector WeightSpec::apply(const Vector& x, int k) const {
  switch (kind_) {
    case Kind::Identity: return x;
    case Kind::ScaledIdentity: return scale_ * x;
    case Kind::Matrix: return matrix_at(k) * x;
  }
  return x;
}

double WeightSpec::quadratic(const Vector& r, int k) const {
  switch (kind_) {
    case Kind::Identity: return r.squaredNorm();
    case Kind::ScaledIdentity: return scale_ * r.squaredNorm();
    case Kind::Matrix: return r.dot(matrix_at(k) * r);
  }
  return 0.0;
}

bool WeightSpec::operator==(const WeightSpec& other) const {
  if (kind_ != other.kind_) return false;
  if (kind_ == Kind::ScaledIdentity && scale_ != other.scale_) return false;
  if (kind_ == Kind::Matrix) {
    if (matrices_.size() != other.matrices_.size()) return false;
    for (size_t k = 0; k < matrices_.size(); ++k) {
      if (matrices_[k] != other.matrices_[k]) return false;
    }
  }
  return true;
}

bool RegConfig::operator==(const RegConfig& other) const {
  return alpha == other.alpha && weight_L == other.weight_L && u0 == other.u0;
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

double Trajectory::max_diff(const Trajectory& other) const {
  if (size() != other.size() || dim() != other.dim()) {
    raise(ErrorCode::DimensionMismatch, "Trajectory::max_diff: shape mismatch");
  }
  double worst = 0.0;
  for (int k = 0; k < size(); ++k) {
    worst = std::max(worst, (at(k) - other.at(k)).cwiseAbs().maxCoeff());
  }
  return worst;
}

bool Trajectory::operator==(const Trajectory& other) const {
  if (values.size() != other.values.size()) return false;
  for (size_t k = 0; k < values.size(); ++k) {
    if (values[k] != other.values[k]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

void check_weight(const WeightSpec& L, int d, int n_nodes) {
  using Kind = WeightSpec::Kind;
  if (L.kind() == Kind::ScaledIdentity && !(L.scale() > 0.0)) {
    raise(ErrorCode::InvalidWeight, "L = c*I requires c > 0");
  }
  if (L.kind() != Kind::Matrix) return;

  if (!L.node_independent() && L.matrix_count() != n_nodes) {
    std::ostringstream msg;
    msg << "per-node L list has " << L.matrix_count() << " entries, grid has "
        << n_nodes << " nodes";
    raise(ErrorCode::InvalidWeight, msg.str());
  }
  const int count = L.matrix_count();
  for (int k = 0; k < count; ++k) {
    const Matrix& Lk = L.matrix_at(k);
    if (Lk.rows() != d || Lk.cols() != d) {
      std::ostringstream msg;
      msg << "L matrix at node " << k << " is " << Lk.rows() << "x" << Lk.cols()
          << ", expected " << d << "x" << d;
      raise(ErrorCode::InvalidWeight, msg.str());
    }
    if (!Lk.allFinite()) {
      raise(ErrorCode::InvalidWeight, "L matrix has non-finite entries");
    }
    if (linalg::relative_asymmetry(Lk) > kSymmetryTol) {
      raise(ErrorCode::InvalidWeight, "L matrix is not symmetric");
    }
    Eigen::LLT<Matrix> llt(linalg::symmetrized(Lk));
    if (llt.info() != Eigen::Success) {
      raise(ErrorCode::InvalidWeight, "L matrix is not positive definite");
    }
  }
}

}  // namespace

Problem validate_problem(const OperatorSequence& ops, const DataSequence& data,
                         const TimeGrid& grid, const RegConfig& cfg) {
  const int n_nodes = grid.n_nodes();
  if (ops.size() != n_nodes) {
    std::ostringstream msg;
    msg << "operator sequence has " << ops.size() << " entries, grid has "
        << n_nodes << " nodes";
    raise(ErrorCode::DimensionMismatch, msg.str());
  }
  if (data.size() != n_nodes) {
    std::ostringstream msg;
    msg << "data sequence has " << data.size() << " entries, grid has "
        << n_nodes << " nodes";
    raise(ErrorCode::DimensionMismatch, msg.str());
  }
  const int d = ops.rows();
  const int m = ops.cols();
  for (int k = 0; k < n_nodes; ++k) {
    const Vector& yk = data.samples[static_cast<size_t>(k)];
    if (yk.size() != d) {
      std::ostringstream msg;
      msg << "data sample " << k << " has dimension " << yk.size()
          << ", operators map into dimension " << d;
      raise(ErrorCode::DimensionMismatch, msg.str());
    }
  }
  if (cfg.u0.size() != m) {
    std::ostringstream msg;
    msg << "u0 has dimension " << cfg.u0.size() << ", parameter space has dimension " << m;
    raise(ErrorCode::DimensionMismatch, msg.str());
  }

  for (int k = 0; k < n_nodes; ++k) {
    if (!ops.at(k).allFinite()) {
      std::ostringstream msg;
      msg << "operator at node " << k << " has non-finite entries";
      raise(ErrorCode::NonFinite, msg.str());
    }
    if (!data.samples[static_cast<size_t>(k)].allFinite()) {
      std::ostringstream msg;
      msg << "data sample at node " << k << " has non-finite entries";
      raise(ErrorCode::NonFinite, msg.str());
    }
  }
  if (!cfg.u0.allFinite()) {
    raise(ErrorCode::NonFinite, "u0 has non-finite entries");
  }
  if (data.noise_level < 0.0 || !std::isfinite(data.noise_level)) {
    raise(ErrorCode::NonFinite, "noise_level must be finite and >= 0");
  }

  if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) {
    raise(ErrorCode::InvalidWeight, "alpha must be finite and > 0");
  }
  check_weight(cfg.weight_L, d, n_nodes);

  return Problem(ops, data, grid, cfg);
}

bool Problem::operator==(const Problem& other) const {
  return grid_ == other.grid_ && ops_ == other.ops_ && data_ == other.data_ &&
         cfg_ == other.cfg_;
}

double operator_norm_max(const OperatorSequence& ops) {
  double worst = 0.0;
  const Matrix* prev = nullptr;
  double prev_norm = 0.0;
  for (int k = 0; k < ops.size(); ++k) {
    const Matrix& F = ops.at(k);
    if (prev != nullptr && &F == prev) {
      worst = std::max(worst, prev_norm);
      continue;
    }
    prev = &F;
    prev_norm = linalg::spectral_norm(F);
    worst = std::max(worst, prev_norm);
  }
  return worst;
}

}  // namespace dynreg
