#pragma once

#include "dynreg/continuous.hpp"
#include "dynreg/discrete.hpp"
#include "dynreg/eit.hpp"
#include "dynreg/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dynreg::harness {

// ---------------------------------------------------------------------------
// Configuration
//
// Flat key-value text with [section] headers, '#' or ';' comments. Sections:
// [problem], [solver], [output]. Unknown keys are configuration errors. All
// randomness (synthetic operators, data noise, truth trajectories) flows
// from [output] seed through fixed-purpose mt19937_64 streams, so a config
// plus seed pins every byte of report.csv.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  enum class Kind { Zero, Random, Constant };
  int m = 4;
  int d = 4;
  int n_steps = 20;
  double t_end = 1.0;
  Kind kind = Kind::Random;
  double operator_scale = 1.0;
  double noise_fraction = 0.0;
  bool with_truth = true;  // data generated from a smooth ground-truth trajectory
};

struct ExperimentConfig {
  enum class ProblemType { Synthetic, Eit };
  enum class Method { Discrete, Continuous, Both };
  enum class WeightL { Identity, InvAlpha, Scaled };
  enum class InitialGuess { Zero, Static };

  ProblemType problem_type = ProblemType::Synthetic;
  SyntheticSpec synthetic;

  eit::EITScenario scenario;
  int data_subdivisions = 33;
  eit::DataMode data_mode = eit::DataMode::Linearized;

  Method method = Method::Discrete;
  std::vector<double> alphas{1e-2};
  WeightL weight_l = WeightL::Identity;
  double weight_scale = 1.0;  // for WeightL::Scaled
  InitialGuess initial_guess = InitialGuess::Static;
  bool oracle = false;

  std::string output_dir = "out";
  bool emit_frames = false;
  std::uint64_t seed = 1;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct CenterErrorEntry {
  int k = 0;
  double t = 0.0;
  bool degenerate = false;
  double error = 0.0;  // meaningful only when !degenerate
};

struct FrameInfo {
  int k = 0;
  double min = 0.0;
  double max = 0.0;
  std::string path;
};

struct RunRow {
  std::string method;
  double alpha = 0.0;
  int n_steps = 0;
  int m = 0;
  int d = 0;
  std::optional<double> el_residual;
  double cost = 0.0;
  std::optional<double> oracle_gap;
  std::optional<bool> cfl_pass;
  std::optional<double> cfl_margin;
  std::optional<bool> spectrum_ok;
  std::optional<bool> q_norm_bound_ok;
  std::optional<double> recon_error;  // vs. synthetic ground truth
  std::vector<CenterErrorEntry> center_errors;
  std::vector<FrameInfo> frames;
  PhaseTimings timings;
  Trajectory trajectory;
};

struct RunReport {
  std::vector<RunRow> rows;
  std::string report_csv_path;
  std::string report_json_path;
};

/// Runs the configured experiment and writes report.csv, report.json,
/// center_errors.csv (EIT), mesh.txt (EIT) and frames/ under the output
/// directory. Deterministic: identical config + seed give byte-identical
/// CSV output.
RunReport run_experiment(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Frame metrics
// ---------------------------------------------------------------------------

/// Distance from the positive-part-weighted nodal centroid to the true
/// center. All-nonpositive frames raise DegenerateFrame.
double center_of_mass_error(const eit::Mesh2D& mesh, const Vector& frame,
                            const eit::Point& truth);

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

struct TimingRow {
  int n_steps = 0;
  double seconds = 0.0;
};

struct TimingTable {
  std::vector<TimingRow> rows;
  double loglog_slope = 0.0;
};

/// Wall-times the discrete solver on the configured synthetic problem for
/// each horizon in `n_steps_list` (at least 3 entries spanning a factor of
/// 2; median of `repeats` runs each) and fits the log-log slope.
TimingTable timing_scaling_suite(const ExperimentConfig& base,
                                 const std::vector<int>& n_steps_list,
                                 int repeats = 3);

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Plain (P2) grayscale frame of nodal values on a structured grid,
/// linearly scaled to [0, 255]; returns the (min, max) used for scaling.
std::pair<double, double> write_pgm(const std::string& path, int subdivisions,
                                    const Vector& nodal);

void write_mesh_dump(const eit::Mesh2D& mesh, const std::string& path);

/// Text container for validated problem bundles (round-trips bit-exact).
void save_bundle(const Problem& problem, const std::string& path);
Problem load_bundle(const std::string& path);

}  // namespace dynreg::harness
