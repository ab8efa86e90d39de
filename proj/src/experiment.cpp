#include "dynreg/experiment.hpp"

#include "dynreg/linalg.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace dynreg::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_between(Clock::time_point a, Clock::time_point b) {
  return std::max(std::chrono::duration<double>(b - a).count(), 1e-9);
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// fixed-purpose RNG streams derived from the single config seed
enum class Stream : std::uint64_t { Operators = 1, Noise = 2, Truth = 3 };

std::uint64_t stream_seed(std::uint64_t base, Stream tag) {
  std::uint64_t x = base + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(tag) + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

[[noreturn]] void config_error(const std::string& field, const std::string& reason) {
  raise(ErrorCode::ConfigError, field + ": " + reason);
}

double parse_double(const std::string& field, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) config_error(field, "trailing characters in '" + value + "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    config_error(field, "cannot parse number '" + value + "'");
  }
}

long long parse_int(const std::string& field, const std::string& value) {
  try {
    size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size()) config_error(field, "trailing characters in '" + value + "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    config_error(field, "cannot parse integer '" + value + "'");
  }
}

bool parse_bool(const std::string& field, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  config_error(field, "expected a boolean, got '" + value + "'");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') config_error("line " + std::to_string(line_no), "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section != "problem" && section != "solver" && section != "output") {
        config_error(section, "unknown section");
      }
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos) {
      config_error("line " + std::to_string(line_no), "expected key = value");
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    std::string field = section + "." + key;
    if (section.empty()) config_error(key, "key outside any section");

    if (section == "problem") {
      if (key == "type") {
        if (value == "synthetic") cfg.problem_type = ExperimentConfig::ProblemType::Synthetic;
        else if (value == "eit") cfg.problem_type = ExperimentConfig::ProblemType::Eit;
        else config_error(field, "expected synthetic|eit");
      } else if (key == "m") cfg.synthetic.m = static_cast<int>(parse_int(field, value));
      else if (key == "d") cfg.synthetic.d = static_cast<int>(parse_int(field, value));
      else if (key == "n_steps") cfg.synthetic.n_steps = static_cast<int>(parse_int(field, value));
      else if (key == "t_end") cfg.synthetic.t_end = parse_double(field, value);
      else if (key == "kind") {
        if (value == "zero") cfg.synthetic.kind = SyntheticSpec::Kind::Zero;
        else if (value == "random") cfg.synthetic.kind = SyntheticSpec::Kind::Random;
        else if (value == "constant") cfg.synthetic.kind = SyntheticSpec::Kind::Constant;
        else config_error(field, "expected zero|random|constant");
      } else if (key == "operator_scale") cfg.synthetic.operator_scale = parse_double(field, value);
      else if (key == "with_truth") cfg.synthetic.with_truth = parse_bool(field, value);
      else if (key == "noise_fraction") {
        cfg.synthetic.noise_fraction = parse_double(field, value);
        cfg.scenario.noise_fraction = cfg.synthetic.noise_fraction;
      } else if (key == "subdivisions") cfg.scenario.grid_subdivisions = static_cast<int>(parse_int(field, value));
      else if (key == "data_subdivisions") cfg.data_subdivisions = static_cast<int>(parse_int(field, value));
      else if (key == "time_samples") cfg.scenario.time_samples = static_cast<int>(parse_int(field, value));
      else if (key == "inclusion_radius") cfg.scenario.inclusion_radius = parse_double(field, value);
      else if (key == "inclusion_contrast") cfg.scenario.inclusion_contrast = parse_double(field, value);
      else if (key == "orbit_base_x") cfg.scenario.path.base.x() = parse_double(field, value);
      else if (key == "orbit_base_y") cfg.scenario.path.base.y() = parse_double(field, value);
      else if (key == "orbit_radius") cfg.scenario.path.orbit_radius = parse_double(field, value);
      else if (key == "data_mode") {
        if (value == "linearized") cfg.data_mode = eit::DataMode::Linearized;
        else if (value == "nonlinear") cfg.data_mode = eit::DataMode::Nonlinear;
        else config_error(field, "expected linearized|nonlinear");
      } else config_error(field, "unknown key");
    } else if (section == "solver") {
      if (key == "method") {
        if (value == "discrete") cfg.method = ExperimentConfig::Method::Discrete;
        else if (value == "continuous") cfg.method = ExperimentConfig::Method::Continuous;
        else if (value == "both") cfg.method = ExperimentConfig::Method::Both;
        else config_error(field, "expected discrete|continuous|both");
      } else if (key == "alpha") {
        cfg.alphas.clear();
        std::istringstream list(value);
        std::string item;
        while (std::getline(list, item, ',')) {
          cfg.alphas.push_back(parse_double(field, trim(item)));
        }
        if (cfg.alphas.empty()) config_error(field, "empty alpha list");
      } else if (key == "weight_l") {
        if (value == "identity") cfg.weight_l = ExperimentConfig::WeightL::Identity;
        else if (value == "inv_alpha") cfg.weight_l = ExperimentConfig::WeightL::InvAlpha;
        else if (value.rfind("scaled:", 0) == 0) {
          cfg.weight_l = ExperimentConfig::WeightL::Scaled;
          cfg.weight_scale = parse_double(field, value.substr(7));
          if (!(cfg.weight_scale > 0.0)) config_error(field, "scale must be > 0");
        } else config_error(field, "expected identity|inv_alpha|scaled:<c>");
      } else if (key == "initial_guess") {
        if (value == "zero") cfg.initial_guess = ExperimentConfig::InitialGuess::Zero;
        else if (value == "static") cfg.initial_guess = ExperimentConfig::InitialGuess::Static;
        else config_error(field, "expected zero|static");
      } else if (key == "oracle") cfg.oracle = parse_bool(field, value);
      else config_error(field, "unknown key");
    } else {  // output
      if (key == "dir") cfg.output_dir = value;
      else if (key == "emit_frames") cfg.emit_frames = parse_bool(field, value);
      else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(field, value));
      else config_error(field, "unknown key");
    }
  }

  for (double a : cfg.alphas) {
    if (!(a > 0.0)) config_error("solver.alpha", "entries must be > 0");
  }
  if (cfg.synthetic.noise_fraction < 0.0 || cfg.synthetic.noise_fraction >= 1.0) {
    config_error("problem.noise_fraction", "must lie in [0, 1)");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    config_error(path, "cannot open config file");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// ---------------------------------------------------------------------------
// problem construction
// ---------------------------------------------------------------------------

namespace {

struct SyntheticProblem {
  OperatorSequence ops;
  DataSequence data;
  TimeGrid grid;
  std::optional<Trajectory> truth;
  Vector u0;
};

SyntheticProblem build_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  TimeGrid grid(spec.t_end, spec.n_steps);
  const int nodes = grid.n_nodes();

  std::mt19937_64 op_rng(stream_seed(seed, Stream::Operators));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  auto random_op = [&] {
    Matrix F(spec.d, spec.m);
    for (int i = 0; i < spec.d; ++i)
      for (int j = 0; j < spec.m; ++j) F(i, j) = spec.operator_scale * uni(op_rng);
    return F;
  };

  OperatorSequence ops = [&] {
    switch (spec.kind) {
      case SyntheticSpec::Kind::Zero:
        return OperatorSequence::constant(Matrix::Zero(spec.d, spec.m), nodes);
      case SyntheticSpec::Kind::Constant:
        return OperatorSequence::constant(random_op(), nodes);
      case SyntheticSpec::Kind::Random:
      default: {
        std::vector<Matrix> fs;
        fs.reserve(static_cast<size_t>(nodes));
        for (int k = 0; k < nodes; ++k) fs.push_back(random_op());
        return OperatorSequence(std::move(fs));
      }
    }
  }();

  std::optional<Trajectory> truth;
  DataSequence data;
  data.noise_level = spec.noise_fraction;
  if (spec.with_truth) {
    std::mt19937_64 truth_rng(stream_seed(seed, Stream::Truth));
    Vector a(spec.m), b(spec.m), c(spec.m);
    for (int i = 0; i < spec.m; ++i) {
      a[i] = uni(truth_rng);
      b[i] = uni(truth_rng);
      c[i] = uni(truth_rng);
    }
    Trajectory t;
    t.values.reserve(static_cast<size_t>(nodes));
    for (int k = 0; k < nodes; ++k) {
      double tk = grid.node(k);
      t.values.push_back(a + tk * b + std::sin(2.0 * M_PI * tk) * c);
    }
    for (int k = 0; k < nodes; ++k) data.samples.push_back(ops.at(k) * t.values[static_cast<size_t>(k)]);
    truth = std::move(t);
  } else {
    std::mt19937_64 data_rng(stream_seed(seed, Stream::Truth));
    for (int k = 0; k < nodes; ++k) {
      Vector y(spec.d);
      for (int i = 0; i < spec.d; ++i) y[i] = uni(data_rng);
      data.samples.push_back(y);
    }
  }

  if (spec.noise_fraction > 0.0) {
    std::mt19937_64 noise_rng(stream_seed(seed, Stream::Noise));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& y : data.samples) {
      double scale = y.norm();
      if (scale == 0.0) continue;
      Vector g(y.size());
      for (int i = 0; i < g.size(); ++i) g[i] = gauss(noise_rng);
      y += spec.noise_fraction * scale * g / g.norm();
    }
  }

  Vector u0 = truth ? truth->values.front() : Vector::Zero(spec.m);
  return SyntheticProblem{std::move(ops), std::move(data), grid, std::move(truth), std::move(u0)};
}

struct EitSetup {
  eit::Mesh2D inversion_mesh;
  eit::Mesh2D data_mesh;
  Matrix F;     // linearized forward, flattened
  Matrix FtF;   // cached for the static initial guess
  DataSequence data;
  TimeGrid grid{1.0, 1};
  std::vector<eit::Point> centers;
};

EitSetup build_eit(const ExperimentConfig& config, std::uint64_t seed) {
  eit::validate_scenario(config.scenario);
  EitSetup setup;
  setup.inversion_mesh = eit::build_mesh(config.scenario.grid_subdivisions, eit::MeshKind::Structured);
  setup.data_mesh = eit::build_mesh(config.data_subdivisions, eit::MeshKind::Unstructured);

  eit::LinearizedForward lin(setup.inversion_mesh);
  setup.F = lin.matrix();
  setup.FtF = linalg::symmetrized(Matrix(setup.F.transpose() * setup.F));

  std::mt19937_64 noise_rng(stream_seed(seed, Stream::Noise));
  setup.data = eit::simulate_data(config.scenario, config.data_mode, setup.inversion_mesh,
                                  setup.data_mesh, noise_rng);

  const int N = config.scenario.time_samples - 1;
  setup.grid = TimeGrid(1.0, N);
  for (int k = 0; k <= N; ++k) {
    setup.centers.push_back(eit::path_center(config.scenario.path, setup.grid.node(k)));
  }
  return setup;
}

WeightSpec make_weight(const ExperimentConfig& config, double alpha) {
  switch (config.weight_l) {
    case ExperimentConfig::WeightL::Identity: return WeightSpec::identity();
    case ExperimentConfig::WeightL::InvAlpha: return WeightSpec::scaled_identity(1.0 / alpha);
    case ExperimentConfig::WeightL::Scaled: return WeightSpec::scaled_identity(config.weight_scale);
  }
  return WeightSpec::identity();
}

// Static initial guess: minimize <F u - y0, L (F u - y0)> + alpha ||u||^2,
// the single-frame restriction of the dynamic objective.
Vector static_initial_guess(const Matrix& FtF, const Matrix& F, const Vector& y0,
                            const WeightSpec& L, double alpha) {
  const auto m = FtF.rows();
  double c = L.kind() == WeightSpec::Kind::ScaledIdentity ? L.scale() : 1.0;
  Matrix A = c * FtF + alpha * Matrix::Identity(m, m);
  Vector rhs = c * (F.transpose() * y0);
  return Eigen::LDLT<Matrix>(A).solve(rhs);
}

// ---------------------------------------------------------------------------
// CSV / JSON writers
// ---------------------------------------------------------------------------

constexpr const char* kReportHeader =
    "# dynreg report v1\n"
    "method,alpha,n_steps,m,d,el_residual,cost,oracle_gap,cfl_pass,cfl_margin,"
    "spectrum_ok,q_norm_bound_ok,recon_error,com_error_max,com_degenerate\n";

std::string opt_num(const std::optional<double>& v) { return v ? fmt(*v) : ""; }
std::string opt_bool(const std::optional<bool>& v) { return v ? (*v ? "1" : "0") : ""; }

void write_report_csv(const std::string& path, const std::vector<RunRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  out << kReportHeader;
  for (const RunRow& r : rows) {
    std::optional<double> com_max;
    int degenerate = 0;
    for (const auto& ce : r.center_errors) {
      if (ce.degenerate) {
        ++degenerate;
      } else if (!com_max || ce.error > *com_max) {
        com_max = ce.error;
      }
    }
    out << r.method << ',' << fmt(r.alpha) << ',' << r.n_steps << ',' << r.m << ','
        << r.d << ',' << opt_num(r.el_residual) << ',' << fmt(r.cost) << ','
        << opt_num(r.oracle_gap) << ',' << opt_bool(r.cfl_pass) << ','
        << opt_num(r.cfl_margin) << ',' << opt_bool(r.spectrum_ok) << ','
        << opt_bool(r.q_norm_bound_ok) << ',' << opt_num(r.recon_error) << ','
        << (com_max ? fmt(*com_max) : "") << ',' << degenerate << '\n';
  }
}

void write_center_errors_csv(const std::string& path, const std::vector<RunRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  out << "# dynreg center-errors v1\n"
      << "method,alpha,k,t,degenerate,com_error\n";
  for (const RunRow& r : rows) {
    for (const auto& ce : r.center_errors) {
      out << r.method << ',' << fmt(r.alpha) << ',' << ce.k << ',' << fmt(ce.t) << ','
          << (ce.degenerate ? 1 : 0) << ',' << (ce.degenerate ? "" : fmt(ce.error)) << '\n';
    }
  }
}

json row_to_json(const RunRow& r) {
  json j;
  j["method"] = r.method;
  j["alpha"] = r.alpha;
  j["n_steps"] = r.n_steps;
  j["m"] = r.m;
  j["d"] = r.d;
  j["cost"] = r.cost;
  if (r.el_residual) j["el_residual"] = *r.el_residual;
  if (r.oracle_gap) j["oracle_gap"] = *r.oracle_gap;
  if (r.cfl_pass) j["cfl_pass"] = *r.cfl_pass;
  if (r.cfl_margin) j["cfl_margin"] = *r.cfl_margin;
  if (r.spectrum_ok) j["spectrum_ok"] = *r.spectrum_ok;
  if (r.q_norm_bound_ok) j["q_norm_bound_ok"] = *r.q_norm_bound_ok;
  if (r.recon_error) j["recon_error"] = *r.recon_error;
  j["timings"] = {{"backward", r.timings.backward},
                  {"forward", r.timings.forward},
                  {"diagnostics", r.timings.diagnostics},
                  {"total", r.timings.total}};
  if (!r.center_errors.empty()) {
    json list = json::array();
    for (const auto& ce : r.center_errors) {
      json e;
      e["k"] = ce.k;
      e["t"] = ce.t;
      e["degenerate"] = ce.degenerate;
      if (!ce.degenerate) e["error"] = ce.error;
      list.push_back(e);
    }
    j["center_errors"] = list;
  }
  if (!r.frames.empty()) {
    json list = json::array();
    for (const auto& f : r.frames) {
      list.push_back({{"k", f.k}, {"min", f.min}, {"max", f.max}, {"path", f.path}});
    }
    j["frames"] = list;
  }
  return j;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["problem"] = c.problem_type == ExperimentConfig::ProblemType::Eit ? "eit" : "synthetic";
  j["method"] = c.method == ExperimentConfig::Method::Discrete     ? "discrete"
                : c.method == ExperimentConfig::Method::Continuous ? "continuous"
                                                                   : "both";
  j["alphas"] = c.alphas;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["emit_frames"] = c.emit_frames;
  if (c.problem_type == ExperimentConfig::ProblemType::Eit) {
    j["scenario"] = {{"subdivisions", c.scenario.grid_subdivisions},
                     {"time_samples", c.scenario.time_samples},
                     {"inclusion_radius", c.scenario.inclusion_radius},
                     {"inclusion_contrast", c.scenario.inclusion_contrast},
                     {"noise_fraction", c.scenario.noise_fraction},
                     {"data_subdivisions", c.data_subdivisions},
                     {"data_mode", c.data_mode == eit::DataMode::Linearized ? "linearized" : "nonlinear"}};
  } else {
    j["synthetic"] = {{"m", c.synthetic.m},
                      {"d", c.synthetic.d},
                      {"n_steps", c.synthetic.n_steps},
                      {"noise_fraction", c.synthetic.noise_fraction},
                      {"with_truth", c.synthetic.with_truth}};
  }
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

double center_of_mass_error(const eit::Mesh2D& mesh, const Vector& frame,
                            const eit::Point& truth) {
  if (frame.size() != mesh.n_vertices()) {
    raise(ErrorCode::DimensionMismatch, "frame does not match mesh vertex count");
  }
  double wsum = 0.0;
  eit::Point centroid(0.0, 0.0);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    double w = std::max(frame[v], 0.0);
    wsum += w;
    centroid += w * mesh.vertices[static_cast<size_t>(v)];
  }
  if (wsum <= 0.0) {
    raise(ErrorCode::DegenerateFrame, "all nodal values are non-positive");
  }
  return (centroid / wsum - truth).norm();
}

// ---------------------------------------------------------------------------
// file formats
// ---------------------------------------------------------------------------

std::pair<double, double> write_pgm(const std::string& path, int subdivisions,
                                    const Vector& nodal) {
  const int n = subdivisions;
  if (nodal.size() != (n + 1) * (n + 1)) {
    raise(ErrorCode::DimensionMismatch, "nodal vector does not match a structured grid");
  }
  double lo = nodal.minCoeff();
  double hi = nodal.maxCoeff();
  std::ofstream out(path, std::ios::binary);
  out << "P2\n" << (n + 1) << ' ' << (n + 1) << "\n255\n";
  for (int row = 0; row <= n; ++row) {
    int iy = n - row;  // image rows top-down
    for (int ix = 0; ix <= n; ++ix) {
      int value = 0;
      if (hi > lo) {
        value = static_cast<int>(std::lround(255.0 * (nodal[iy * (n + 1) + ix] - lo) / (hi - lo)));
      }
      out << value << (ix == n ? '\n' : ' ');
    }
  }
  return {lo, hi};
}

void write_mesh_dump(const eit::Mesh2D& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  out << "# dynreg mesh v1\n";
  out << "vertices " << mesh.n_vertices() << '\n';
  for (const auto& p : mesh.vertices) out << fmt(p.x()) << ' ' << fmt(p.y()) << '\n';
  out << "triangles " << mesh.triangles.size() << '\n';
  for (const auto& t : mesh.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  out << "boundary " << mesh.n_boundary() << '\n';
  for (int v : mesh.boundary_vertices) out << v << '\n';
  out << "reference " << mesh.reference_boundary_index << '\n';
}

// ---------------------------------------------------------------------------
// bundle container
// ---------------------------------------------------------------------------

void save_bundle(const Problem& problem, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  out << "dynreg-bundle v1\n";
  out << "grid " << fmt(problem.grid().t_end()) << ' ' << problem.n_steps() << '\n';
  out << "dims " << problem.d() << ' ' << problem.m() << '\n';
  out << "alpha " << fmt(problem.config().alpha) << '\n';

  const WeightSpec& L = problem.config().weight_L;
  switch (L.kind()) {
    case WeightSpec::Kind::Identity:
      out << "weight identity\n";
      break;
    case WeightSpec::Kind::ScaledIdentity:
      out << "weight scaled " << fmt(L.scale()) << '\n';
      break;
    case WeightSpec::Kind::Matrix: {
      out << "weight matrix " << L.matrix_count() << '\n';
      for (int b = 0; b < L.matrix_count(); ++b) {
        const Matrix& M = L.matrix_at(b);
        for (int i = 0; i < M.rows(); ++i) {
          for (int j = 0; j < M.cols(); ++j) out << (j ? " " : "") << fmt(M(i, j));
          out << '\n';
        }
      }
      break;
    }
  }

  out << "u0";
  for (int i = 0; i < problem.m(); ++i) out << ' ' << fmt(problem.config().u0[i]);
  out << '\n';
  out << "noise_level " << fmt(problem.data().noise_level) << '\n';

  bool shared = problem.ops().is_constant();
  out << "operators " << (shared ? "constant" : "varying") << '\n';
  const int count = shared ? 1 : problem.ops().size();
  for (int k = 0; k < count; ++k) {
    const Matrix& F = problem.F(k);
    for (int i = 0; i < F.rows(); ++i) {
      for (int j = 0; j < F.cols(); ++j) out << (j ? " " : "") << fmt(F(i, j));
      out << '\n';
    }
  }
  out << "data\n";
  for (int k = 0; k <= problem.n_steps(); ++k) {
    const Vector& y = problem.y(k);
    for (int i = 0; i < y.size(); ++i) out << (i ? " " : "") << fmt(y[i]);
    out << '\n';
  }
}

Problem load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::ConfigError, "cannot open bundle file " + path);
  std::string token;

  auto expect = [&](const std::string& want) {
    in >> token;
    if (token != want) {
      raise(ErrorCode::ConfigError, "bundle format: expected '" + want + "', got '" + token + "'");
    }
  };

  expect("dynreg-bundle");
  expect("v1");
  expect("grid");
  double t_end;
  int n_steps;
  in >> t_end >> n_steps;
  expect("dims");
  int d, m;
  in >> d >> m;
  expect("alpha");
  RegConfig cfg;
  in >> cfg.alpha;

  expect("weight");
  in >> token;
  if (token == "identity") {
    cfg.weight_L = WeightSpec::identity();
  } else if (token == "scaled") {
    double c;
    in >> c;
    cfg.weight_L = WeightSpec::scaled_identity(c);
  } else if (token == "matrix") {
    int count;
    in >> count;
    std::vector<Matrix> mats;
    for (int b = 0; b < count; ++b) {
      Matrix M(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) in >> M(i, j);
      mats.push_back(std::move(M));
    }
    cfg.weight_L = count == 1 ? WeightSpec::matrix(mats.front())
                              : WeightSpec::matrix_per_node(std::move(mats));
  } else {
    raise(ErrorCode::ConfigError, "bundle format: unknown weight kind '" + token + "'");
  }

  expect("u0");
  cfg.u0.resize(m);
  for (int i = 0; i < m; ++i) in >> cfg.u0[i];
  expect("noise_level");
  DataSequence data;
  in >> data.noise_level;

  expect("operators");
  in >> token;
  OperatorSequence ops = [&] {
    if (token == "constant") {
      Matrix F(d, m);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < m; ++j) in >> F(i, j);
      return OperatorSequence::constant(std::move(F), n_steps + 1);
    }
    std::vector<Matrix> fs;
    for (int k = 0; k <= n_steps; ++k) {
      Matrix F(d, m);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < m; ++j) in >> F(i, j);
      fs.push_back(std::move(F));
    }
    return OperatorSequence(std::move(fs));
  }();

  expect("data");
  for (int k = 0; k <= n_steps; ++k) {
    Vector y(d);
    for (int i = 0; i < d; ++i) in >> y[i];
    data.samples.push_back(std::move(y));
  }
  if (!in) raise(ErrorCode::ConfigError, "bundle file truncated: " + path);

  return validate_problem(ops, data, TimeGrid(t_end, n_steps), cfg);
}

// ---------------------------------------------------------------------------
// experiment driver
// ---------------------------------------------------------------------------

RunReport run_experiment(const ExperimentConfig& config) {
  fs::create_directories(config.output_dir);

  const bool is_eit = config.problem_type == ExperimentConfig::ProblemType::Eit;
  std::optional<SyntheticProblem> synthetic;
  std::optional<EitSetup> eit_setup;
  if (is_eit) {
    eit_setup = build_eit(config, config.seed);
    write_mesh_dump(eit_setup->inversion_mesh, (fs::path(config.output_dir) / "mesh.txt").string());
  } else {
    synthetic = build_synthetic(config.synthetic, config.seed);
  }

  std::vector<std::string> methods;
  if (config.method != ExperimentConfig::Method::Continuous) methods.push_back("discrete");
  if (config.method != ExperimentConfig::Method::Discrete) methods.push_back("continuous");

  std::optional<OperatorSequence> eit_ops;
  if (is_eit) {
    eit_ops = OperatorSequence::constant(eit_setup->F, eit_setup->grid.n_nodes());
  }

  RunReport report;
  for (size_t ai = 0; ai < config.alphas.size(); ++ai) {
    const double alpha = config.alphas[ai];
    WeightSpec L = make_weight(config, alpha);

    RegConfig reg;
    reg.alpha = alpha;
    reg.weight_L = L;
    if (is_eit) {
      reg.u0 = config.initial_guess == ExperimentConfig::InitialGuess::Static
                   ? static_initial_guess(eit_setup->FtF, eit_setup->F,
                                          eit_setup->data.samples.front(), L, alpha)
                   : Vector::Zero(eit_setup->inversion_mesh.n_vertices());
    } else {
      reg.u0 = synthetic->u0;
    }

    Problem problem = is_eit
                          ? validate_problem(*eit_ops, eit_setup->data, eit_setup->grid, reg)
                          : validate_problem(synthetic->ops, synthetic->data, synthetic->grid, reg);

    for (const std::string& method : methods) {
      RunRow row;
      row.method = method;
      row.alpha = alpha;
      row.n_steps = problem.n_steps();
      row.m = problem.m();
      row.d = problem.d();

      if (method == "discrete") {
        DiscreteSolveReport rep = solve_discrete(problem);
        row.el_residual = rep.el_residual;
        row.cost = rep.cost;
        row.q_norm_bound_ok = rep.q_norm_bound_ok;
        row.timings = rep.timings;
        row.trajectory = std::move(rep.trajectory);
        if (config.oracle &&
            static_cast<long long>(problem.n_steps()) * problem.m() <= kOracleGuard) {
          Trajectory oracle = direct_tikhonov_oracle(problem);
          row.oracle_gap = row.trajectory.max_diff(oracle);
        }
      } else {
        ContinuousSolveReport rep = solve_continuous(problem);
        row.cost = rep.cost;
        row.cfl_margin = rep.cfl_margin;
        row.cfl_pass = rep.cfl_margin >= 0.0;
        row.spectrum_ok = rep.spectrum_ok;
        row.timings = rep.timings;
        row.trajectory = std::move(rep.trajectory);
      }

      if (!is_eit && synthetic->truth) {
        double worst = 0.0;
        for (int k = 0; k <= problem.n_steps(); ++k) {
          worst = std::max(worst, (row.trajectory.at(k) - synthetic->truth->values[static_cast<size_t>(k)]).norm());
        }
        row.recon_error = worst;
      }

      if (is_eit) {
        fs::path frame_dir;
        if (config.emit_frames) {
          frame_dir = fs::path(config.output_dir) / "frames" /
                      (method + "_a" + std::to_string(ai));
          fs::create_directories(frame_dir);
        }
        for (int k = 0; k <= problem.n_steps(); ++k) {
          const Vector& frame = row.trajectory.at(k);
          CenterErrorEntry entry;
          entry.k = k;
          entry.t = problem.grid().node(k);
          try {
            entry.error = center_of_mass_error(eit_setup->inversion_mesh, frame,
                                               eit_setup->centers[static_cast<size_t>(k)]);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateFrame) throw;
            entry.degenerate = true;
          }
          row.center_errors.push_back(entry);

          if (config.emit_frames) {
            FrameInfo info;
            info.k = k;
            info.path = (frame_dir / ("t" + std::to_string(k) + ".pgm")).string();
            auto [lo, hi] = write_pgm(info.path, config.scenario.grid_subdivisions, frame);
            info.min = lo;
            info.max = hi;
            row.frames.push_back(info);
          }
        }
      }

      report.rows.push_back(std::move(row));
    }
  }

  report.report_csv_path = (fs::path(config.output_dir) / "report.csv").string();
  write_report_csv(report.report_csv_path, report.rows);
  if (is_eit) {
    write_center_errors_csv((fs::path(config.output_dir) / "center_errors.csv").string(),
                            report.rows);
  }

  json j;
  j["config"] = config_to_json(config);
  j["rows"] = json::array();
  for (const RunRow& r : report.rows) j["rows"].push_back(row_to_json(r));
  report.report_json_path = (fs::path(config.output_dir) / "report.json").string();
  std::ofstream(report.report_json_path, std::ios::binary) << j.dump(2) << '\n';

  return report;
}

// ---------------------------------------------------------------------------
// timing
// ---------------------------------------------------------------------------

TimingTable timing_scaling_suite(const ExperimentConfig& base,
                                 const std::vector<int>& n_steps_list, int repeats) {
  if (n_steps_list.size() < 3) {
    config_error("timing.n_steps", "need at least 3 horizon values");
  }
  auto [lo_it, hi_it] = std::minmax_element(n_steps_list.begin(), n_steps_list.end());
  if (*lo_it < 1 || static_cast<double>(*hi_it) / *lo_it < 2.0) {
    config_error("timing.n_steps", "horizons must span at least a factor of 2");
  }

  TimingTable table;
  for (int nT : n_steps_list) {
    SyntheticSpec spec = base.synthetic;
    spec.n_steps = nT;
    SyntheticProblem sp = build_synthetic(spec, base.seed);
    RegConfig reg;
    reg.alpha = base.alphas.front();
    reg.weight_L = make_weight(base, reg.alpha);
    reg.u0 = sp.u0;
    Problem problem = validate_problem(sp.ops, sp.data, sp.grid, reg);

    (void)solve_discrete(problem);  // warm up caches/allocator
    std::vector<double> samples;
    for (int r = 0; r < repeats; ++r) {
      auto t0 = Clock::now();
      (void)solve_discrete(problem);
      samples.push_back(seconds_between(t0, Clock::now()));
    }
    std::sort(samples.begin(), samples.end());
    table.rows.push_back({nT, samples[samples.size() / 2]});
  }

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& row : table.rows) {
    double x = std::log(static_cast<double>(row.n_steps));
    double y = std::log(row.seconds);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  double n = static_cast<double>(table.rows.size());
  table.loglog_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return table;
}

}  // namespace dynreg::harness
