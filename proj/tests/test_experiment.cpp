#include "dynreg/experiment.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dynreg;
using namespace dynreg::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("dynreg_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

constexpr const char* kSyntheticZeroConfig = R"(
# zero operator: the solution can only sit at u0
[problem]
type = synthetic
kind = zero
m = 3
d = 2
n_steps = 6
with_truth = false

[solver]
method = both
alpha = 0.5

[output]
seed = 7
)";

}  // namespace

TEST_CASE("config parsing accepts the documented keys") {
  ExperimentConfig cfg = parse_config_text(R"(
[problem]
type = eit
subdivisions = 25
data_subdivisions = 33
time_samples = 51
inclusion_radius = 0.08
inclusion_contrast = 2.0
data_mode = nonlinear
noise_fraction = 0.05

[solver]
method = discrete
alpha = 1e-1, 1e-2, 1e-3, 1e-4
weight_l = inv_alpha
initial_guess = static
oracle = false

[output]
dir = somewhere
emit_frames = true
seed = 42
)");
  CHECK(cfg.problem_type == ExperimentConfig::ProblemType::Eit);
  CHECK(cfg.scenario.grid_subdivisions == 25);
  CHECK(cfg.scenario.time_samples == 51);
  CHECK(cfg.scenario.noise_fraction == 0.05);
  CHECK(cfg.data_mode == eit::DataMode::Nonlinear);
  CHECK(cfg.alphas.size() == 4);
  CHECK(cfg.alphas[2] == 1e-3);
  CHECK(cfg.weight_l == ExperimentConfig::WeightL::InvAlpha);
  CHECK(cfg.emit_frames);
  CHECK(cfg.seed == 42);
}

TEST_CASE("config errors name the offending field") {
  auto expect_config_error = [](const std::string& text, const std::string& needle) {
    try {
      parse_config_text(text);
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_config_error("[problem]\nbogus_key = 1\n", "bogus_key");
  expect_config_error("[solver]\nalpha = 0\n", "alpha");
  expect_config_error("[solver]\nmethod = simplex\n", "method");
  expect_config_error("[bogus]\n", "bogus");
  expect_config_error("key_without_section = 1\n", "key_without_section");
}

TEST_CASE("zero-operator experiment leaves the trajectory at u0") {
  TempDir tmp("zero");
  ExperimentConfig cfg = parse_config_text(kSyntheticZeroConfig);
  cfg.output_dir = tmp.path.string();
  RunReport report = run_experiment(cfg);
  REQUIRE(report.rows.size() == 2);  // discrete + continuous
  for (const auto& row : report.rows) {
    for (int k = 0; k <= row.n_steps; ++k) {
      CHECK(row.trajectory.at(k).norm() == 0.0);
    }
    if (row.el_residual) CHECK(*row.el_residual <= 1e-14);
  }
  CHECK(fs::exists(report.report_csv_path));
  CHECK(fs::exists(report.report_json_path));
}

TEST_CASE("identical config and seed give byte-identical reports") {
  ExperimentConfig cfg = parse_config_text(R"(
[problem]
type = synthetic
kind = random
m = 4
d = 3
n_steps = 10
noise_fraction = 0.1

[solver]
method = discrete
alpha = 1e-1, 1e-3
oracle = true

[output]
seed = 1234
)");
  TempDir a("det_a"), b("det_b");
  cfg.output_dir = a.path.string();
  RunReport ra = run_experiment(cfg);
  cfg.output_dir = b.path.string();
  RunReport rb = run_experiment(cfg);
  CHECK(slurp(ra.report_csv_path) == slurp(rb.report_csv_path));

  // a different seed must actually change the data-dependent numbers
  cfg.seed = 99;
  TempDir c("det_c");
  cfg.output_dir = c.path.string();
  RunReport rc = run_experiment(cfg);
  CHECK(slurp(ra.report_csv_path) != slurp(rc.report_csv_path));
}

TEST_CASE("oracle gap is recorded and small") {
  TempDir tmp("oracle");
  ExperimentConfig cfg = parse_config_text(R"(
[problem]
type = synthetic
kind = random
m = 3
d = 3
n_steps = 8

[solver]
method = discrete
alpha = 0.05
oracle = true

[output]
seed = 5
)");
  cfg.output_dir = tmp.path.string();
  RunReport report = run_experiment(cfg);
  REQUIRE(report.rows.size() == 1);
  REQUIRE(report.rows[0].oracle_gap.has_value());
  CHECK(*report.rows[0].oracle_gap <= 1e-8);
  REQUIRE(report.rows[0].recon_error.has_value());
}

TEST_CASE("center_of_mass_error geometry") {
  eit::Mesh2D mesh = eit::build_mesh(4, eit::MeshKind::Structured);

  // single positive node
  Vector frame = Vector::Zero(mesh.n_vertices());
  frame[7] = 2.5;
  CHECK(center_of_mass_error(mesh, frame, mesh.vertices[7]) == 0.0);

  // two equal positive nodes at (0,0) and (1,0): centroid (0.5, 0)
  Vector pair = Vector::Zero(mesh.n_vertices());
  pair[0] = 1.0;
  pair[4] = 1.0;  // (1, 0) on the 4-subdivision grid
  CHECK(center_of_mass_error(mesh, pair, eit::Point(0.5, 0.0)) <= 1e-15);

  // all-nonpositive frames are degenerate
  Vector flat = -Vector::Ones(mesh.n_vertices());
  CHECK_THROWS_AS(center_of_mass_error(mesh, flat, eit::Point(0.5, 0.5)), Error);
}

TEST_CASE("center of the nodal inclusion frame is within half a cell") {
  eit::Mesh2D mesh = eit::build_mesh(25, eit::MeshKind::Structured);
  eit::Point truth(0.2, 0.5);
  eit::ConductivityField gamma = eit::nodal_inclusion(mesh, truth, 0.08, 2.0);
  Vector frame = gamma.nodal.array() - 1.0;
  CHECK(center_of_mass_error(mesh, frame, truth) <= 0.02);
}

TEST_CASE("pgm frames: format and rank preservation") {
  TempDir tmp("pgm");
  const int n = 4;
  Vector nodal = Vector::Zero((n + 1) * (n + 1));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int i = 0; i < nodal.size(); ++i) nodal[i] = uni(rng);
  nodal[13] = 2.0;  // unique max, margin far above the quantization step

  std::string path = (tmp.path / "frame.pgm").string();
  auto [lo, hi] = write_pgm(path, n, nodal);
  CHECK(lo == nodal.minCoeff());
  CHECK(hi == 2.0);

  std::ifstream in(path);
  std::string magic;
  int w, h, maxval;
  in >> magic >> w >> h >> maxval;
  CHECK(magic == "P2");
  CHECK(w == n + 1);
  CHECK(h == n + 1);
  CHECK(maxval == 255);
  std::vector<int> pixels;
  int px;
  while (in >> px) pixels.push_back(px);
  REQUIRE(pixels.size() == static_cast<size_t>(w * h));

  // argmax location identical before and after scaling (image rows are
  // top-down, nodal rows bottom-up)
  int arg_nodal = 0;
  nodal.maxCoeff(&arg_nodal);
  int iy = arg_nodal / (n + 1), ix = arg_nodal % (n + 1);
  int arg_pix = static_cast<int>(std::max_element(pixels.begin(), pixels.end()) - pixels.begin());
  int prow = arg_pix / w, pcol = arg_pix % w;
  CHECK(pcol == ix);
  CHECK(n - prow == iy);
  CHECK(pixels[static_cast<size_t>(arg_pix)] == 255);
}

TEST_CASE("timing suite validates its horizon list") {
  ExperimentConfig cfg = parse_config_text("[problem]\ntype = synthetic\n");
  CHECK_THROWS_AS(timing_scaling_suite(cfg, {50}), Error);
  CHECK_THROWS_AS(timing_scaling_suite(cfg, {50, 60, 70}), Error);  // span < 2x
}

TEST_CASE("timing suite produces positive medians and a slope") {
  ExperimentConfig cfg = parse_config_text(R"(
[problem]
type = synthetic
m = 12
d = 12
[solver]
alpha = 0.1
[output]
seed = 3
)");
  TimingTable table = timing_scaling_suite(cfg, {8, 16, 32}, 3);
  REQUIRE(table.rows.size() == 3);
  for (const auto& row : table.rows) CHECK(row.seconds > 0.0);
  CHECK(std::isfinite(table.loglog_slope));
}

TEST_CASE("bundle text container round-trips bit-exact") {
  TempDir tmp("bundle");
  std::mt19937_64 rng(21);

  testing::BundleParams params{.m = 3, .d = 4, .n_steps = 5, .alpha = 0.37};
  Problem p = testing::random_bundle(rng, params);
  std::string path = (tmp.path / "bundle.txt").string();
  save_bundle(p, path);
  Problem q = load_bundle(path);
  CHECK(p == q);

  // constant operators keep their shared representation
  params.constant_ops = true;
  Problem pc = testing::random_bundle(rng, params);
  save_bundle(pc, path);
  Problem qc = load_bundle(path);
  CHECK(pc == qc);
  CHECK(qc.ops().ptr(0) == qc.ops().ptr(params.n_steps));

  // explicit matrix weight survives too
  Matrix L = Matrix::Identity(4, 4) * 2.0;
  RegConfig cfg = p.config();
  cfg.weight_L = WeightSpec::matrix(L);
  Problem pm = validate_problem(p.ops(), p.data(), p.grid(), cfg);
  save_bundle(pm, path);
  CHECK(load_bundle(path) == pm);
}

TEST_CASE("small eit experiment writes the documented artifacts") {
  TempDir tmp("eit_small");
  ExperimentConfig cfg = parse_config_text(R"(
[problem]
type = eit
subdivisions = 6
data_subdivisions = 9
time_samples = 4
inclusion_radius = 0.15
inclusion_contrast = 2.0
data_mode = linearized

[solver]
method = discrete
alpha = 1e-2, 1e-3
weight_l = inv_alpha
initial_guess = static

[output]
emit_frames = true
seed = 17
)");
  cfg.output_dir = tmp.path.string();
  RunReport report = run_experiment(cfg);
  REQUIRE(report.rows.size() == 2);
  for (const auto& row : report.rows) {
    CHECK(row.center_errors.size() == 4);
    CHECK(row.frames.size() == 4);
    for (const auto& f : row.frames) CHECK(fs::exists(f.path));
    CHECK(row.timings.total > 0.0);
  }
  CHECK(fs::exists(tmp.path / "report.csv"));
  CHECK(fs::exists(tmp.path / "report.json"));
  CHECK(fs::exists(tmp.path / "center_errors.csv"));
  CHECK(fs::exists(tmp.path / "mesh.txt"));

  std::string csv = slurp((tmp.path / "report.csv").string());
  CHECK(csv.find("# dynreg report v1") == 0);
  CHECK(csv.find("discrete,") != std::string::npos);
}
