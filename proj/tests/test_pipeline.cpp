#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "denois/error.hpp"
#include "denois/metrics.hpp"
#include "denois/pipeline.hpp"

using namespace denois;
namespace fs = std::filesystem;

namespace {

// Shared small run: 4 phantoms through every stage once.
struct Run {
  fs::path root;
  std::string phantoms, clean, corrupted;

  Run() {
    root = fs::temp_directory_path() / ("denois_pipeline_" + std::to_string(::getpid()));
    fs::remove_all(root);
    phantoms = (root / "phantoms").string();
    clean = (root / "clean").string();
    corrupted = (root / "corrupted").string();
    PhantomStageOptions p;
    p.n = 4;
    p.seed = 3;
    run_phantom_stage(p, phantoms);
    run_simulate_stage(phantoms, clean);
    run_corrupt_stage(clean, CorruptStageOptions{}, corrupted);
  }
  ~Run() { fs::remove_all(root); }
  std::string dir(const std::string& name) const { return (root / name).string(); }
};

const Run& run() {
  static const Run r;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("sample ids") {
  CHECK(sample_id(0) == "p0000");
  CHECK(sample_id(42) == "p0042");
  CHECK(sample_id(12345) == "p12345");
}

TEST_CASE("number formatting") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(std::stod(format_double(1.0 / 3.0)) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("stage outputs") {
  const auto& r = run();
  const auto m = read_manifest(r.phantoms);
  CHECK(m.stage == "phantom");
  CHECK(m.ids == std::vector<std::string>{"p0000", "p0001", "p0002", "p0003"});
  const Geometry g = read_geometry(r.phantoms);
  CHECK(g == scaled_geometry(Scale{1, 4}));
  CHECK(fs::exists(fs::path(r.phantoms) / "p0000.sos.pgm"));
  const Phantom p = read_phantom(r.phantoms, "p0001", g.grid);
  CHECK(p.image.values.size() == g.grid.size());

  const auto c = read_measurements(r.clean, "p0001", g.measurement_shape());
  CHECK(c.provenance == Provenance::clean);
  const auto masks = read_masks(r.clean, "p0001", g.measurement_shape());
  CHECK(c.valid == masks.aperture);

  const auto cm = read_manifest(r.corrupted);
  CHECK(cm.stage == "corrupt");
  for (const auto& id : cm.ids) {
    const double dropout = cm.params.at("realized_dropout").at(id).get<double>();
    CHECK(dropout > 0.0);
    CHECK(dropout < 0.3);
  }
  const auto b = read_measurements(r.corrupted, "p0001", g.measurement_shape());
  CHECK(b.provenance == Provenance::corrupted);
  CHECK(b.valid_count() < c.valid_count());
}

TEST_CASE("corrupting twice with one seed gives identical files") {
  const auto& r = run();
  const std::string again = r.dir("corrupted_again");
  run_corrupt_stage(r.clean, CorruptStageOptions{}, again);
  for (const auto& e : fs::directory_iterator(r.corrupted)) {
    CHECK(slurp(e.path().string()) == slurp((fs::path(again) / e.path().filename()).string()));
  }
}

TEST_CASE("refine stage") {
  const auto& r = run();
  const Geometry g = read_geometry(r.corrupted);
  RefineStageOptions o;
  o.method = "oracle";
  o.mismatch = MismatchMethod::zero;
  o.clean_dir = r.clean;
  run_refine_stage(r.corrupted, o, r.dir("refined_oracle"));
  const auto clean = read_measurements(r.clean, "p0002", g.measurement_shape());
  const auto refined = read_measurements(r.dir("refined_oracle"), "p0002", g.measurement_shape());
  CHECK(refined.provenance == Provenance::refined);
  CHECK(refined.values == clean.values);
  CHECK(read_manifest(r.dir("refined_oracle")).params.at("method") == "oracle");

  o.method = "external";
  o.external = DENOIS_ECHO_STUB;
  o.init_tv.max_iters = 20;
  run_refine_stage(r.corrupted, o, r.dir("refined_echo"));
  const auto b = read_measurements(r.corrupted, "p0002", g.measurement_shape());
  const auto echo = read_measurements(r.dir("refined_echo"), "p0002", g.measurement_shape());
  for (std::size_t i = 0; i < b.values.size(); ++i) {
    CHECK(echo.values[i] == doctest::Approx(b.values[i]).epsilon(1e-12));
  }

  o.method = "oracle";
  o.clean_dir.clear();
  CHECK_THROWS_AS(run_refine_stage(r.corrupted, o, r.dir("refined_bad")), ConfigError);
  o.method = "magic";
  CHECK_THROWS_AS(run_refine_stage(r.corrupted, o, r.dir("refined_bad")), ConfigError);
}

TEST_CASE("reconstruct and evaluate") {
  const auto& r = run();
  ReconstructStageOptions o;
  o.tv.max_iters = 40;
  o.obs_variant = "raw";
  run_reconstruct_stage(r.corrupted, o, r.dir("recon_l2"));
  o.method = "pnp";
  o.denoiser = "gaussian";
  run_reconstruct_stage(r.corrupted, o, r.dir("recon_pnp"));
  const auto rm = read_manifest(r.dir("recon_pnp"));
  CHECK(rm.params.at("method") == "pnp_gaussian");

  const auto rows = evaluate_stage(r.dir("recon_l2"), r.phantoms, r.phantoms);
  REQUIRE(rows.size() == 4);
  const Geometry g = read_geometry(r.phantoms);
  for (const auto& row : rows) {
    CHECK(row.method == "l2tv");
    CHECK(row.obs_variant == "raw");
    // Better than guessing the reference speed everywhere.
    const auto gt = read_phantom(r.phantoms, row.id, g.grid).image;
    const double flat = rmse(constant_sos(g.grid, kDefaultC0), gt);
    INFO(row.id << " rmse " << row.rmse << " vs flat " << flat);
    CHECK(row.rmse > 0.0);
    if (flat > 0.0) CHECK(row.rmse < flat);
    CHECK(std::isnan(row.ace) == std::isnan(row.dc));
  }
  const std::string csv = r.dir("metrics.csv");
  write_metrics_csv(csv, rows);
  const std::string text = slurp(csv);
  CHECK(text.rfind("id,method,obs_variant,rmse,dc,ace,gcnr\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);

  o.method = "pnp";
  o.denoiser = "external";
  o.external.clear();
  CHECK_THROWS_AS(run_reconstruct_stage(r.corrupted, o, r.dir("recon_bad")), ConfigError);
  CHECK_THROWS_AS(evaluate_stage(r.dir("nothing_here"), r.phantoms, r.phantoms), IoError);
}

TEST_CASE("ground truth against itself scores zero") {
  const auto& r = run();
  const Geometry g = read_geometry(r.phantoms);
  const std::string dir = r.dir("recon_gt");
  fs::create_directories(dir);
  write_geometry(dir, g);
  const auto ids = read_manifest(r.phantoms).ids;
  for (const auto& id : ids) {
    write_recon(dir, id, read_phantom(r.phantoms, id, g.grid).image, {{"method", "gt"}});
  }
  write_manifest(dir, {"reconstruct", ids, {{"method", "gt"}, {"obs_variant", "none"}}});
  for (const auto& row : evaluate_stage(dir, r.phantoms, r.phantoms)) {
    CHECK(row.rmse == 0.0);
    if (!std::isnan(row.ace)) CHECK(row.ace == 0.0);
  }
}

TEST_CASE("plans") {
  ExperimentPlan p;
  p.n = 7;
  p.rows = {"raw", "oracle"};
  p.cols = {"l1tv"};
  p.pnp.K = 3;
  const auto q = plan_from_json(to_json(p));
  CHECK(q.n == 7);
  CHECK(q.rows == p.rows);
  CHECK(q.cols == p.cols);
  CHECK(q.pnp.K == 3);
  CHECK(to_json(q) == to_json(p));

  const auto d = plan_from_json(nlohmann::json::object());
  CHECK(d.n == 50);
  CHECK(d.rows == ExperimentPlan{}.rows);
  CHECK_THROWS_AS(plan_from_json({{"rows", {"sideways"}}}), ConfigError);
  CHECK_THROWS_AS(plan_from_json({{"cols", {"magic"}}}), ConfigError);
  CHECK_THROWS_AS(plan_from_json({{"n", "many"}}), ConfigError);
}

TEST_CASE("summary means skip homogeneous samples for lesion metrics") {
  const std::vector<EvalRow> rows{{"p0", "l2tv", "raw", 2.0, 10.0, 4.0, 0.5},
                                  {"p1", "l2tv", "raw", 4.0, NAN, NAN, NAN},
                                  {"p0", "l1tv", "raw", 1.0, 8.0, 2.0, 0.7}};
  const auto s = summarize(rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].col == "l2tv");
  CHECK(s[0].n == 2);
  CHECK(s[0].rmse == 3.0);
  CHECK(s[0].n_lesion == 1);
  CHECK(s[0].ace == 4.0);
  CHECK(s[1].gcnr == 0.7);
}

TEST_CASE("a small matrix") {
  const auto& r = run();
  ExperimentPlan p;
  p.n = 2;
  p.rows = {"raw", "classical_bpa"};
  p.cols = {"l2tv", "pnp_tvprox"};
  p.tv.max_iters = 30;
  const std::string out = r.dir("matrix");
  run_matrix(p, out);
  CHECK(fs::exists(fs::path(out) / "plan.json"));
  CHECK(fs::exists(fs::path(out) / "cells" / "classical_bpa__pnp_tvprox" / "metrics.csv"));
  const std::string summary = slurp((fs::path(out) / "summary.csv").string());
  CHECK(summary.rfind("obs_variant,method,n,rmse,n_lesion,ace,gcnr\n", 0) == 0);
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 5);
  const std::string metrics = slurp((fs::path(out) / "metrics.csv").string());
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 9);
}
