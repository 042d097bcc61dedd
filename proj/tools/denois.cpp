#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "checks.hpp"
#include "denois/error.hpp"
#include "denois/pipeline.hpp"

using namespace denois;

namespace {

void add_tv_options(CLI::App* cmd, TvConfig& tv) {
  cmd->add_option("--lambda", tv.lambda_rel, "relative TV weight")->capture_default_str();
  cmd->add_option("--max-iters", tv.max_iters, "outer TV iterations")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DenOiS speed-of-sound reconstruction toolkit"};
  app.require_subcommand(1);

  PhantomStageOptions phantom;
  std::string scale = "1/4";
  std::string out;
  auto* c_phantom = app.add_subcommand("phantom", "generate a seeded phantom dataset");
  c_phantom->add_option("--n", phantom.n)->capture_default_str();
  c_phantom->add_option("--seed", phantom.seed)->capture_default_str();
  c_phantom->add_option("--scale", scale, "geometry scale, e.g. 1/4")->capture_default_str();
  c_phantom->add_option("--out", out)->required();

  std::string in;
  auto* c_sim = app.add_subcommand("simulate", "clean measurements through A_H");
  c_sim->add_option("--phantoms", in)->required();
  c_sim->add_option("--out", out)->required();

  CorruptStageOptions corrupt;
  auto* c_corrupt = app.add_subcommand("corrupt", "add noise and dropout");
  c_corrupt->add_option("--in", in)->required();
  c_corrupt->add_option("--noise", corrupt.noise_rel_sigma)->capture_default_str();
  c_corrupt->add_option("--dropout", corrupt.dropout_fraction)->capture_default_str();
  c_corrupt->add_option("--seed", corrupt.seed)->capture_default_str();
  c_corrupt->add_option("--out", out)->required();

  RefineStageOptions refine;
  std::string mismatch = "highres";
  std::string recon_init = "l2tv";
  bool no_priors = false;
  bool no_projected = false;
  auto* c_refine = app.add_subcommand("refine", "refine measurements");
  c_refine->add_option("--in", in)->required();
  c_refine->add_option("--method", refine.method)
      ->check(CLI::IsMember({"identity", "classical", "oracle", "external"}))
      ->capture_default_str();
  c_refine->add_option("--mismatch", mismatch)
      ->check(CLI::IsMember({"zero", "highres"}))
      ->capture_default_str();
  c_refine->add_option("--recon-init", recon_init)->check(CLI::IsMember({"l2tv"}));
  c_refine->add_flag("--no-priors", no_priors, "treat every entry of b' as observed");
  c_refine->add_flag("--no-projected", no_projected, "classical refiner without A'x'");
  c_refine->add_option("--clean", refine.clean_dir, "clean measurements (oracle)");
  c_refine->add_option("--external", refine.external, "command or unix:PATH");
  add_tv_options(c_refine, refine.init_tv);
  c_refine->add_option("--out", out)->required();

  ReconstructStageOptions recon;
  std::string schedule = "linear_variance";
  auto* c_recon = app.add_subcommand("reconstruct", "reconstruct SoS images");
  c_recon->add_option("--in", in)->required();
  c_recon->add_option("--method", recon.method)
      ->check(CLI::IsMember({"l2tv", "l1tv", "pnp"}))
      ->capture_default_str();
  c_recon->add_option("--denoiser", recon.denoiser)
      ->check(CLI::IsMember({"identity", "gaussian", "tvprox", "external"}))
      ->capture_default_str();
  c_recon->add_option("--T", recon.pnp.T)->capture_default_str();
  c_recon->add_option("--T0", recon.pnp.T0)->capture_default_str();
  c_recon->add_option("--K", recon.pnp.K)->capture_default_str();
  c_recon->add_option("--sigma-min", recon.pnp.sigma_min)->capture_default_str();
  c_recon->add_option("--sigma-max", recon.pnp.sigma_max)->capture_default_str();
  c_recon->add_option("--schedule", schedule)
      ->check(CLI::IsMember({"linear_variance", "constant"}))
      ->capture_default_str();
  c_recon->add_option("--seed", recon.pnp.seed)->capture_default_str();
  c_recon->add_option("--external", recon.external, "command or unix:PATH");
  c_recon->add_option("--obs-variant", recon.obs_variant, "label carried into the metrics");
  add_tv_options(c_recon, recon.tv);
  c_recon->add_option("--out", out)->required();

  std::string gt;
  std::string lesions;
  auto* c_eval = app.add_subcommand("eval", "metrics CSV for a reconstruction directory");
  c_eval->add_option("--recon", in)->required();
  c_eval->add_option("--gt", gt)->required();
  c_eval->add_option("--lesions", lesions, "defaults to --gt");
  c_eval->add_option("--out", out)->required();

  std::string plan_path;
  auto* c_matrix = app.add_subcommand("matrix", "run an experiment plan");
  c_matrix->add_option("--plan", plan_path, "plan JSON; defaults apply to missing keys");
  c_matrix->add_option("--out", out)->required();

  auto* c_selftest = app.add_subcommand("selftest", "dot, tracer, CG and metric oracle checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_phantom->parsed()) {
      phantom.scale = Scale::parse(scale);
      run_phantom_stage(phantom, out);
    } else if (c_sim->parsed()) {
      run_simulate_stage(in, out);
    } else if (c_corrupt->parsed()) {
      run_corrupt_stage(in, corrupt, out);
    } else if (c_refine->parsed()) {
      refine.mismatch = mismatch_method_from_string(mismatch);
      refine.use_priors = !no_priors;
      refine.use_projected = !no_projected;
      run_refine_stage(in, refine, out);
    } else if (c_recon->parsed()) {
      if (schedule == "constant") recon.pnp.schedule = SigmaScheduleKind::constant;
      validate(recon.pnp);
      validate(recon.tv);
      run_reconstruct_stage(in, recon, out);
    } else if (c_eval->parsed()) {
      write_metrics_csv(out, evaluate_stage(in, gt, lesions.empty() ? gt : lesions));
    } else if (c_matrix->parsed()) {
      nlohmann::json j = nlohmann::json::object();
      if (!plan_path.empty()) {
        std::ifstream f(plan_path);
        if (!f) throw IoError("cannot open " + plan_path);
        try {
          j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
          throw IoError(plan_path + ": " + e.what());
        }
      }
      run_matrix(plan_from_json(j), out);
    } else if (c_selftest->parsed()) {
      return checks::report(checks::selftest()) == 0 ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "denois: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
