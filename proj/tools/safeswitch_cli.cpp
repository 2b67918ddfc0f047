// Command-line front end: certify / compare / sweep / check / synth.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "safeswitch/experiments.hpp"

namespace {

double parse_threshold(const std::string& text) {
  if (text == "inf" || text == "+inf" || text == "infinity") {
    return safeswitch::SupervisorConfig::kNeverSwitch;
  }
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument(text);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace safeswitch;
  CLI::App app{"Switching control between a primary and a fallback "
               "controller for partially observed linear-Gaussian systems"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file with default flag values");

  std::string model_path, gen, threshold = "1", grid;
  double lambda = 0.0;
  ExperimentConfig cfg;

  app.add_option("--model", model_path, "model file (lqg-model v1)");
  app.add_option("--gen", gen, "generate a model: seed,n,m,p,rho");
  app.add_option("--M", threshold, "switching threshold (inf disables)");
  app.add_option("--M-grid", grid, "threshold grid lo:hi:steps[:log|:lin]");
  app.add_option("--t", cfg.dwell, "dwell time")->capture_default_str();
  app.add_option("--T", cfg.horizon, "horizon per trajectory")
      ->capture_default_str();
  app.add_option("--traj", cfg.n_traj, "number of trajectories")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "base seed")->capture_default_str();
  app.add_option("--out", cfg.out_dir, "output directory")
      ->capture_default_str();
  app.add_flag("--zero-noise", cfg.zero_noise, "disable process/measurement noise");
  auto* lam = app.add_option("--lambda", lambda,
                             "add lambda to every primary controller entry");
  app.add_option("--threads", cfg.threads, "worker threads (0 = all cores)");
  app.add_option("--bound-scale", cfg.bound_scale,
                 "scale theoretical values in `check` (self-test)")
      ->group("");

  auto* certify = app.add_subcommand("certify", "assumption report and all certificates");
  auto* compare = app.add_subcommand("compare", "switched vs unswitched trajectories");
  auto* sweep = app.add_subcommand("sweep", "Monte Carlo cost gap over a threshold grid");
  auto* check = app.add_subcommand("check", "empirical validation of every bound");
  auto* synth = app.add_subcommand("synth", "generate and save a model with controllers");

  bool sweep_defaults = false;
  sweep->callback([&] { sweep_defaults = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (!model_path.empty()) cfg.model_path = model_path;
    if (!gen.empty()) cfg.generator = parse_generator_spec(gen);
    cfg.threshold = parse_threshold(threshold);
    if (!grid.empty()) cfg.grid = parse_threshold_grid(grid);
    if (lam->count() > 0) cfg.lambda = lambda;
    if (sweep_defaults && app.count("--traj") == 0) cfg.n_traj = 1000;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }

  if (certify->parsed()) return cmd_certify(cfg);
  if (compare->parsed()) return cmd_compare(cfg);
  if (sweep->parsed()) return cmd_sweep(cfg);
  if (check->parsed()) return cmd_check(cfg);
  if (synth->parsed()) return cmd_synth(cfg);
  return kExitError;
}
