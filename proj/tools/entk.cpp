// entk: eNTK dynamics experiments from the command line.
//
//   entk dynamics --config configs/mnist_dynamics.cfg --out runs/a
//   entk switch   --config configs/mnist_switch.cfg
//   entk embed    --out runs/a
//   entk validate

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <string>

#include "entk/config.hpp"
#include "entk/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Empirical NTK dynamics experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config, "experiment config file")->check(CLI::ExistingFile);
    if (needs_config) opt->required();
    sub->add_option("--out", out, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "initialization seed (overrides seed)");
    sub->add_flag("--quiet", quiet, "suppress progress and config echo");
  };

  CLI::App* dyn = app.add_subcommand("dynamics", "train and measure eNTK distance curves");
  add_common(dyn, true);
  CLI::App* sw = app.add_subcommand("switch", "standard-to-linearized switching sweep");
  add_common(sw, true);
  CLI::App* emb = app.add_subcommand("embed", "recompute the trajectory embedding of a stored run");
  add_common(emb, false);
  CLI::App* val = app.add_subcommand("validate", "run the invariant checks on tiny models");
  val->add_flag("--quiet", quiet, "only print failures");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? entk::kExitOk : entk::kExitUsage;
  }

  entk::RunOptions options;
  if (!out.empty()) options.out_dir = out;
  options.seed = seed;
  options.quiet = quiet;

  if (*dyn) return entk::run_dynamics(config, options);
  if (*sw) return entk::run_switch(config, options);
  if (*emb) {
    if (!out.empty()) return entk::run_embed(out, options);
    if (config.empty()) {
      std::cerr << "entk embed: pass --out RUN_DIR or --config\n";
      return entk::kExitUsage;
    }
    try {
      entk::ExperimentConfig cfg = entk::load_config(config);
      return entk::run_embed(entk::apply_options(cfg, options), options);
    } catch (const std::exception& e) {
      std::cerr << "entk embed: " << e.what() << "\n";
      return entk::kExitUsage;
    }
  }
  return entk::run_validate(options);
}
