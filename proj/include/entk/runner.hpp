#pragma once

// Run orchestration behind the `entk` command line tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "entk/analysis.hpp"
#include "entk/config.hpp"
#include "entk/train.hpp"

namespace entk {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitDivergence = 2 };

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // overrides output.dir
  std::optional<std::uint64_t> seed;             // overrides seed
  bool quiet = false;
};

/// Applies the overrides and returns the output directory to use.
std::filesystem::path apply_options(ExperimentConfig& cfg, const RunOptions& options);

struct DynamicsOutput {
  TrajectoryLog trajectory;
  ConeReport report;
  Embedding2D embedding;
  std::vector<DistanceCurve> reference_curves;
  std::vector<DistanceCurve> adjacent_curves;
};

/// Trains, caches a Gram per checkpoint and writes the run directory:
/// kernel_distance.csv, velocity.csv, embedding.csv, cone_report.txt, SVG
/// plots, the resolved config and the checkpoint store. Progress goes to
/// `log` when it is non-null.
DynamicsOutput dynamics(ExperimentConfig cfg, const std::filesystem::path& out_dir, std::ostream* log);

struct SwitchRow {
  std::int64_t t_switch = 0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
};

/// One switching run per grid entry, written to switch.csv sorted by t_switch.
std::vector<SwitchRow> switching(ExperimentConfig cfg, const std::filesystem::path& out_dir, std::ostream* log);

/// Recomputes embedding.csv and embedding.svg from the Grams stored in a run
/// directory written by dynamics().
Embedding2D embed_run(const std::filesystem::path& run_dir);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Invariant checks on tiny models: gradients against finite differences,
/// chunked Gram against pairwise dots, kernel distance algebra, constant
/// kernel under linearized training, config round-trip.
std::vector<CheckResult> validation_suite();

// Entry points returning process exit codes; errors are reported on stderr.
int run_dynamics(const std::filesystem::path& config_path, const RunOptions& options = {});
int run_switch(const std::filesystem::path& config_path, const RunOptions& options = {});
int run_embed(const std::filesystem::path& run_dir, const RunOptions& options = {});
int run_validate(const RunOptions& options = {});

}  // namespace entk
