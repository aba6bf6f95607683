#pragma once

// Experiment configuration: a flat `key = value` text format with dotted
// section keys and '#' comments.
//
//   data.source = mnist
//   arch.widths = 256, 10
//   train.lr = 0.05
//
// Keys are order-insensitive; unknown or repeated keys are errors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "entk/data.hpp"
#include "entk/nn.hpp"
#include "entk/train.hpp"

namespace entk {

struct DataSpec {
  std::string source = "mnist";  // mnist | blobs
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  Index train_size = 0;  // 0 keeps every example
  Index test_size = 0;

  std::uint64_t blobs_seed = 0;
  int blobs_per_class = 50;
  int blobs_test_per_class = 50;
  int blobs_dim = 2;
  int blobs_classes = 2;
  double blobs_spread = 1.0;
  double blobs_radius = 5.0;

  bool operator==(const DataSpec&) const = default;
};

struct ProbeSpec {
  Index size = 64;
  std::uint64_t seed = 0;
  bool stratified = true;
  std::string split = "train";  // train | test

  bool operator==(const ProbeSpec&) const = default;
};

struct MeasureSpec {
  std::vector<std::int64_t> taus;
  std::vector<std::int64_t> dts;
  double rho = 0.2;
  int window = 3;
  Index chunk = 16;

  bool operator==(const MeasureSpec&) const = default;
};

struct SwitchSpec {
  std::vector<std::int64_t> grid;
  std::optional<double> lin_lr;
  std::optional<double> lin_momentum;

  bool operator==(const SwitchSpec&) const = default;
};

struct ExperimentConfig {
  DataSpec data;
  ArchSpec arch;  // input_dim 0 means "take it from the dataset"
  TrainConfig train;
  ProbeSpec probe;
  ReadoutRule readout;
  MeasureSpec measure;
  SwitchSpec switching;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  /// Directory that relative data paths are resolved against. Not serialized.
  std::filesystem::path base_dir;

  /// Cross-field checks; throws ConfigError.
  void validate() const;

  /// `p` resolved against base_dir unless absolute.
  std::filesystem::path resolve(const std::string& p) const;

  bool operator==(const ExperimentConfig& o) const;
};

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form: sorted keys, reals at 17 significant digits.
std::string serialize_config(const ExperimentConfig& cfg);

/// FNV-1a over the canonical text minus the output directory, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Copy with data paths made absolute.
ExperimentConfig resolved(const ExperimentConfig& cfg);

struct ExperimentData {
  Dataset train;
  Dataset test;
};

/// Loads or generates the train/test split named by the data section and
/// fixes arch.input_dim when it is 0.
ExperimentData load_experiment_data(ExperimentConfig& cfg);

}  // namespace entk
