#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "entk/nn.hpp"

namespace entk {

/// Labelled examples. `inputs` stores one sample per column (d0 x n).
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<double> targets;  // optional regression targets, empty if unused
  int classes = 0;
  std::string name;

  Index size() const { return inputs.cols(); }
  Index dim() const { return inputs.rows(); }

  /// Throws ShapeError / UsageError when labels and inputs disagree.
  void validate() const;

  /// Gathers the given rows into a batch.
  Batch gather(std::span<const Index> indices) const;
  Batch all() const;

  /// First `n` examples (or all when n >= size()).
  Dataset head(Index n) const;
};

/// Reads an IDX image/label file pair. Pixels are scaled by 1/255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes `data` as an IDX pair. Inputs are rounded back to bytes
/// (value * 255); the data must come from [0, 1] to round-trip. Images are
/// written as 1 x d0 unless `rows * cols == d0` is given.
void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels, int rows = 0, int cols = 0);

/// Gaussian clusters around deterministic class centers.
///
/// Class k sits at +/- center_radius along axis k/2 (even k positive, odd k
/// negative), so classes 0 and 1 are 2 * center_radius apart. Requires
/// classes <= 2 * dim. Sample noise is N(0, spread^2) per coordinate, drawn
/// from `seed`; samples are ordered class by class.
Dataset synth_blobs(std::uint64_t seed, int n_per_class, int dim, int classes, double spread,
                    double center_radius = 5.0);

/// Fixed example subset on which every eNTK is evaluated.
struct ProbeSet {
  std::vector<Index> indices;
  Matrix inputs;
  std::vector<int> labels;

  Index size() const { return static_cast<Index>(indices.size()); }

  /// Stable identifier derived from the selected indices.
  std::uint64_t id() const;

  /// A probe that covers every example of `data` in order.
  static ProbeSet whole(const Dataset& data);
};

/// Uniform (or class-stratified) sampling without replacement.
/// n_probe == data.size() selects every index in order.
ProbeSet probe_sample(const Dataset& data, Index n_probe, std::uint64_t seed, bool stratified);

}  // namespace entk
