#pragma once

// Output formats: CSV tables, standalone SVG charts and the binary
// checkpoint store. Every text file starts with a `config_hash` comment.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "entk/analysis.hpp"
#include "entk/nn.hpp"

namespace entk {

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Reals are written with 17 significant digits and '.' as separator.
std::string format_real(double v);

class CsvWriter {
 public:
  CsvWriter(const std::string& config_hash, const std::vector<std::string>& columns);
  /// Each cell is already formatted; the count must match the header.
  void row(const std::vector<std::string>& cells);
  const std::string& str() const { return out_; }

 private:
  std::size_t columns_;
  std::string out_;
};

std::string kernel_distance_csv(const std::string& hash, const std::vector<DistanceCurve>& curves);
std::string velocity_csv(const std::string& hash, const std::vector<CurvePoint>& velocity, std::int64_t dt);
std::string embedding_csv(const std::string& hash, const Embedding2D& embedding);

// SVG

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct SvgStyle {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 420;
  bool lines = true;
  /// Colors run from light to dark with series order instead of a palette.
  bool sequential = false;
  std::string comment;  // written as an XML comment after the root element
};

/// Standalone SVG with axes, ticks, one marker per point, legend and title.
/// Throws UsageError when there are no points at all.
std::string emit_svg(const std::vector<SvgSeries>& series, const SvgStyle& style);

/// One series per curve, labelled by tau or dt.
std::string emit_svg(const std::vector<DistanceCurve>& curves, SvgStyle style);

/// Trajectory scatter; later iterations are drawn darker and the first
/// point gets its own "initialization" marker.
std::string emit_svg(const Embedding2D& embedding, SvgStyle style);

// Binary checkpoint store: one file per record holding a little-endian
// uint64 header followed by 64-bit little-endian reals.

void write_vector_bin(const std::filesystem::path& path, const Vector& v);
Vector read_vector_bin(const std::filesystem::path& path);
/// Matrices carry a rows/cols header and column-major data.
void write_matrix_bin(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_bin(const std::filesystem::path& path);

struct CheckpointIndexEntry {
  std::int64_t iteration = 0;
  std::string params_file;
  std::string gram_file;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  bool linearized = false;

  bool operator==(const CheckpointIndexEntry&) const = default;
};

std::string checkpoint_index_text(const std::string& hash, const std::vector<CheckpointIndexEntry>& entries);
std::vector<CheckpointIndexEntry> read_checkpoint_index(const std::filesystem::path& path);

/// Reads the `config_hash` comment from the first line of a text output.
std::string read_config_hash(const std::filesystem::path& path);

}  // namespace entk
