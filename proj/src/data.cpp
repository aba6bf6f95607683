#include "entk/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "entk/errors.hpp"

namespace entk {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (buf.size() < offset + 4)
    throw LengthError(path.string() + ": header truncated at byte " + std::to_string(offset));
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

std::string hex32(std::uint32_t v) {
  std::ostringstream s;
  s << "0x" << std::hex;
  s.width(8);
  s.fill('0');
  s << v;
  return s.str();
}

void check_magic(std::uint32_t observed, std::uint32_t expected, const std::filesystem::path& path) {
  if (observed != expected)
    throw FormatError(path.string() + ": bad IDX magic " + hex32(observed) + " (expected " +
                      hex32(expected) + ")");
}

}  // namespace

void Dataset::validate() const {
  if (static_cast<Index>(labels.size()) != inputs.cols())
    throw ShapeError("dataset '" + name + "' has " + std::to_string(inputs.cols()) + " inputs but " +
                     std::to_string(labels.size()) + " labels");
  if (!targets.empty() && static_cast<Index>(targets.size()) != inputs.cols())
    throw ShapeError("dataset '" + name + "' target count mismatch");
  for (int y : labels)
    if (y < 0 || y >= classes) throw UsageError("dataset '" + name + "' label " + std::to_string(y) + " out of range");
}

Batch Dataset::gather(std::span<const Index> indices) const {
  Batch b;
  b.inputs.resize(dim(), static_cast<Index>(indices.size()));
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index src = indices[i];
    b.inputs.col(static_cast<Index>(i)) = inputs.col(src);
    b.labels.push_back(labels[static_cast<std::size_t>(src)]);
    if (!targets.empty()) b.targets.push_back(targets[static_cast<std::size_t>(src)]);
  }
  return b;
}

Batch Dataset::all() const { return Batch{inputs, labels, targets}; }

Dataset Dataset::head(Index n) const {
  if (n >= size()) return *this;
  Dataset d;
  d.inputs = inputs.leftCols(n);
  d.labels.assign(labels.begin(), labels.begin() + n);
  if (!targets.empty()) d.targets.assign(targets.begin(), targets.begin() + n);
  d.classes = classes;
  d.name = name;
  return d;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  check_magic(read_be32(img, 0, images), kImageMagic, images);
  const std::uint32_t count = read_be32(img, 4, images);
  const std::uint32_t rows = read_be32(img, 8, images);
  const std::uint32_t cols = read_be32(img, 12, images);
  const std::size_t dim = std::size_t{rows} * cols;
  const std::size_t need = 16 + std::size_t{count} * dim;
  if (img.size() < need)
    throw LengthError(images.string() + ": payload has " + std::to_string(img.size() - 16) +
                      " bytes, header announces " + std::to_string(need - 16));

  const auto lab = read_file(labels);
  check_magic(read_be32(lab, 0, labels), kLabelMagic, labels);
  const std::uint32_t label_count = read_be32(lab, 4, labels);
  if (lab.size() < 8 + std::size_t{label_count})
    throw LengthError(labels.string() + ": payload has " + std::to_string(lab.size() - 8) +
                      " bytes, header announces " + std::to_string(label_count));
  if (label_count != count)
    throw FormatError("image count " + std::to_string(count) + " does not match label count " +
                      std::to_string(label_count));

  Dataset d;
  d.name = images.filename().string();
  d.inputs.resize(static_cast<Index>(dim), count);
  for (std::size_t s = 0; s < count; ++s) {
    const unsigned char* px = img.data() + 16 + s * dim;
    for (std::size_t k = 0; k < dim; ++k)
      d.inputs(static_cast<Index>(k), static_cast<Index>(s)) = px[k] / 255.0;
  }
  d.labels.resize(count);
  int max_label = 0;
  for (std::size_t s = 0; s < count; ++s) {
    d.labels[s] = lab[8 + s];
    max_label = std::max(max_label, d.labels[s]);
  }
  d.classes = count == 0 ? 0 : max_label + 1;
  return d;
}

void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels, int rows, int cols) {
  data.validate();
  if (rows * cols != data.dim()) {
    rows = 1;
    cols = static_cast<int>(data.dim());
  }
  std::ofstream img(images, std::ios::binary);
  if (!img) throw UsageError("cannot write " + images.string());
  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  std::vector<char> row(static_cast<std::size_t>(data.dim()));
  for (Index s = 0; s < data.size(); ++s) {
    for (Index k = 0; k < data.dim(); ++k) {
      const double v = std::clamp(std::round(data.inputs(k, s) * 255.0), 0.0, 255.0);
      row[static_cast<std::size_t>(k)] = static_cast<char>(static_cast<unsigned char>(v));
    }
    img.write(row.data(), static_cast<std::streamsize>(row.size()));
  }

  std::ofstream lab(labels, std::ios::binary);
  if (!lab) throw UsageError("cannot write " + labels.string());
  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

Dataset synth_blobs(std::uint64_t seed, int n_per_class, int dim, int classes, double spread,
                    double center_radius) {
  if (classes < 2) throw UsageError("synth_blobs needs at least two classes");
  if (!(spread > 0.0)) throw UsageError("synth_blobs spread must be positive");
  if (dim <= 0 || n_per_class <= 0) throw UsageError("synth_blobs needs positive dim and count");
  if (classes > 2 * dim) throw UsageError("synth_blobs supports at most 2 * dim classes");

  Dataset d;
  d.name = "blobs";
  d.classes = classes;
  d.inputs.resize(dim, static_cast<Index>(n_per_class) * classes);
  d.labels.reserve(static_cast<std::size_t>(n_per_class) * classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  Index col = 0;
  for (int k = 0; k < classes; ++k) {
    Vector center = Vector::Zero(dim);
    center[k / 2] = (k % 2 == 0 ? 1.0 : -1.0) * center_radius;
    for (int i = 0; i < n_per_class; ++i, ++col) {
      for (int j = 0; j < dim; ++j) d.inputs(j, col) = center[j] + noise(rng);
      d.labels.push_back(k);
    }
  }
  return d;
}

std::uint64_t ProbeSet::id() const {
  // FNV-1a over the index list.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Index i : indices) {
    auto v = static_cast<std::uint64_t>(i);
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

ProbeSet ProbeSet::whole(const Dataset& data) {
  ProbeSet p;
  p.indices.resize(static_cast<std::size_t>(data.size()));
  for (Index i = 0; i < data.size(); ++i) p.indices[static_cast<std::size_t>(i)] = i;
  p.inputs = data.inputs;
  p.labels = data.labels;
  return p;
}

ProbeSet probe_sample(const Dataset& data, Index n_probe, std::uint64_t seed, bool stratified) {
  if (n_probe > data.size())
    throw UsageError("probe size " + std::to_string(n_probe) + " exceeds dataset size " +
                     std::to_string(data.size()));
  if (n_probe < 2) throw UsageError("probe size must be at least 2");

  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(n_probe));
  if (n_probe == data.size()) {
    for (Index i = 0; i < n_probe; ++i) chosen.push_back(i);
  } else {
    std::mt19937_64 rng(seed);
    auto take = [&](std::vector<Index> pool, Index k) {
      if (k > static_cast<Index>(pool.size())) throw UsageError("not enough examples to stratify probe");
      // partial Fisher-Yates
      for (Index i = 0; i < k; ++i) {
        std::uniform_int_distribution<Index> pick(i, static_cast<Index>(pool.size()) - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
        chosen.push_back(pool[static_cast<std::size_t>(i)]);
      }
    };
    if (stratified) {
      std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(data.classes));
      for (Index i = 0; i < data.size(); ++i)
        by_class[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].push_back(i);
      const Index per = n_probe / data.classes;
      const Index extra = n_probe % data.classes;
      for (int k = 0; k < data.classes; ++k) take(by_class[static_cast<std::size_t>(k)], per + (k < extra ? 1 : 0));
    } else {
      std::vector<Index> pool(static_cast<std::size_t>(data.size()));
      for (Index i = 0; i < data.size(); ++i) pool[static_cast<std::size_t>(i)] = i;
      take(std::move(pool), n_probe);
    }
    std::sort(chosen.begin(), chosen.end());
  }

  ProbeSet p;
  p.indices = std::move(chosen);
  Batch b = data.gather(p.indices);
  p.inputs = std::move(b.inputs);
  p.labels = std::move(b.labels);
  return p;
}

}  // namespace entk
