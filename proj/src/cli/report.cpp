#include "entk/report.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "entk/errors.hpp"

namespace entk {

namespace fs = std::filesystem;

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw UsageError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::string& config_hash, const std::vector<std::string>& columns)
    : columns_(columns.size()) {
  out_ = "# config_hash=" + config_hash + "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) out_ += (i ? "," : "") + columns[i];
  out_ += "\n";
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw ShapeError("csv row has " + std::to_string(cells.size()) + " cells");
  for (std::size_t i = 0; i < cells.size(); ++i) out_ += (i ? "," : "") + cells[i];
  out_ += "\n";
}

std::string kernel_distance_csv(const std::string& hash, const std::vector<DistanceCurve>& curves) {
  CsvWriter csv(hash, {"kind", "param", "t", "S"});
  for (const DistanceCurve& c : curves) {
    const std::string kind = c.kind == DistanceCurve::Kind::reference ? "ref" : "adj";
    for (const CurvePoint& p : c.points)
      csv.row({kind, std::to_string(c.param), std::to_string(p.t), format_real(p.value)});
  }
  return csv.str();
}

std::string velocity_csv(const std::string& hash, const std::vector<CurvePoint>& velocity, std::int64_t dt) {
  CsvWriter csv(hash, {"t", "dt", "v"});
  for (const CurvePoint& p : velocity) csv.row({std::to_string(p.t), std::to_string(dt), format_real(p.value)});
  return csv.str();
}

std::string embedding_csv(const std::string& hash, const Embedding2D& e) {
  CsvWriter csv(hash, {"t", "x", "y"});
  for (std::size_t i = 0; i < e.t.size(); ++i) {
    const auto r = static_cast<Index>(i);
    csv.row({std::to_string(e.t[i]), format_real(e.coords(r, 0)), format_real(e.coords(r, 1))});
  }
  return csv.str();
}

// SVG

namespace {

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Light blue to near black as f goes 0 -> 1.
std::string ramp_color(double f) {
  f = std::clamp(f, 0.0, 1.0);
  const double lo[3] = {198, 219, 239}, hi[3] = {8, 24, 60};
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(lo[0] + f * (hi[0] - lo[0]))),
                static_cast<int>(std::lround(lo[1] + f * (hi[1] - lo[1]))),
                static_cast<int>(std::lround(lo[2] + f * (hi[2] - lo[2]))));
  return buf;
}

std::string tick_label(double v, double step) {
  if (std::abs(v) < step * 1e-9) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double nice_step(double range, int target) {
  const double raw = range / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  return mag * (f < 1.5 ? 1.0 : f < 3.0 ? 2.0 : f < 7.0 ? 5.0 : 10.0);
}

struct Frame {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;  // data range
  double left = 72, right = 0, top = 44, bottom = 0;

  double sx(double x) const { return left + (x - x0) / (x1 - x0) * (right - left); }
  double sy(double y) const { return bottom - (y - y0) / (y1 - y0) * (bottom - top); }
};

void widen(double& lo, double& hi) {
  if (hi > lo) return;
  const double pad = lo == 0.0 ? 1.0 : 0.5 * std::abs(lo);
  lo -= pad;
  hi += pad;
}

struct LegendEntry {
  std::string label;
  std::string color;
};

class SvgBuilder {
 public:
  SvgBuilder(const SvgStyle& style, double x0, double x1, double y0, double y1) : style_(style) {
    widen(x0, x1);
    widen(y0, y1);
    frame_.x0 = x0;
    frame_.x1 = x1;
    frame_.y0 = y0;
    frame_.y1 = y1;
    frame_.right = style.width - 170.0;
    frame_.bottom = style.height - 52.0;
    out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width << "\" height=\"" << style.height
         << "\" viewBox=\"0 0 " << style.width << ' ' << style.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    if (!style.comment.empty()) out_ << "<!-- " << escape_xml(style.comment) << " -->\n";
    out_ << "<rect x=\"0\" y=\"0\" width=\"" << style.width << "\" height=\"" << style.height
         << "\" fill=\"white\"/>\n";
    out_ << "<text x=\"" << px(style.width / 2.0) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
         << escape_xml(style.title) << "</text>\n";
    axes();
  }

  const Frame& frame() const { return frame_; }
  std::ostringstream& body() { return out_; }

  void polyline(const std::vector<double>& x, const std::vector<double>& y, const std::string& color) {
    if (x.size() < 2) return;
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) out_ << (i ? " " : "") << px(frame_.sx(x[i])) << ',' << px(frame_.sy(y[i]));
    out_ << "\"/>\n";
  }

  void marker(double x, double y, const std::string& color, double r = 2.5) {
    out_ << "<circle cx=\"" << px(frame_.sx(x)) << "\" cy=\"" << px(frame_.sy(y)) << "\" r=\"" << px(r)
         << "\" fill=\"" << color << "\"/>\n";
  }

  std::string finish(const std::vector<LegendEntry>& legend) {
    out_ << "<g class=\"legend\">\n";
    const double lx = frame_.right + 16;
    for (std::size_t i = 0; i < legend.size(); ++i) {
      const double ly = frame_.top + 8 + 18.0 * static_cast<double>(i);
      out_ << "<rect x=\"" << px(lx) << "\" y=\"" << px(ly - 9) << "\" width=\"12\" height=\"12\" fill=\""
           << legend[i].color << "\"/>\n";
      out_ << "<text x=\"" << px(lx + 18) << "\" y=\"" << px(ly + 1) << "\">" << escape_xml(legend[i].label)
           << "</text>\n";
    }
    out_ << "</g>\n</svg>\n";
    return out_.str();
  }

 private:
  void axes() {
    const Frame& f = frame_;
    out_ << "<g class=\"axes\" stroke=\"#333\" stroke-width=\"1\">\n";
    out_ << "<line x1=\"" << px(f.left) << "\" y1=\"" << px(f.bottom) << "\" x2=\"" << px(f.right) << "\" y2=\""
         << px(f.bottom) << "\"/>\n";
    out_ << "<line x1=\"" << px(f.left) << "\" y1=\"" << px(f.top) << "\" x2=\"" << px(f.left) << "\" y2=\""
         << px(f.bottom) << "\"/>\n";
    out_ << "</g>\n<g class=\"ticks\" fill=\"#333\">\n";
    const double xs = nice_step(f.x1 - f.x0, 6);
    for (double v = std::ceil(f.x0 / xs) * xs; v <= f.x1 + 1e-9 * xs; v += xs) {
      out_ << "<line x1=\"" << px(f.sx(v)) << "\" y1=\"" << px(f.bottom) << "\" x2=\"" << px(f.sx(v)) << "\" y2=\""
           << px(f.bottom + 5) << "\" stroke=\"#333\"/>\n";
      out_ << "<text x=\"" << px(f.sx(v)) << "\" y=\"" << px(f.bottom + 18) << "\" text-anchor=\"middle\">"
           << tick_label(v, xs) << "</text>\n";
    }
    const double ys = nice_step(f.y1 - f.y0, 5);
    for (double v = std::ceil(f.y0 / ys) * ys; v <= f.y1 + 1e-9 * ys; v += ys) {
      out_ << "<line x1=\"" << px(f.left - 5) << "\" y1=\"" << px(f.sy(v)) << "\" x2=\"" << px(f.left) << "\" y2=\""
           << px(f.sy(v)) << "\" stroke=\"#333\"/>\n";
      out_ << "<text x=\"" << px(f.left - 8) << "\" y=\"" << px(f.sy(v) + 4) << "\" text-anchor=\"end\">"
           << tick_label(v, ys) << "</text>\n";
    }
    out_ << "</g>\n";
    out_ << "<text x=\"" << px((f.left + f.right) / 2) << "\" y=\"" << px(style_.height - 12.0)
         << "\" text-anchor=\"middle\">" << escape_xml(style_.x_label) << "</text>\n";
    out_ << "<text transform=\"translate(16," << px((f.top + f.bottom) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
         << escape_xml(style_.y_label) << "</text>\n";
  }

  SvgStyle style_;
  Frame frame_{};
  std::ostringstream out_;
};

}  // namespace

std::string emit_svg(const std::vector<SvgSeries>& series, const SvgStyle& style) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  std::size_t points = 0;
  for (const SvgSeries& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("series '" + s.label + "' has mismatched x and y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
        throw NumericError("series '" + s.label + "' has a non-finite point");
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
    points += s.x.size();
  }
  if (points == 0) throw UsageError("cannot plot an empty series");

  SvgBuilder svg(style, x0, x1, y0, y1);
  std::vector<LegendEntry> legend;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const SvgSeries& s = series[k];
    const std::string color =
        style.sequential
            ? ramp_color(series.size() == 1 ? 1.0 : 0.15 + 0.85 * static_cast<double>(k) / (series.size() - 1))
            : kPalette[k % kPalette.size()];
    svg.body() << "<g class=\"series\">\n";
    if (style.lines) svg.polyline(s.x, s.y, color);
    for (std::size_t i = 0; i < s.x.size(); ++i) svg.marker(s.x[i], s.y[i], color);
    svg.body() << "</g>\n";
    legend.push_back({s.label, color});
  }
  return svg.finish(legend);
}

std::string emit_svg(const std::vector<DistanceCurve>& curves, SvgStyle style) {
  std::vector<SvgSeries> series;
  for (const DistanceCurve& c : curves) {
    SvgSeries s;
    s.label = (c.kind == DistanceCurve::Kind::reference ? "tau = " : "dt = ") + std::to_string(c.param);
    for (const CurvePoint& p : c.points) {
      s.x.push_back(static_cast<double>(p.t));
      s.y.push_back(p.value);
    }
    series.push_back(std::move(s));
  }
  return emit_svg(series, style);
}

std::string emit_svg(const Embedding2D& e, SvgStyle style) {
  const Index m = e.coords.rows();
  if (m == 0) throw UsageError("cannot plot an empty embedding");
  const double x0 = e.coords.col(0).minCoeff(), x1 = e.coords.col(0).maxCoeff();
  const double y0 = e.coords.col(1).minCoeff(), y1 = e.coords.col(1).maxCoeff();
  SvgBuilder svg(style, x0, x1, y0, y1);

  std::vector<double> xs(e.coords.col(0).data(), e.coords.col(0).data() + m);
  std::vector<double> ys(e.coords.col(1).data(), e.coords.col(1).data() + m);
  svg.body() << "<g class=\"series\">\n";
  svg.polyline(xs, ys, "#d9d9d9");
  for (Index i = 0; i < m; ++i)
    svg.marker(xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(i)],
               ramp_color(m == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(m - 1)), 3.0);
  svg.body() << "</g>\n";
  const Frame& f = svg.frame();
  svg.body() << "<rect class=\"init\" x=\"" << px(f.sx(xs[0]) - 5) << "\" y=\"" << px(f.sy(ys[0]) - 5)
             << "\" width=\"10\" height=\"10\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";

  const std::string first = e.t.empty() ? "first" : "t = " + std::to_string(e.t.front());
  const std::string last = e.t.empty() ? "last" : "t = " + std::to_string(e.t.back());
  return svg.finish({{"initialization", "#d62728"}, {first, ramp_color(0.0)}, {last, ramp_color(1.0)}});
}

// Binary store

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos, const fs::path& path) {
  if (pos + 8 > in.size()) throw LengthError("truncated file " + path.string());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

void put_reals(std::string& out, const double* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) put_u64(out, std::bit_cast<std::uint64_t>(data[i]));
}

void get_reals(const std::string& in, std::size_t& pos, double* data, std::size_t n, const fs::path& path) {
  if (in.size() - pos != 8 * n)
    throw LengthError(path.string() + ": expected " + std::to_string(n) + " reals, found " +
                      std::to_string((in.size() - pos) / 8));
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_u64(in, pos, path));
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_vector_bin(const fs::path& path, const Vector& v) {
  std::string out;
  put_u64(out, static_cast<std::uint64_t>(v.size()));
  put_reals(out, v.data(), static_cast<std::size_t>(v.size()));
  write_atomic(path, out);
}

Vector read_vector_bin(const fs::path& path) {
  const std::string in = slurp(path);
  std::size_t pos = 0;
  const std::uint64_t n = get_u64(in, pos, path);
  if (n > in.size()) throw LengthError(path.string() + ": implausible length header");
  Vector v(static_cast<Index>(n));
  get_reals(in, pos, v.data(), n, path);
  return v;
}

void write_matrix_bin(const fs::path& path, const Matrix& m) {
  std::string out;
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  put_reals(out, m.data(), static_cast<std::size_t>(m.size()));
  write_atomic(path, out);
}

Matrix read_matrix_bin(const fs::path& path) {
  const std::string in = slurp(path);
  std::size_t pos = 0;
  const std::uint64_t r = get_u64(in, pos, path);
  const std::uint64_t c = get_u64(in, pos, path);
  if (r > in.size() || c > in.size()) throw LengthError(path.string() + ": implausible shape header");
  Matrix m(static_cast<Index>(r), static_cast<Index>(c));
  get_reals(in, pos, m.data(), r * c, path);
  return m;
}

std::string checkpoint_index_text(const std::string& hash, const std::vector<CheckpointIndexEntry>& entries) {
  CsvWriter csv(hash, {"iteration", "params_file", "gram_file", "train_loss", "train_accuracy", "linearized"});
  for (const CheckpointIndexEntry& e : entries)
    csv.row({std::to_string(e.iteration), e.params_file, e.gram_file, format_real(e.train_loss),
             format_real(e.train_accuracy), e.linearized ? "1" : "0"});
  return csv.str();
}

std::vector<CheckpointIndexEntry> read_checkpoint_index(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::string line;
  std::vector<CheckpointIndexEntry> entries;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw FormatError(path.string() + ": malformed index line '" + line + "'");
    CheckpointIndexEntry e;
    try {
      e.iteration = std::stoll(cells[0]);
      e.params_file = cells[1];
      e.gram_file = cells[2];
      e.train_loss = std::stod(cells[3]);
      e.train_accuracy = std::stod(cells[4]);
      e.linearized = cells[5] == "1";
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": malformed index line '" + line + "'");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string read_config_hash(const fs::path& path) {
  std::istringstream in(slurp(path));
  std::string line;
  std::getline(in, line);
  const std::string tag = "config_hash=";
  const auto pos = line.find(tag);
  if (line.empty() || line[0] != '#' || pos == std::string::npos)
    throw FormatError(path.string() + ": missing config_hash header");
  return line.substr(pos + tag.size());
}

}  // namespace entk
