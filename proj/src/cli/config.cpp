#include "entk/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "entk/errors.hpp"

namespace entk {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": cannot parse '" + s + "' as a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& s) {
  std::vector<T> out;
  for (const std::string& item : split_list(s)) out.push_back(parse_number<T>(key, item));
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string&)> set;
};

#define ENTK_STR(member)                                                           \
  Field {                                                                          \
    [](const ExperimentConfig& c) { return c.member; },                            \
        [](ExperimentConfig& c, const std::string&, const std::string& v) { c.member = v; } \
  }
#define ENTK_NUM(member, T)                                                                    \
  Field {                                                                                      \
    [](const ExperimentConfig& c) { return std::to_string(c.member); },                        \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                  \
          c.member = parse_number<T>(k, v);                                                    \
        }                                                                                      \
  }
#define ENTK_REAL(member)                                                                      \
  Field {                                                                                      \
    [](const ExperimentConfig& c) { return fmt_real(c.member); },                              \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                  \
          c.member = parse_number<double>(k, v);                                               \
        }                                                                                      \
  }
#define ENTK_OPT_REAL(member)                                                                  \
  Field {                                                                                      \
    [](const ExperimentConfig& c) { return c.member ? fmt_real(*c.member) : std::string(); },  \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                  \
          if (v.empty()) c.member.reset(); else c.member = parse_number<double>(k, v);         \
        }                                                                                      \
  }
#define ENTK_BOOL(member)                                                                      \
  Field {                                                                                      \
    [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); },        \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                  \
          c.member = parse_bool(k, v);                                                         \
        }                                                                                      \
  }
#define ENTK_LIST(member, T)                                                                   \
  Field {                                                                                      \
    [](const ExperimentConfig& c) { return join(c.member); },                                  \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                  \
          c.member = parse_list<T>(k, v);                                                      \
        }                                                                                      \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"data.source", ENTK_STR(data.source)},
      {"data.train_images", ENTK_STR(data.train_images)},
      {"data.train_labels", ENTK_STR(data.train_labels)},
      {"data.test_images", ENTK_STR(data.test_images)},
      {"data.test_labels", ENTK_STR(data.test_labels)},
      {"data.train_size", ENTK_NUM(data.train_size, Index)},
      {"data.test_size", ENTK_NUM(data.test_size, Index)},
      {"data.blobs.seed", ENTK_NUM(data.blobs_seed, std::uint64_t)},
      {"data.blobs.per_class", ENTK_NUM(data.blobs_per_class, int)},
      {"data.blobs.test_per_class", ENTK_NUM(data.blobs_test_per_class, int)},
      {"data.blobs.dim", ENTK_NUM(data.blobs_dim, int)},
      {"data.blobs.classes", ENTK_NUM(data.blobs_classes, int)},
      {"data.blobs.spread", ENTK_REAL(data.blobs_spread)},
      {"data.blobs.radius", ENTK_REAL(data.blobs_radius)},

      {"arch.kind",
       {[](const ExperimentConfig& c) { return to_string(c.arch.kind); },
        [](ExperimentConfig& c, const std::string&, const std::string& v) { c.arch.kind = parse_arch_kind(v); }}},
      {"arch.activation",
       {[](const ExperimentConfig& c) { return to_string(c.arch.activation); },
        [](ExperimentConfig& c, const std::string&, const std::string& v) {
          c.arch.activation = parse_activation(v);
        }}},
      {"arch.widths",
       {[](const ExperimentConfig& c) { return join(c.arch.widths); },
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.arch.widths = parse_list<int>(k, v);
          c.arch.classes = c.arch.widths.empty() ? 0 : c.arch.widths.back();
        }}},
      {"arch.input_dim", ENTK_NUM(arch.input_dim, int)},

      {"train.lr", ENTK_REAL(train.lr)},
      {"train.momentum", ENTK_REAL(train.momentum)},
      {"train.batch_size", ENTK_NUM(train.batch_size, int)},
      {"train.iterations", ENTK_NUM(train.iterations, std::int64_t)},
      {"train.shuffle_seed", ENTK_NUM(train.shuffle_seed, std::uint64_t)},
      {"train.checkpoint_every", ENTK_NUM(train.schedule.every, std::int64_t)},
      {"train.checkpoint_log_count", ENTK_NUM(train.schedule.log_count, int)},
      {"train.checkpoints", ENTK_LIST(train.schedule.explicit_iterations, std::int64_t)},
      {"train.divergence_limit", ENTK_REAL(train.divergence_limit)},
      {"train.loss",
       {[](const ExperimentConfig& c) { return to_string(c.train.loss); },
        [](ExperimentConfig& c, const std::string&, const std::string& v) { c.train.loss = parse_loss(v); }}},

      {"probe.size", ENTK_NUM(probe.size, Index)},
      {"probe.seed", ENTK_NUM(probe.seed, std::uint64_t)},
      {"probe.stratified", ENTK_BOOL(probe.stratified)},
      {"probe.split", ENTK_STR(probe.split)},

      {"readout",
       {[](const ExperimentConfig& c) { return to_string(c.readout); },
        [](ExperimentConfig& c, const std::string&, const std::string& v) {
          c.readout = parse_readout(v);
          c.train.readout = c.readout;
        }}},

      {"measure.taus", ENTK_LIST(measure.taus, std::int64_t)},
      {"measure.dts", ENTK_LIST(measure.dts, std::int64_t)},
      {"measure.rho", ENTK_REAL(measure.rho)},
      {"measure.window", ENTK_NUM(measure.window, int)},
      {"measure.chunk", ENTK_NUM(measure.chunk, Index)},

      {"switch.grid", ENTK_LIST(switching.grid, std::int64_t)},
      {"switch.lin_lr", ENTK_OPT_REAL(switching.lin_lr)},
      {"switch.lin_momentum", ENTK_OPT_REAL(switching.lin_momentum)},

      {"output.dir", ENTK_STR(output_dir)},
      {"seed", ENTK_NUM(seed, std::uint64_t)},
  };
  return table;
}

#undef ENTK_STR
#undef ENTK_NUM
#undef ENTK_REAL
#undef ENTK_OPT_REAL
#undef ENTK_BOOL
#undef ENTK_LIST

}  // namespace

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return data == o.data && arch == o.arch && train == o.train && probe == o.probe && readout == o.readout &&
         measure == o.measure && switching == o.switching && output_dir == o.output_dir && seed == o.seed;
}

std::filesystem::path ExperimentConfig::resolve(const std::string& p) const {
  const std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

void ExperimentConfig::validate() const {
  if (data.source != "mnist" && data.source != "blobs")
    throw ConfigError("data.source must be mnist or blobs, got '" + data.source + "'");
  if (data.source == "mnist" && (data.train_images.empty() || data.train_labels.empty() ||
                                 data.test_images.empty() || data.test_labels.empty()))
    throw ConfigError("mnist source needs train/test image and label paths");
  if (data.train_size < 0 || data.test_size < 0) throw ConfigError("data sizes must be non-negative");
  if (data.source == "blobs") {
    if (data.blobs_per_class <= 0 || data.blobs_test_per_class <= 0)
      throw ConfigError("blob counts must be positive");
    if (data.blobs_dim <= 0 || data.blobs_classes <= 0 || data.blobs_classes > 2 * data.blobs_dim)
      throw ConfigError("blob classes must lie in [1, 2 * dim]");
  }
  if (arch.widths.empty()) throw ConfigError("arch.widths is empty");
  if (arch.input_dim > 0) arch.validate();
  train.validate();
  if (probe.size < 2) throw ConfigError("probe.size must be at least 2");
  if (probe.split != "train" && probe.split != "test") throw ConfigError("probe.split must be train or test");
  if (!(measure.rho > 0.0 && measure.rho < 1.0)) throw ConfigError("measure.rho must lie in (0, 1)");
  if (measure.window < 1) throw ConfigError("measure.window must be at least 1");
  if (measure.chunk < 1) throw ConfigError("measure.chunk must be at least 1");

  const std::vector<std::int64_t> grid = train.schedule.resolve(train.iterations);
  for (std::int64_t tau : measure.taus)
    if (!std::binary_search(grid.begin(), grid.end(), tau))
      throw ConfigError("measure.taus: " + std::to_string(tau) + " is not a checkpoint iteration");
  std::int64_t spacing = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) spacing = std::gcd(spacing, grid[i] - grid[i - 1]);
  for (std::int64_t dt : measure.dts)
    if (dt <= 0 || (spacing > 0 && dt % spacing != 0))
      throw ConfigError("measure.dts: " + std::to_string(dt) + " is not a positive multiple of the checkpoint spacing");
  for (std::int64_t t : switching.grid)
    if (t < 0 || t > train.iterations)
      throw ConfigError("switch.grid: " + std::to_string(t) + " outside [0, train.iterations]");
  if (switching.lin_lr && !(*switching.lin_lr >= 0.0)) throw ConfigError("switch.lin_lr must be non-negative");
  if (switching.lin_momentum && !(*switching.lin_momentum >= 0.0 && *switching.lin_momentum < 1.0))
    throw ConfigError("switch.lin_momentum must lie in [0, 1)");
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second)
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    it->second.set(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) {
    const std::string v = field.get(cfg);
    out += key + (v.empty() ? " =" : " = " + v) + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig copy = cfg;
  copy.output_dir.clear();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : serialize_config(copy)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig resolved(const ExperimentConfig& cfg) {
  ExperimentConfig out = cfg;
  for (std::string* p : {&out.data.train_images, &out.data.train_labels, &out.data.test_images,
                         &out.data.test_labels})
    if (!p->empty()) *p = std::filesystem::absolute(cfg.resolve(*p)).lexically_normal().string();
  return out;
}

ExperimentData load_experiment_data(ExperimentConfig& cfg) {
  ExperimentData d;
  if (cfg.data.source == "mnist") {
    d.train = load_idx(cfg.resolve(cfg.data.train_images), cfg.resolve(cfg.data.train_labels));
    d.test = load_idx(cfg.resolve(cfg.data.test_images), cfg.resolve(cfg.data.test_labels));
    if (cfg.data.train_size > 0) d.train = d.train.head(cfg.data.train_size);
    if (cfg.data.test_size > 0) d.test = d.test.head(cfg.data.test_size);
    d.test.classes = std::max(d.test.classes, d.train.classes);
  } else {
    const DataSpec& b = cfg.data;
    d.train = synth_blobs(b.blobs_seed, b.blobs_per_class, b.blobs_dim, b.blobs_classes, b.blobs_spread,
                          b.blobs_radius);
    d.test = synth_blobs(b.blobs_seed + 1, b.blobs_test_per_class, b.blobs_dim, b.blobs_classes,
                         b.blobs_spread, b.blobs_radius);
  }
  if (cfg.arch.input_dim == 0) cfg.arch.input_dim = static_cast<int>(d.train.dim());
  if (cfg.arch.input_dim != d.train.dim())
    throw ConfigError("arch.input_dim " + std::to_string(cfg.arch.input_dim) + " does not match data dimension " +
                      std::to_string(d.train.dim()));
  if (d.train.classes > cfg.arch.classes)
    throw ConfigError("data has " + std::to_string(d.train.classes) + " classes but the network outputs " +
                      std::to_string(cfg.arch.classes));
  cfg.arch.validate();
  return d;
}

}  // namespace entk
