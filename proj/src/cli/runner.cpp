#include "entk/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "entk/errors.hpp"
#include "entk/lintrain.hpp"
#include "entk/ntk.hpp"
#include "entk/report.hpp"

namespace entk {

namespace fs = std::filesystem;

fs::path apply_options(ExperimentConfig& cfg, const RunOptions& options) {
  if (options.seed) cfg.seed = *options.seed;
  if (options.out_dir) cfg.output_dir = options.out_dir->string();
  return cfg.resolve(cfg.output_dir);
}

namespace {

std::string iteration_tag(std::int64_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08lld", static_cast<long long>(t));
  return buf;
}

void write_resolved_config(const ExperimentConfig& cfg, const std::string& hash, const fs::path& dir) {
  write_atomic(dir / "config.resolved.cfg", "# config_hash=" + hash + "\n" + serialize_config(resolved(cfg)));
}

double mean_of(const std::vector<CurvePoint>& v, std::size_t begin, std::size_t end) {
  if (begin >= end) return 0.0;
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += v[i].value;
  return s / static_cast<double>(end - begin);
}

std::vector<DistanceCurve> nonempty(const std::vector<DistanceCurve>& curves) {
  std::vector<DistanceCurve> out;
  for (const DistanceCurve& c : curves)
    if (!c.points.empty()) out.push_back(c);
  return out;
}

}  // namespace

DynamicsOutput dynamics(ExperimentConfig cfg, const fs::path& out_dir, std::ostream* log) {
  cfg.validate();
  ExperimentData data = load_experiment_data(cfg);
  const std::string hash = config_hash(resolved(cfg));
  fs::create_directories(out_dir / "checkpoints");
  write_resolved_config(cfg, hash, out_dir);

  const Dataset& probe_source = cfg.probe.split == "train" ? data.train : data.test;
  const ProbeSet probe = probe_sample(probe_source, cfg.probe.size, cfg.probe.seed, cfg.probe.stratified);
  const ModelState model = init_model(cfg.arch, cfg.seed);

  GramCache cache;
  std::vector<CheckpointIndexEntry> index;
  const CheckpointHook hook = [&](Checkpoint& c) {
    c.gram = cache.get(c, probe, cfg.readout, cfg.measure.chunk);
    CheckpointIndexEntry e;
    e.iteration = c.iteration;
    e.params_file = "params_" + iteration_tag(c.iteration) + ".bin";
    e.gram_file = "gram_" + iteration_tag(c.iteration) + ".bin";
    e.train_loss = c.train_loss;
    e.train_accuracy = c.train_accuracy;
    e.linearized = c.linearized();
    write_vector_bin(out_dir / "checkpoints" / e.params_file, c.state.params);
    write_matrix_bin(out_dir / "checkpoints" / e.gram_file, c.gram->h);
    index.push_back(e);
    if (log)
      *log << "[dynamics] t=" << c.iteration << " train_loss=" << c.train_loss
           << " train_acc=" << c.train_accuracy << std::endl;
  };

  DynamicsOutput out;
  out.trajectory = train(model, data.train, cfg.train, hook);
  write_atomic(out_dir / "checkpoints" / "index.csv", checkpoint_index_text(hash, index));

  const TrajectoryLog& traj = out.trajectory;
  out.reference_curves = distance_to_references(traj, cfg.measure.taus);
  out.adjacent_curves = adjacent_distances(traj, cfg.measure.dts);
  out.report = cone_report(traj, cfg.measure.taus, cfg.measure.dts, cfg.measure.rho, cfg.measure.window);
  out.embedding = cone_embedding(pairwise_distances(traj), traj.iterations());

  std::vector<DistanceCurve> all = out.reference_curves;
  all.insert(all.end(), out.adjacent_curves.begin(), out.adjacent_curves.end());
  write_atomic(out_dir / "kernel_distance.csv", kernel_distance_csv(hash, all));
  write_atomic(out_dir / "velocity.csv", velocity_csv(hash, out.report.velocity, out.report.velocity_dt));
  write_atomic(out_dir / "embedding.csv", embedding_csv(hash, out.embedding));

  const Metrics test = evaluate(ModelState::from_params(cfg.arch, traj.records.back().state.params, cfg.seed),
                                data.test);
  const std::vector<CurvePoint>& v = out.report.velocity;
  const std::size_t early_end = (v.size() + 9) / 10;
  std::ostringstream rep;
  rep << "# config_hash=" << hash << "\n";
  rep << "checkpoints = " << traj.records.size() << "\n";
  rep << "probe_size = " << probe.size() << "\n";
  rep << "final_train_loss = " << format_real(traj.records.back().train_loss) << "\n";
  rep << "final_train_accuracy = " << format_real(traj.records.back().train_accuracy) << "\n";
  rep << "final_test_loss = " << format_real(test.loss) << "\n";
  rep << "final_test_accuracy = " << format_real(test.accuracy) << "\n";
  rep << "velocity_dt = " << out.report.velocity_dt << "\n";
  rep << "transition = " << (out.report.transition ? std::to_string(*out.report.transition) : "absent") << "\n";
  rep << "velocity_early_mean = " << format_real(mean_of(v, 0, early_end)) << "\n";
  rep << "velocity_late_mean = " << format_real(mean_of(v, final_third_begin(v.size()), v.size())) << "\n";
  for (const PlateauStats& p : out.report.plateaus)
    rep << "plateau tau=" << p.tau << " level=" << format_real(p.level) << " variation=" << format_real(p.variation)
        << "\n";
  rep << "embedding_method = " << out.embedding.method << "\n";
  rep << "embedding_stress = " << format_real(out.embedding.stress) << "\n";
  write_atomic(out_dir / "cone_report.txt", rep.str());

  const std::string tag = "config_hash=" + hash;
  if (const auto ref = nonempty(out.reference_curves); !ref.empty())
    write_atomic(out_dir / "kernel_distance_ref.svg",
                 emit_svg(ref, {"Kernel distance to reference iterates", "iteration t", "S(theta(t), theta(tau))",
                                640, 420, true, true, tag}));
  if (const auto adj = nonempty(out.adjacent_curves); !adj.empty())
    write_atomic(out_dir / "kernel_distance_adj.svg",
                 emit_svg(adj, {"Kernel distance between adjacent iterates", "iteration t",
                                "S(theta(t), theta(t + dt))", 640, 420, true, true, tag}));
  if (!v.empty()) {
    SvgSeries s{"dt = " + std::to_string(out.report.velocity_dt), {}, {}};
    for (const CurvePoint& p : v) {
      s.x.push_back(static_cast<double>(p.t));
      s.y.push_back(p.value);
    }
    write_atomic(out_dir / "velocity.svg",
                 emit_svg({s}, {"Kernel velocity", "iteration t", "v(t)", 640, 420, true, false, tag}));
  }
  write_atomic(out_dir / "embedding.svg",
               emit_svg(out.embedding, {"eNTK trajectory (classical MDS)", "coordinate 1", "coordinate 2", 640, 420,
                                        true, true, tag}));
  return out;
}

std::vector<SwitchRow> switching(ExperimentConfig cfg, const fs::path& out_dir, std::ostream* log) {
  cfg.validate();
  if (cfg.switching.grid.empty()) throw ConfigError("switch.grid is empty");
  ExperimentData data = load_experiment_data(cfg);
  const std::string hash = config_hash(resolved(cfg));
  fs::create_directories(out_dir);
  write_resolved_config(cfg, hash, out_dir);

  std::vector<std::int64_t> grid = cfg.switching.grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  // Only the final metrics matter here, so intermediate checkpoints are skipped.
  TrainConfig tc = cfg.train;
  tc.schedule = CheckpointSchedule{{}, 0, 0};
  const ModelState model = init_model(cfg.arch, cfg.seed);
  const SwitchOptions options{cfg.switching.lin_lr, cfg.switching.lin_momentum};

  std::vector<SwitchRow> rows;
  CsvWriter csv(hash, {"t_switch", "test_loss", "test_accuracy"});
  for (std::int64_t t : grid) {
    const SwitchResult r = switch_experiment(model, data.train, data.test, tc, t, options);
    rows.push_back({t, r.test_loss, r.test_accuracy});
    csv.row({std::to_string(t), format_real(r.test_loss), format_real(r.test_accuracy)});
    if (log) *log << "[switch] t=" << t << " test_loss=" << r.test_loss << " test_acc=" << r.test_accuracy << std::endl;
  }
  write_atomic(out_dir / "switch.csv", csv.str());

  SvgSeries s{"test accuracy", {}, {}};
  for (const SwitchRow& r : rows) {
    s.x.push_back(static_cast<double>(r.t_switch));
    s.y.push_back(r.test_accuracy);
  }
  write_atomic(out_dir / "switch.svg", emit_svg({s}, {"Test accuracy vs switching iteration", "switching iteration t",
                                                      "test accuracy", 640, 420, true, false, "config_hash=" + hash}));
  return rows;
}

Embedding2D embed_run(const fs::path& run_dir) {
  const fs::path index_path = run_dir / "checkpoints" / "index.csv";
  const std::string hash = read_config_hash(index_path);
  const std::vector<CheckpointIndexEntry> index = read_checkpoint_index(index_path);
  if (index.empty()) throw UsageError("no checkpoints in " + index_path.string());

  std::vector<Matrix> grams;
  std::vector<std::int64_t> its;
  for (const CheckpointIndexEntry& e : index) {
    grams.push_back(read_matrix_bin(run_dir / "checkpoints" / e.gram_file));
    its.push_back(e.iteration);
  }
  const Index m = static_cast<Index>(grams.size());
  Matrix s = Matrix::Zero(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < i; ++j) {
      s(i, j) = kernel_distance(grams[static_cast<std::size_t>(i)], grams[static_cast<std::size_t>(j)]);
      s(j, i) = s(i, j);
    }
  Embedding2D e = cone_embedding(s, its);
  write_atomic(run_dir / "embedding.csv", embedding_csv(hash, e));
  write_atomic(run_dir / "embedding.svg",
               emit_svg(e, {"eNTK trajectory (classical MDS)", "coordinate 1", "coordinate 2", 640, 420, true, true,
                            "config_hash=" + hash}));
  return e;
}

namespace {

template <class F>
int guarded(const char* what, F&& body) {
  try {
    body();
    return kExitOk;
  } catch (const DivergenceError& e) {
    std::cerr << "entk " << what << ": diverged at iteration " << e.iteration() << ": " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "entk " << what << ": " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

int run_dynamics(const fs::path& config_path, const RunOptions& options) {
  return guarded("dynamics", [&] {
    ExperimentConfig cfg = load_config(config_path);
    const fs::path out = apply_options(cfg, options);
    if (!options.quiet) std::cout << serialize_config(resolved(cfg)) << std::flush;
    dynamics(cfg, out, options.quiet ? nullptr : &std::cerr);
  });
}

int run_switch(const fs::path& config_path, const RunOptions& options) {
  return guarded("switch", [&] {
    ExperimentConfig cfg = load_config(config_path);
    const fs::path out = apply_options(cfg, options);
    if (!options.quiet) std::cout << serialize_config(resolved(cfg)) << std::flush;
    switching(cfg, out, options.quiet ? nullptr : &std::cerr);
  });
}

int run_embed(const fs::path& run_dir, const RunOptions& options) {
  return guarded("embed", [&] {
    const Embedding2D e = embed_run(run_dir);
    if (!options.quiet)
      std::cerr << "[embed] " << e.t.size() << " checkpoints, stress " << format_real(e.stress) << "\n";
  });
}

int run_validate(const RunOptions& options) {
  bool ok = true;
  const int code = guarded("validate", [&] {
    for (const CheckResult& r : validation_suite()) {
      ok = ok && r.passed;
      if (!options.quiet || !r.passed)
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    }
  });
  if (code != kExitOk) return code;
  return ok ? kExitOk : kExitUsage;
}

}  // namespace entk
