#include <cmath>
#include <cstdio>

#include "entk/config.hpp"
#include "entk/data.hpp"
#include "entk/errors.hpp"
#include "entk/lintrain.hpp"
#include "entk/ntk.hpp"
#include "entk/runner.hpp"

namespace entk {

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

CheckResult gradient_check() {
  const ModelState m = init_model(ArchSpec::mlp({4, 8, 3}, Activation::tanh), 11);
  const Dataset d = synth_blobs(5, 2, 4, 3, 1.0);
  const double h = 1e-5;
  double worst = 0.0;
  for (Index s = 0; s < d.size(); ++s) {
    const Vector x = d.inputs.col(s);
    const int y = d.labels[static_cast<std::size_t>(s)];
    const Vector g = grad_params(m, x, y, ReadoutRule::true_class());
    Vector fd(g.size());
    ModelState p = m;
    for (Index i = 0; i < g.size(); ++i) {
      const double keep = p.params[i];
      p.params[i] = keep + h;
      const double up = scalar_output(p, x, y, ReadoutRule::true_class());
      p.params[i] = keep - h;
      const double dn = scalar_output(p, x, y, ReadoutRule::true_class());
      p.params[i] = keep;
      fd[i] = (up - dn) / (2 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(1e-12, fd.norm()));
  }
  return {"gradient-vs-finite-difference", worst < 1e-6, "max relative error " + sci(worst)};
}

CheckResult gram_check() {
  const ModelState m = init_model(ArchSpec::mlp({4, 8, 3}), 3);
  const Dataset d = synth_blobs(9, 3, 4, 2, 1.0);
  const ProbeSet probe = ProbeSet::whole(d);
  const ReadoutRule rule = ReadoutRule::true_class();
  Matrix naive(probe.size(), probe.size());
  for (Index i = 0; i < probe.size(); ++i)
    for (Index j = 0; j < probe.size(); ++j)
      naive(i, j) = grad_params(m, probe.inputs.col(i), probe.labels[static_cast<std::size_t>(i)], rule)
                        .dot(grad_params(m, probe.inputs.col(j), probe.labels[static_cast<std::size_t>(j)], rule));
  double worst = 0.0;
  for (Index chunk : {Index{1}, Index{2}, probe.size()})
    worst = std::max(worst, (entk_gram(m, probe, rule, chunk).h - naive).cwiseAbs().maxCoeff());
  return {"gram-vs-pairwise-dots", worst < 1e-12, "max abs difference " + sci(worst)};
}

CheckResult distance_check() {
  Matrix a(2, 2);
  a << 2.0, 0.5, 0.5, 1.0;
  double worst = kernel_distance(a, a);
  for (double alpha : {0.5, 3.0, 100.0}) worst = std::max(worst, std::abs(kernel_distance(a, alpha * a)));
  Matrix e1 = Matrix::Zero(2, 2), e2 = Matrix::Zero(2, 2);
  e1(0, 0) = 1.0;
  e2(1, 1) = 1.0;
  const bool ortho = kernel_distance(e1, e2) == 1.0;
  return {"kernel-distance-algebra", worst < 1e-12 && ortho,
          "self/scale " + sci(worst) + ", orthogonal " + (ortho ? "1" : "not 1")};
}

CheckResult lazy_check() {
  const Dataset d = synth_blobs(2, 8, 3, 2, 0.8);
  const ModelState m = init_model(ArchSpec::mlp({3, 6, 2}), 4);
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.iterations = 100;
  cfg.batch_size = 4;
  cfg.schedule.every = 20;
  const ProbeSet probe = ProbeSet::whole(d);
  const TrajectoryLog log = train_linearized(linearize(m), d, cfg, [&](Checkpoint& c) {
    c.gram = std::make_shared<const GramMatrix>(checkpoint_gram(c, probe, ReadoutRule::true_class(), 4));
  });
  double worst = 0.0;
  for (const Checkpoint& c : log.records) worst = std::max(worst, kernel_distance(*c.gram, *log.records[0].gram));
  return {"linearized-kernel-constant", worst < 1e-8, "max S(H(t), H(0)) " + sci(worst)};
}

CheckResult config_check() {
  ExperimentConfig cfg;
  cfg.data.source = "blobs";
  cfg.arch = ArchSpec::mlp({2, 16, 2});
  cfg.train.iterations = 200;
  cfg.train.lr = 0.1;
  cfg.measure.taus = {0, 100};
  cfg.measure.dts = {50, 100};
  cfg.switching.grid = {0, 200};
  cfg.switching.lin_lr = 0.01;
  const std::string text = serialize_config(cfg);
  const ExperimentConfig back = parse_config(text);
  const bool ok = back == cfg && serialize_config(back) == text;
  return {"config-round-trip", ok, ok ? "identical" : "differs"};
}

}  // namespace

std::vector<CheckResult> validation_suite() {
  std::vector<CheckResult> out;
  for (auto check : {gradient_check, gram_check, distance_check, lazy_check, config_check}) {
    try {
      out.push_back(check());
    } catch (const Error& e) {
      out.push_back({"exception", false, e.what()});
    }
  }
  return out;
}

}  // namespace entk
