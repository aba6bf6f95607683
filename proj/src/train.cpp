#include "entk/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "entk/errors.hpp"

namespace entk {

std::vector<std::int64_t> CheckpointSchedule::resolve(std::int64_t total) const {
  std::vector<std::int64_t> its;
  if (!explicit_iterations.empty()) {
    its = explicit_iterations;
  } else {
    if (every > 0)
      for (std::int64_t t = 0; t <= total; t += every) its.push_back(t);
    if (log_count > 0 && total > 0) {
      const double top = std::log(static_cast<double>(total));
      for (int k = 0; k < log_count; ++k) {
        const double frac = log_count == 1 ? 1.0 : static_cast<double>(k) / (log_count - 1);
        its.push_back(static_cast<std::int64_t>(std::llround(std::exp(frac * top))));
      }
    }
  }
  its.push_back(0);
  its.push_back(total);
  std::sort(its.begin(), its.end());
  its.erase(std::unique(its.begin(), its.end()), its.end());
  its.erase(std::remove_if(its.begin(), its.end(), [&](std::int64_t t) { return t < 0 || t > total; }),
            its.end());
  return its;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (iterations < 0) throw ConfigError("iteration count must be non-negative");
  if (schedule.every < 0) throw ConfigError("checkpoint spacing must be non-negative");
  const auto& ex = schedule.explicit_iterations;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    if (ex[i] < 0 || ex[i] > iterations) throw ConfigError("checkpoint iteration outside [0, T]");
    if (i > 0 && ex[i] <= ex[i - 1]) throw ConfigError("checkpoint list must be sorted and unique");
  }
}

const Checkpoint* TrajectoryLog::find(std::int64_t iteration) const {
  auto it = std::lower_bound(records.begin(), records.end(), iteration,
                             [](const Checkpoint& c, std::int64_t t) { return c.iteration < t; });
  return (it != records.end() && it->iteration == iteration) ? &*it : nullptr;
}

const Checkpoint& TrajectoryLog::at(std::int64_t iteration) const {
  if (const Checkpoint* c = find(iteration)) return *c;
  throw LookupError("no checkpoint at iteration " + std::to_string(iteration));
}

std::vector<std::int64_t> TrajectoryLog::iterations() const {
  std::vector<std::int64_t> its;
  its.reserve(records.size());
  for (const auto& r : records) its.push_back(r.iteration);
  return its;
}

BatchStream::BatchStream(Index dataset_size, int batch_size, std::uint64_t seed)
    : n_(dataset_size), batch_(batch_size), seed_(seed) {
  if (n_ <= 0) throw UsageError("cannot draw batches from an empty dataset");
}

const std::vector<Index>& BatchStream::epoch(std::int64_t e) {
  if (e != cached_epoch_) {
    perm_.resize(static_cast<std::size_t>(n_));
    std::iota(perm_.begin(), perm_.end(), Index{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(e >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(perm_.begin(), perm_.end(), rng);
    cached_epoch_ = e;
  }
  return perm_;
}

std::vector<Index> BatchStream::batch(std::int64_t iteration) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(batch_));
  std::int64_t pos = (iteration - 1) * batch_;
  for (int k = 0; k < batch_; ++k, ++pos) {
    const std::int64_t e = pos / n_;
    out.push_back(epoch(e)[static_cast<std::size_t>(pos % n_)]);
  }
  return out;
}

Metrics evaluate_logits(const Matrix& logits, const Dataset& data, LossKind loss, const ReadoutRule& rule) {
  Metrics m;
  if (data.size() == 0) return m;
  const Batch all{Matrix(), data.labels, data.targets};
  m.loss = logit_loss(logits, all, loss, rule).loss;
  Index correct = 0;
  for (Index s = 0; s < logits.cols(); ++s) {
    Index best = 0;
    logits.col(s).maxCoeff(&best);  // first maximum: ties go to the lowest class
    if (best == data.labels[static_cast<std::size_t>(s)]) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return m;
}

Metrics evaluate(const ModelState& model, const Dataset& data) {
  if (data.dim() != model.arch.input_dim) throw ShapeError("dataset dimension does not match architecture");
  if (data.size() == 0) return {};
  return evaluate_logits(forward_batch(model, data.inputs), data);
}

Matrix checkpoint_logits(const Checkpoint& checkpoint, const Matrix& inputs) {
  if (!checkpoint.linearized()) return forward_batch(checkpoint.state, inputs);
  const ModelState& a = *checkpoint.anchor;
  const Vector delta = checkpoint.state.params - a.params;
  Matrix logits = a.net->forward(a.params, inputs);
  logits += a.net->jvp(a.params, delta, inputs);
  return logits;
}

Metrics evaluate_checkpoint(const Checkpoint& checkpoint, const Dataset& data, LossKind loss,
                            const ReadoutRule& rule) {
  if (data.size() == 0) return {};
  return evaluate_logits(checkpoint_logits(checkpoint, data.inputs), data, loss, rule);
}

void sgd_run(SgdState& state, const Dataset& data, const TrainConfig& cfg, std::int64_t first,
             std::int64_t last, bool record_first, const BatchGradFn& grad_fn,
             const RecordFn& record_fn, const CheckpointHook& hook, TrajectoryLog& log) {
  const std::vector<std::int64_t> schedule = cfg.schedule.resolve(cfg.iterations);
  auto scheduled = [&](std::int64_t t) { return std::binary_search(schedule.begin(), schedule.end(), t); };
  auto record = [&](std::int64_t t) {
    Checkpoint c = record_fn(t, state.params);
    const Metrics m = evaluate_checkpoint(c, data, cfg.loss, cfg.readout);
    c.train_loss = m.loss;
    c.train_accuracy = m.accuracy;
    if (hook) hook(c);
    log.records.push_back(std::move(c));
  };

  if (record_first && scheduled(first)) record(first);
  if (state.velocity.size() != state.params.size()) state.velocity = Vector::Zero(state.params.size());

  BatchStream stream(data.size(), cfg.batch_size, cfg.shuffle_seed);
  for (std::int64_t t = first + 1; t <= last; ++t) {
    const std::vector<Index> idx = stream.batch(t);
    const Batch batch = data.gather(idx);
    LossGrad lg;
    try {
      lg = grad_fn(state.params, batch);
    } catch (const NumericError&) {
      throw DivergenceError(t, std::numeric_limits<double>::quiet_NaN());
    }
    if (!std::isfinite(lg.loss) || lg.loss > cfg.divergence_limit || !lg.grad.allFinite())
      throw DivergenceError(t, lg.loss);
    state.velocity = cfg.momentum * state.velocity + lg.grad;
    state.params -= cfg.lr * state.velocity;
    if (scheduled(t)) record(t);
  }
}

TrajectoryLog train(const ModelState& model, const Dataset& data, const TrainConfig& cfg,
                    const CheckpointHook& hook) {
  cfg.validate();
  data.validate();
  if (data.dim() != model.arch.input_dim) throw ShapeError("dataset dimension does not match architecture");
  if (data.classes > model.arch.classes) throw ShapeError("dataset has more classes than the network");

  TrajectoryLog log;
  log.config = cfg;
  log.init_seed = model.seed;
  SgdState state{model.params, Vector::Zero(model.params.size())};
  const auto net = model.net;
  const ModelState templ = model;

  const BatchGradFn grad_fn = [&](const Vector& params, const Batch& batch) {
    Network::Tape tape;
    const Matrix logits = net->forward(params, batch.inputs, &tape);
    LogitLoss ll = logit_loss(logits, batch, cfg.loss, cfg.readout);
    LossGrad out;
    out.loss = ll.loss;
    net->backward(params, tape, ll.grad_logits, &out.grad, nullptr);
    return out;
  };
  const RecordFn record_fn = [&](std::int64_t t, const Vector& params) {
    Checkpoint c;
    c.iteration = t;
    c.state = templ;
    c.state.params = params;
    return c;
  };
  sgd_run(state, data, cfg, 0, cfg.iterations, true, grad_fn, record_fn, hook, log);
  return log;
}

}  // namespace entk
