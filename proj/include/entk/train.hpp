#pragma once

// Deterministic minibatch SGD with momentum and scheduled checkpoints.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "entk/data.hpp"
#include "entk/nn.hpp"
#include "entk/ntk.hpp"

namespace entk {

/// Which iterations get a checkpoint. An explicit list wins; otherwise
/// `every` > 0 gives a uniform grid and `log_count` > 0 adds log-spaced
/// points. 0 and T are always included.
struct CheckpointSchedule {
  std::vector<std::int64_t> explicit_iterations;
  std::int64_t every = 50;
  int log_count = 0;

  std::vector<std::int64_t> resolve(std::int64_t total) const;

  bool operator==(const CheckpointSchedule&) const = default;
};

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  int batch_size = 64;
  std::int64_t iterations = 3000;
  std::uint64_t shuffle_seed = 0;
  CheckpointSchedule schedule;
  LossKind loss = LossKind::cross_entropy;
  ReadoutRule readout;  // used by mse-on-readout
  double divergence_limit = 1e6;

  /// Throws ConfigError on invalid values.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

/// State at one scheduled iteration. For linearized legs `anchor` is set and
/// `state.params` holds anchor + displacement.
struct Checkpoint {
  std::int64_t iteration = 0;
  ModelState state;
  std::shared_ptr<const ModelState> anchor;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::shared_ptr<const GramMatrix> gram;

  bool linearized() const { return anchor != nullptr; }
};

struct TrajectoryLog {
  std::vector<Checkpoint> records;
  TrainConfig config;
  std::uint64_t init_seed = 0;

  /// Throws LookupError when the iteration was not checkpointed.
  const Checkpoint& at(std::int64_t iteration) const;
  const Checkpoint* find(std::int64_t iteration) const;
  std::vector<std::int64_t> iterations() const;
};

using CheckpointHook = std::function<void(Checkpoint&)>;

/// Deterministic batch order: the concatenation of per-epoch permutations of
/// [0, n). Batch t (1-based) covers stream positions [(t-1)B, tB).
class BatchStream {
 public:
  BatchStream(Index dataset_size, int batch_size, std::uint64_t seed);

  std::vector<Index> batch(std::int64_t iteration);

 private:
  const std::vector<Index>& epoch(std::int64_t e);

  Index n_;
  int batch_;
  std::uint64_t seed_;
  std::int64_t cached_epoch_ = -1;
  std::vector<Index> perm_;
};

/// Mean loss and arg-max accuracy (ties to the lowest class).
struct Metrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

Metrics evaluate(const ModelState& model, const Dataset& data);
Metrics evaluate_logits(const Matrix& logits, const Dataset& data, LossKind loss = LossKind::cross_entropy,
                        const ReadoutRule& rule = {});

/// Logits of a checkpoint: the network at `state`, or the linearization
/// around `anchor` for linearized records.
Matrix checkpoint_logits(const Checkpoint& checkpoint, const Matrix& inputs);

/// Evaluates a checkpoint with the loss used for training.
Metrics evaluate_checkpoint(const Checkpoint& checkpoint, const Dataset& data,
                            LossKind loss = LossKind::cross_entropy, const ReadoutRule& rule = {});

/// Optimizer state carried between legs of a run.
struct SgdState {
  Vector params;
  Vector velocity;
};

/// Gradient of the training objective for one batch at the given parameters.
using BatchGradFn = std::function<LossGrad(const Vector& params, const Batch& batch)>;
/// Turns raw parameters into a checkpoint record (metrics are filled by the caller).
using RecordFn = std::function<Checkpoint(std::int64_t iteration, const Vector& params)>;

/// Runs SGD iterations first+1 .. last in place, appending checkpoints that
/// fall in [first, last] (iteration `first` only when `record_first`).
void sgd_run(SgdState& state, const Dataset& data, const TrainConfig& cfg, std::int64_t first,
             std::int64_t last, bool record_first, const BatchGradFn& grad_fn,
             const RecordFn& record_fn, const CheckpointHook& hook, TrajectoryLog& log);

/// SGD with momentum, v <- beta v + g, theta <- theta - lr v.
/// Throws DivergenceError when a batch loss is non-finite or above the limit.
TrajectoryLog train(const ModelState& model, const Dataset& data, const TrainConfig& cfg,
                    const CheckpointHook& hook = {});

}  // namespace entk
