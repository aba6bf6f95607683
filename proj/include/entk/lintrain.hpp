#pragma once

// First-order Taylor linearization around an anchor, training of the
// linearized model, and the standard -> linearized switching experiment.

#include <cstdint>
#include <memory>
#include <optional>

#include "entk/data.hpp"
#include "entk/nn.hpp"
#include "entk/train.hpp"

namespace entk {

/// f_lin(x; theta) = f(x; anchor) + J(x; anchor) (theta - anchor), per logit.
struct LinearizedModel {
  std::shared_ptr<const ModelState> anchor;
  Vector delta;

  Index param_count() const { return anchor->param_count(); }

  /// anchor + delta as a plain parameter vector.
  ModelState as_model_state() const;
};

/// Linearization with zero displacement, so f_lin == f at creation.
LinearizedModel linearize(const ModelState& anchor);

Matrix linearized_logits(const LinearizedModel& lin, const Matrix& inputs);
Vector linearized_forward(const LinearizedModel& lin, const Vector& x);

/// Readout gradient of the linearized model: the anchor's gradient.
Vector linearized_grad_params(const LinearizedModel& lin, const Vector& x, std::optional<int> label,
                              const ReadoutRule& rule);

/// Mean loss of the linearized logits and its gradient with respect to delta.
LossGrad linearized_loss_and_grad(const LinearizedModel& lin, const Batch& batch, LossKind loss,
                                  const ReadoutRule& rule = {});

/// SGD on the displacement for cfg.iterations steps from iteration 0.
/// Every checkpoint carries the anchor; `state.params` holds anchor + delta.
TrajectoryLog train_linearized(const LinearizedModel& lin, const Dataset& data, const TrainConfig& cfg,
                               const CheckpointHook& hook = {});

struct SwitchOptions {
  std::optional<double> lin_lr;        // defaults to the standard leg's rate
  std::optional<double> lin_momentum;  // defaults to the standard leg's momentum
};

struct SwitchResult {
  std::int64_t t_switch = 0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  TrajectoryLog log;
};

/// Standard training to t_switch, then linearized training around
/// theta(t_switch) up to cfg.iterations, continuing the batch stream and the
/// momentum buffer. Test metrics come from the final model (the linearized
/// one whenever t_switch < T).
SwitchResult switch_experiment(const ModelState& init, const Dataset& train_data, const Dataset& test_data,
                               const TrainConfig& cfg, std::int64_t t_switch,
                               const SwitchOptions& options = {}, const CheckpointHook& hook = {});

}  // namespace entk
