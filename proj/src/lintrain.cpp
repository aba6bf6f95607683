#include "entk/lintrain.hpp"

#include "entk/errors.hpp"

namespace entk {

ModelState LinearizedModel::as_model_state() const {
  ModelState s = *anchor;
  s.params = anchor->params + delta;
  return s;
}

LinearizedModel linearize(const ModelState& anchor) {
  if (!anchor.params.allFinite()) throw NumericError("cannot linearize around non-finite parameters");
  return LinearizedModel{std::make_shared<const ModelState>(anchor), Vector::Zero(anchor.params.size())};
}

Matrix linearized_logits(const LinearizedModel& lin, const Matrix& inputs) {
  const ModelState& a = *lin.anchor;
  Network::Tape tape;
  Matrix logits = a.net->forward(a.params, inputs, &tape);
  logits += a.net->jvp(a.params, lin.delta, tape);
  return logits;
}

Vector linearized_forward(const LinearizedModel& lin, const Vector& x) {
  return linearized_logits(lin, x);
}

Vector linearized_grad_params(const LinearizedModel& lin, const Vector& x, std::optional<int> label,
                              const ReadoutRule& rule) {
  return grad_params(*lin.anchor, x, label, rule);
}

namespace {

LossGrad linear_step_grad(const ModelState& anchor, const Vector& delta, const Batch& batch, LossKind loss,
                          const ReadoutRule& rule) {
  if (batch.size() == 0) throw UsageError("loss over an empty batch");
  Network::Tape tape;
  Matrix logits = anchor.net->forward(anchor.params, batch.inputs, &tape);
  logits += anchor.net->jvp(anchor.params, delta, tape);
  LogitLoss ll = logit_loss(logits, batch, loss, rule);
  LossGrad out;
  out.loss = ll.loss;
  // The linearized logits are affine in delta with the anchor Jacobian, so
  // the delta gradient is the anchor's vector-Jacobian product.
  anchor.net->backward(anchor.params, tape, ll.grad_logits, &out.grad, nullptr);
  return out;
}

// Runs the linearized leg on SgdState whose params hold delta.
void run_linear_leg(const std::shared_ptr<const ModelState>& anchor, SgdState& state, const Dataset& data,
                    const TrainConfig& cfg, std::int64_t first, std::int64_t last, bool record_first,
                    const CheckpointHook& hook, TrajectoryLog& log) {
  const BatchGradFn grad_fn = [&](const Vector& delta, const Batch& batch) {
    return linear_step_grad(*anchor, delta, batch, cfg.loss, cfg.readout);
  };
  const RecordFn record_fn = [&](std::int64_t t, const Vector& delta) {
    Checkpoint c;
    c.iteration = t;
    c.state = *anchor;
    c.state.params = anchor->params + delta;
    c.anchor = anchor;
    return c;
  };
  sgd_run(state, data, cfg, first, last, record_first, grad_fn, record_fn, hook, log);
}

}  // namespace

LossGrad linearized_loss_and_grad(const LinearizedModel& lin, const Batch& batch, LossKind loss,
                                  const ReadoutRule& rule) {
  return linear_step_grad(*lin.anchor, lin.delta, batch, loss, rule);
}

TrajectoryLog train_linearized(const LinearizedModel& lin, const Dataset& data, const TrainConfig& cfg,
                               const CheckpointHook& hook) {
  cfg.validate();
  data.validate();
  if (data.dim() != lin.anchor->arch.input_dim) throw ShapeError("dataset dimension does not match architecture");
  TrajectoryLog log;
  log.config = cfg;
  log.init_seed = lin.anchor->seed;
  SgdState state{lin.delta, Vector::Zero(lin.delta.size())};
  run_linear_leg(lin.anchor, state, data, cfg, 0, cfg.iterations, true, hook, log);
  return log;
}

SwitchResult switch_experiment(const ModelState& init, const Dataset& train_data, const Dataset& test_data,
                               const TrainConfig& cfg, std::int64_t t_switch, const SwitchOptions& options,
                               const CheckpointHook& hook) {
  cfg.validate();
  train_data.validate();
  if (t_switch < 0 || t_switch > cfg.iterations)
    throw UsageError("switch iteration " + std::to_string(t_switch) + " outside [0, " +
                     std::to_string(cfg.iterations) + "]");
  if (train_data.dim() != init.arch.input_dim || test_data.dim() != init.arch.input_dim)
    throw ShapeError("dataset dimension does not match architecture");

  SwitchResult result;
  result.t_switch = t_switch;
  result.log.config = cfg;
  result.log.init_seed = init.seed;

  // Standard leg on theta.
  SgdState state{init.params, Vector::Zero(init.params.size())};
  const auto net = init.net;
  const BatchGradFn std_grad = [&](const Vector& params, const Batch& batch) {
    Network::Tape tape;
    const Matrix logits = net->forward(params, batch.inputs, &tape);
    LogitLoss ll = logit_loss(logits, batch, cfg.loss, cfg.readout);
    LossGrad out;
    out.loss = ll.loss;
    net->backward(params, tape, ll.grad_logits, &out.grad, nullptr);
    return out;
  };
  const RecordFn std_record = [&](std::int64_t t, const Vector& params) {
    Checkpoint c;
    c.iteration = t;
    c.state = init;
    c.state.params = params;
    return c;
  };
  sgd_run(state, train_data, cfg, 0, t_switch, true, std_grad, std_record, hook, result.log);

  if (t_switch == cfg.iterations) {
    ModelState final_model = init;
    final_model.params = state.params;
    const Metrics m = evaluate(final_model, test_data);
    result.test_loss = m.loss;
    result.test_accuracy = m.accuracy;
    return result;
  }

  // Linearized leg on delta = theta - theta(t_switch); momentum carries over.
  auto anchor = std::make_shared<ModelState>(init);
  anchor->params = state.params;
  std::shared_ptr<const ModelState> const_anchor = anchor;
  TrainConfig lin_cfg = cfg;
  if (options.lin_lr) lin_cfg.lr = *options.lin_lr;
  if (options.lin_momentum) lin_cfg.momentum = *options.lin_momentum;
  lin_cfg.validate();
  SgdState lin_state{Vector::Zero(state.params.size()), state.velocity};
  run_linear_leg(const_anchor, lin_state, train_data, lin_cfg, t_switch, cfg.iterations, false, hook, result.log);

  LinearizedModel lin{const_anchor, lin_state.params};
  const Metrics m = evaluate_logits(linearized_logits(lin, test_data.inputs), test_data);
  result.test_loss = m.loss;
  result.test_accuracy = m.accuracy;
  return result;
}

}  // namespace entk
