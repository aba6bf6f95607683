#include <algorithm>
#include <cmath>
#include <random>

#include "entk/errors.hpp"
#include "entk/nn.hpp"
#include "layers.hpp"

namespace entk {

std::string to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::mlp: return "mlp";
    case ArchKind::lenet: return "lenet";
    case ArchKind::linear: return "linear";
  }
  return "?";
}

std::string to_string(Activation act) { return act == Activation::relu ? "relu" : "tanh"; }

ArchKind parse_arch_kind(const std::string& s) {
  if (s == "mlp") return ArchKind::mlp;
  if (s == "lenet") return ArchKind::lenet;
  if (s == "linear") return ArchKind::linear;
  throw ConfigError("unknown architecture kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string to_string(const ReadoutRule& rule) {
  switch (rule.mode) {
    case ReadoutRule::Mode::true_class_logit: return "true-class-logit";
    case ReadoutRule::Mode::fixed_class_logit:
      return "fixed-class-logit:" + std::to_string(rule.fixed_class);
    case ReadoutRule::Mode::logit_sum: return "logit-sum";
  }
  return "?";
}

ReadoutRule parse_readout(const std::string& s) {
  if (s == "true-class-logit") return ReadoutRule::true_class();
  if (s == "logit-sum") return ReadoutRule::sum();
  const std::string prefix = "fixed-class-logit:";
  if (s.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      const int k = std::stoi(s.substr(prefix.size()), &used);
      if (used == s.size() - prefix.size() && k >= 0) return ReadoutRule::fixed(k);
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown readout rule '" + s + "'");
}

std::string to_string(LossKind loss) {
  return loss == LossKind::cross_entropy ? "cross-entropy" : "mse-on-readout";
}

LossKind parse_loss(const std::string& s) {
  if (s == "cross-entropy") return LossKind::cross_entropy;
  if (s == "mse-on-readout") return LossKind::mse_readout;
  throw ConfigError("unknown loss '" + s + "'");
}

// ArchSpec

ArchSpec ArchSpec::mlp(const std::vector<int>& sizes, Activation act) {
  if (sizes.size() < 2) throw ConfigError("mlp needs at least input and output sizes");
  ArchSpec a;
  a.kind = ArchKind::mlp;
  a.input_dim = sizes.front();
  a.widths.assign(sizes.begin() + 1, sizes.end());
  a.classes = sizes.back();
  a.activation = act;
  a.validate();
  return a;
}

ArchSpec ArchSpec::linear(int input_dim, int classes) {
  ArchSpec a;
  a.kind = ArchKind::linear;
  a.input_dim = input_dim;
  a.widths = {classes};
  a.classes = classes;
  a.validate();
  return a;
}

ArchSpec ArchSpec::lenet(int input_dim, const std::vector<int>& head_widths, Activation act) {
  ArchSpec a;
  a.kind = ArchKind::lenet;
  a.input_dim = input_dim;
  a.widths = head_widths;
  a.classes = head_widths.empty() ? 0 : head_widths.back();
  a.activation = act;
  a.validate();
  return a;
}

namespace {

constexpr int kLenetKernel = 5;
constexpr int kLenetC1 = 6;
constexpr int kLenetC2 = 16;

int square_side(int d) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
  return side * side == d ? side : -1;
}

}  // namespace

void ArchSpec::validate() const {
  if (widths.empty()) throw ConfigError("architecture needs at least one layer width");
  if (std::any_of(widths.begin(), widths.end(), [](int w) { return w <= 0; }))
    throw ConfigError("layer widths must be positive");
  if (input_dim <= 0) throw ConfigError("input dimension must be positive");
  if (classes <= 0) throw ConfigError("class count must be positive");
  if (widths.back() != classes)
    throw ConfigError("final layer width " + std::to_string(widths.back()) +
                      " does not match class count " + std::to_string(classes));
  if (kind == ArchKind::linear && widths.size() != 1)
    throw ConfigError("linear architecture takes exactly one width");
  if (kind == ArchKind::lenet) {
    const int side = square_side(input_dim);
    if (side < 0) throw ConfigError("lenet input dimension must be a square image");
    const int c1 = side - kLenetKernel + 1;
    if (c1 < 2 || c1 % 2 != 0) throw ConfigError("lenet input side incompatible with trunk");
    const int c2 = c1 / 2 - kLenetKernel + 1;
    if (c2 < 2 || c2 % 2 != 0) throw ConfigError("lenet input side incompatible with trunk");
  }
}

// Network

Network::Network(const ArchSpec& arch) : arch_(arch) {
  arch_.validate();
  Index width = arch_.input_dim;
  auto add_dense_stack = [&](const std::vector<int>& widths) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
      layers_.push_back(std::make_unique<DenseLayer>(width, widths[i], true));
      width = widths[i];
      if (i + 1 < widths.size()) layers_.push_back(std::make_unique<ActivationLayer>(arch_.activation, width));
    }
  };

  switch (arch_.kind) {
    case ArchKind::linear:
      layers_.push_back(std::make_unique<DenseLayer>(width, arch_.classes, false));
      break;
    case ArchKind::mlp:
      add_dense_stack(arch_.widths);
      break;
    case ArchKind::lenet: {
      const Index side = square_side(arch_.input_dim);
      auto conv1 = std::make_unique<ConvLayer>(1, kLenetC1, kLenetKernel, side, side);
      const Index h1 = conv1->out_height();
      layers_.push_back(std::move(conv1));
      layers_.push_back(std::make_unique<ActivationLayer>(arch_.activation, kLenetC1 * h1 * h1));
      auto pool1 = std::make_unique<AvgPoolLayer>(kLenetC1, h1, h1);
      const Index p1 = pool1->out_height();
      layers_.push_back(std::move(pool1));
      auto conv2 = std::make_unique<ConvLayer>(kLenetC1, kLenetC2, kLenetKernel, p1, p1);
      const Index h2 = conv2->out_height();
      layers_.push_back(std::move(conv2));
      layers_.push_back(std::make_unique<ActivationLayer>(arch_.activation, kLenetC2 * h2 * h2));
      layers_.push_back(std::make_unique<AvgPoolLayer>(kLenetC2, h2, h2));
      width = kLenetC2 * (h2 / 2) * (h2 / 2);
      add_dense_stack(arch_.widths);
      break;
    }
  }

  offsets_.reserve(layers_.size());
  for (const auto& layer : layers_) {
    offsets_.push_back(param_count_);
    param_count_ += layer->param_count();
  }
}

Network::~Network() = default;

void Network::initialize(std::span<double> params, std::uint64_t seed) const {
  if (static_cast<Index>(params.size()) != param_count_) throw ShapeError("parameter span length mismatch");
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l]->initialize(params.subspan(static_cast<std::size_t>(offsets_[l]),
                                          static_cast<std::size_t>(layers_[l]->param_count())),
                           rng);
  }
}

Matrix Network::forward(const Vector& params, const Matrix& inputs, Tape* tape) const {
  if (params.size() != param_count_)
    throw ShapeError("expected " + std::to_string(param_count_) + " parameters, got " +
                     std::to_string(params.size()));
  if (inputs.rows() != arch_.input_dim)
    throw ShapeError("expected input dimension " + std::to_string(arch_.input_dim) + ", got " +
                     std::to_string(inputs.rows()));
  if (tape) {
    tape->acts.clear();
    tape->acts.reserve(layers_.size() + 1);
    tape->acts.push_back(inputs);
  }
  Matrix act = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const ParamView p(params.data() + offsets_[l], layers_[l]->param_count());
    act = layers_[l]->forward(p, act);
    if (!act.allFinite()) throw NumericError("non-finite activation in layer " + std::to_string(l));
    if (tape) tape->acts.push_back(act);
  }
  return act;
}

void Network::backward(const Vector& params, const Tape& tape, const Matrix& grad_logits,
                       Vector* summed, Matrix* per_sample) const {
  const Index batch = grad_logits.cols();
  if (summed) summed->setZero(param_count_);
  if (per_sample) per_sample->resize(param_count_, batch);

  Matrix grad = grad_logits;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Layer& layer = *layers_[k];
    const Index n = layer.param_count();
    const ParamView p(params.data() + offsets_[k], n);
    const Matrix& in = tape.acts[k];
    if (n > 0) {
      if (summed) {
        ParamSpan g(summed->data() + offsets_[k], n);
        layer.accumulate_grad(in, grad, g);
      }
      if (per_sample) layer.per_sample_grad(in, grad, per_sample->middleRows(offsets_[k], n));
    }
    if (k > 0) {
      grad = layer.backward_input(p, in, tape.acts[k + 1], grad);
      if (!grad.allFinite()) throw NumericError("non-finite gradient in layer " + std::to_string(k));
    }
  }
}

Matrix Network::jvp(const Vector& params, const Vector& tangent, const Matrix& inputs) const {
  Tape tape;
  forward(params, inputs, &tape);
  return jvp(params, tangent, tape);
}

Matrix Network::jvp(const Vector& params, const Vector& tangent, const Tape& tape) const {
  if (params.size() != param_count_ || tangent.size() != param_count_)
    throw ShapeError("parameter or tangent length mismatch");
  if (tape.acts.size() != layers_.size() + 1) throw UsageError("jvp needs a complete forward tape");
  Matrix dact;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Index n = layers_[l]->param_count();
    const ParamView p(params.data() + offsets_[l], n);
    const ParamView dp(tangent.data() + offsets_[l], n);
    dact = layers_[l]->jvp(p, dp, tape.acts[l], dact);
  }
  if (dact.size() == 0) dact = Matrix::Zero(arch_.classes, tape.acts.front().cols());
  return dact;
}

// ModelState and free operations

ModelState ModelState::from_params(const ArchSpec& arch, Vector params, std::uint64_t seed) {
  auto net = std::make_shared<const Network>(arch);
  if (params.size() != net->param_count())
    throw ShapeError("architecture has " + std::to_string(net->param_count()) +
                     " parameters, vector has " + std::to_string(params.size()));
  if (!params.allFinite()) throw NumericError("parameter vector has non-finite entries");
  return ModelState{arch, std::move(params), seed, std::move(net)};
}

ModelState init_model(const ArchSpec& arch, std::uint64_t seed) {
  auto net = std::make_shared<const Network>(arch);
  Vector params(net->param_count());
  net->initialize(std::span<double>(params.data(), static_cast<std::size_t>(params.size())), seed);
  return ModelState{arch, std::move(params), seed, std::move(net)};
}

Vector forward(const ModelState& model, const Vector& x) {
  return model.net->forward(model.params, x);
}

Matrix forward_batch(const ModelState& model, const Matrix& inputs) {
  return model.net->forward(model.params, inputs);
}

namespace {

// One-hot (or all-ones) seed selecting the readout from a logit vector.
Vector readout_seed(Index classes, std::optional<int> label, const ReadoutRule& rule) {
  Vector seed = Vector::Zero(classes);
  switch (rule.mode) {
    case ReadoutRule::Mode::true_class_logit:
      if (!label) throw UsageError("true-class-logit readout needs a label");
      if (*label < 0 || *label >= classes)
        throw UsageError("label " + std::to_string(*label) + " outside [0, " + std::to_string(classes) + ")");
      seed[*label] = 1.0;
      break;
    case ReadoutRule::Mode::fixed_class_logit:
      if (rule.fixed_class < 0 || rule.fixed_class >= classes)
        throw UsageError("fixed readout class " + std::to_string(rule.fixed_class) + " out of range");
      seed[rule.fixed_class] = 1.0;
      break;
    case ReadoutRule::Mode::logit_sum:
      seed.setOnes();
      break;
  }
  return seed;
}

Matrix readout_seeds(Index classes, std::span<const int> labels, Index batch, const ReadoutRule& rule) {
  Matrix seeds(classes, batch);
  for (Index s = 0; s < batch; ++s) {
    std::optional<int> label;
    if (static_cast<std::size_t>(s) < labels.size()) label = labels[static_cast<std::size_t>(s)];
    seeds.col(s) = readout_seed(classes, label, rule);
  }
  return seeds;
}

// Target of the mse-on-readout loss when the batch carries none: the
// readout of a one-hot label vector.
double default_target(int label, const ReadoutRule& rule) {
  switch (rule.mode) {
    case ReadoutRule::Mode::true_class_logit: return 1.0;
    case ReadoutRule::Mode::fixed_class_logit: return label == rule.fixed_class ? 1.0 : 0.0;
    case ReadoutRule::Mode::logit_sum: return 1.0;
  }
  return 0.0;
}

}  // namespace

double readout(const Vector& logits, std::optional<int> label, const ReadoutRule& rule) {
  return readout_seed(logits.size(), label, rule).dot(logits);
}

double scalar_output(const ModelState& model, const Vector& x, std::optional<int> label,
                     const ReadoutRule& rule) {
  return readout(forward(model, x), label, rule);
}

Vector grad_params(const ModelState& model, const Vector& x, std::optional<int> label,
                   const ReadoutRule& rule) {
  const Vector seed = readout_seed(model.arch.classes, label, rule);
  Network::Tape tape;
  model.net->forward(model.params, x, &tape);
  Vector grad;
  model.net->backward(model.params, tape, seed, &grad, nullptr);
  return grad;
}

Matrix per_sample_grads(const ModelState& model, const Matrix& inputs, std::span<const int> labels,
                        const ReadoutRule& rule) {
  const Matrix seeds = readout_seeds(model.arch.classes, labels, inputs.cols(), rule);
  Network::Tape tape;
  model.net->forward(model.params, inputs, &tape);
  Matrix grads;
  model.net->backward(model.params, tape, seeds, nullptr, &grads);
  return grads;
}

LogitLoss logit_loss(const Matrix& logits, const Batch& batch, LossKind loss, const ReadoutRule& rule) {
  const Index n = logits.cols();
  if (n == 0) throw UsageError("loss over an empty batch");
  if (static_cast<Index>(batch.labels.size()) != n) throw ShapeError("label count does not match batch");
  LogitLoss out;
  out.grad_logits.resize(logits.rows(), n);
  const double inv_n = 1.0 / static_cast<double>(n);

  if (loss == LossKind::cross_entropy) {
    for (Index s = 0; s < n; ++s) {
      const int y = batch.labels[static_cast<std::size_t>(s)];
      if (y < 0 || y >= logits.rows()) throw UsageError("label out of range");
      const double m = logits.col(s).maxCoeff();
      const Eigen::ArrayXd e = (logits.col(s).array() - m).exp();
      const double z = e.sum();
      out.loss += (std::log(z) + m - logits(y, s)) * inv_n;
      out.grad_logits.col(s) = (e / z).matrix() * inv_n;
      out.grad_logits(y, s) -= inv_n;
    }
    return out;
  }

  if (!batch.targets.empty() && static_cast<Index>(batch.targets.size()) != n)
    throw ShapeError("target count does not match batch");
  for (Index s = 0; s < n; ++s) {
    const int y = batch.labels[static_cast<std::size_t>(s)];
    const Vector seed = readout_seed(logits.rows(), y, rule);
    const double r = seed.dot(logits.col(s));
    const double t = batch.targets.empty() ? default_target(y, rule)
                                           : batch.targets[static_cast<std::size_t>(s)];
    out.loss += 0.5 * (r - t) * (r - t) * inv_n;
    out.grad_logits.col(s) = seed * ((r - t) * inv_n);
  }
  return out;
}

LossGrad loss_and_grad(const ModelState& model, const Batch& batch, LossKind loss,
                       const ReadoutRule& rule) {
  if (batch.size() == 0) throw UsageError("loss_and_grad needs a nonempty batch");
  Network::Tape tape;
  const Matrix logits = model.net->forward(model.params, batch.inputs, &tape);
  LogitLoss ll = logit_loss(logits, batch, loss, rule);
  LossGrad out;
  out.loss = ll.loss;
  model.net->backward(model.params, tape, ll.grad_logits, &out.grad, nullptr);
  return out;
}

}  // namespace entk
