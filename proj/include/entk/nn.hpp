#pragma once

// Small feed-forward engine: MLPs, a LeNet-style CNN and plain linear maps,
// with reverse-mode gradients (summed or per sample) and forward-mode
// Jacobian-vector products. All math is in double precision.
//
// Batches are column-major: every column of an input matrix is one sample.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace entk {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ArchKind { mlp, lenet, linear };
enum class Activation { relu, tanh };

std::string to_string(ArchKind kind);
std::string to_string(Activation act);
ArchKind parse_arch_kind(const std::string& s);
Activation parse_activation(const std::string& s);

/// Architecture descriptor.
///
/// `widths` lists the output width of every trainable layer after the input,
/// so `widths.back()` is the class count. For `mlp` the entries before the
/// last are hidden widths. For `lenet` they are the widths of the dense head
/// that follows the fixed conv(6,5x5)-pool-conv(16,5x5)-pool trunk; the input
/// must be a square single-channel image. `linear` is a bias-free map and
/// takes exactly one width.
struct ArchSpec {
  ArchKind kind = ArchKind::mlp;
  std::vector<int> widths;
  Activation activation = Activation::relu;
  int input_dim = 0;
  int classes = 0;

  /// Builds an MLP from full layer sizes, e.g. {784, 256, 10}.
  static ArchSpec mlp(const std::vector<int>& sizes, Activation act = Activation::relu);
  static ArchSpec linear(int input_dim, int classes);
  static ArchSpec lenet(int input_dim, const std::vector<int>& head_widths,
                        Activation act = Activation::relu);

  /// Throws ConfigError on an invalid width sequence.
  void validate() const;

  bool operator==(const ArchSpec&) const = default;
};

/// How a c-logit network is reduced to the scalar output used for the eNTK.
struct ReadoutRule {
  enum class Mode { true_class_logit, fixed_class_logit, logit_sum };
  Mode mode = Mode::true_class_logit;
  int fixed_class = 0;

  static ReadoutRule true_class() { return {}; }
  static ReadoutRule fixed(int k) { return {Mode::fixed_class_logit, k}; }
  static ReadoutRule sum() { return {Mode::logit_sum, 0}; }

  bool operator==(const ReadoutRule&) const = default;
};

std::string to_string(const ReadoutRule& rule);
ReadoutRule parse_readout(const std::string& s);

class Layer;

/// Immutable layer graph built from an ArchSpec. Parameters live outside,
/// in a flat vector whose layout the network defines.
class Network {
 public:
  explicit Network(const ArchSpec& arch);
  ~Network();
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const ArchSpec& arch() const { return arch_; }
  Index param_count() const { return param_count_; }
  Index input_dim() const { return arch_.input_dim; }
  Index output_dim() const { return arch_.classes; }
  std::size_t layer_count() const { return layers_.size(); }

  /// Activations recorded by forward(); acts[0] is the input batch.
  struct Tape {
    std::vector<Matrix> acts;
  };

  void initialize(std::span<double> params, std::uint64_t seed) const;

  /// Logits for a batch (classes x batch). Fills `tape` when given.
  Matrix forward(const Vector& params, const Matrix& inputs, Tape* tape = nullptr) const;

  /// Backpropagates `grad_logits` (classes x batch) through a recorded tape.
  /// `summed` receives the batch-summed parameter gradient; `per_sample`
  /// (param_count x batch) receives one gradient column per sample. Either
  /// may be null.
  void backward(const Vector& params, const Tape& tape, const Matrix& grad_logits,
                Vector* summed, Matrix* per_sample) const;

  /// Directional derivative of the logits along `tangent` in parameter space.
  Matrix jvp(const Vector& params, const Vector& tangent, const Matrix& inputs) const;
  /// Same, reusing activations recorded by forward() at `params`.
  Matrix jvp(const Vector& params, const Vector& tangent, const Tape& tape) const;

 private:
  ArchSpec arch_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Index> offsets_;
  Index param_count_ = 0;
};

/// Architecture plus flat parameter vector at one training instant.
struct ModelState {
  ArchSpec arch;
  Vector params;
  std::uint64_t seed = 0;
  std::shared_ptr<const Network> net;

  Index param_count() const { return net->param_count(); }

  /// Wraps existing parameters; throws ShapeError on a length mismatch and
  /// NumericError on non-finite entries.
  static ModelState from_params(const ArchSpec& arch, Vector params, std::uint64_t seed = 0);
};

enum class LossKind { cross_entropy, mse_readout };
std::string to_string(LossKind loss);
LossKind parse_loss(const std::string& s);

/// Gathered examples. `targets`, when non-empty, holds one regression target
/// per sample for the mse-on-readout loss.
struct Batch {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<double> targets;

  Index size() const { return inputs.cols(); }
};

/// Deterministic fan-in scaled uniform weights, zero biases.
ModelState init_model(const ArchSpec& arch, std::uint64_t seed);

Vector forward(const ModelState& model, const Vector& x);
Matrix forward_batch(const ModelState& model, const Matrix& inputs);

/// Selects the scalar readout of one logit vector.
double readout(const Vector& logits, std::optional<int> label, const ReadoutRule& rule);
double scalar_output(const ModelState& model, const Vector& x, std::optional<int> label,
                     const ReadoutRule& rule);

/// Gradient of scalar_output with respect to the parameters.
Vector grad_params(const ModelState& model, const Vector& x, std::optional<int> label,
                   const ReadoutRule& rule);

/// Per-sample readout gradients for a batch, one column per sample.
Matrix per_sample_grads(const ModelState& model, const Matrix& inputs,
                        std::span<const int> labels, const ReadoutRule& rule);

/// Loss value and d(loss)/d(logits) for a block of logits.
struct LogitLoss {
  double loss = 0.0;
  Matrix grad_logits;
};
LogitLoss logit_loss(const Matrix& logits, const Batch& batch, LossKind loss,
                     const ReadoutRule& rule);

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

/// Mean loss over the batch and its parameter gradient. The readout rule is
/// only consulted by the mse-on-readout loss.
LossGrad loss_and_grad(const ModelState& model, const Batch& batch, LossKind loss,
                       const ReadoutRule& rule = {});

}  // namespace entk
