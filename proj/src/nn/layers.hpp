#pragma once

#include <random>
#include <span>

#include "entk/nn.hpp"

namespace entk {

using ParamView = Eigen::Map<const Vector>;
using ParamSpan = Eigen::Map<Vector>;

/// One stage of a Network. Parameters are passed as views into the
/// network's flat vector, already offset to this layer's slice.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Index param_count() const = 0;
  virtual Index in_size() const = 0;
  virtual Index out_size() const = 0;

  virtual void initialize(std::span<double> params, std::mt19937_64& rng) const;

  virtual Matrix forward(const ParamView& params, const Matrix& in) const = 0;

  /// Gradient with respect to the layer input.
  virtual Matrix backward_input(const ParamView& params, const Matrix& in, const Matrix& out,
                                const Matrix& grad_out) const = 0;

  /// Adds the batch-summed parameter gradient into `grad`.
  virtual void accumulate_grad(const Matrix& in, const Matrix& grad_out, ParamSpan& grad) const;

  /// Writes per-sample parameter gradients into the rows of `grads` that
  /// belong to this layer (one column per sample).
  virtual void per_sample_grad(const Matrix& in, const Matrix& grad_out,
                               Eigen::Block<Matrix> grads) const;

  /// Output tangent given parameter tangent `dparams` and input tangent `din`.
  /// `din` may be empty, meaning the input does not depend on the parameters.
  virtual Matrix jvp(const ParamView& params, const ParamView& dparams, const Matrix& in,
                     const Matrix& din) const = 0;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(Index in, Index out, bool bias) : in_(in), out_(out), bias_(bias) {}

  Index param_count() const override { return in_ * out_ + (bias_ ? out_ : 0); }
  Index in_size() const override { return in_; }
  Index out_size() const override { return out_; }

  void initialize(std::span<double> params, std::mt19937_64& rng) const override;
  Matrix forward(const ParamView& params, const Matrix& in) const override;
  Matrix backward_input(const ParamView& params, const Matrix& in, const Matrix& out,
                        const Matrix& grad_out) const override;
  void accumulate_grad(const Matrix& in, const Matrix& grad_out, ParamSpan& grad) const override;
  void per_sample_grad(const Matrix& in, const Matrix& grad_out,
                       Eigen::Block<Matrix> grads) const override;
  Matrix jvp(const ParamView& params, const ParamView& dparams, const Matrix& in,
             const Matrix& din) const override;

 private:
  Index in_;
  Index out_;
  bool bias_;
};

class ActivationLayer final : public Layer {
 public:
  ActivationLayer(Activation kind, Index size) : kind_(kind), size_(size) {}

  Index param_count() const override { return 0; }
  Index in_size() const override { return size_; }
  Index out_size() const override { return size_; }

  Matrix forward(const ParamView& params, const Matrix& in) const override;
  Matrix backward_input(const ParamView& params, const Matrix& in, const Matrix& out,
                        const Matrix& grad_out) const override;
  Matrix jvp(const ParamView& params, const ParamView& dparams, const Matrix& in,
             const Matrix& din) const override;

 private:
  Matrix derivative(const Matrix& in, const Matrix& out) const;

  Activation kind_;
  Index size_;
};

/// Valid 2-D convolution, stride 1. Feature layout is [channel][row][col].
class ConvLayer final : public Layer {
 public:
  ConvLayer(Index in_channels, Index out_channels, Index kernel, Index height, Index width);

  Index param_count() const override { return out_ch_ * patch_ + out_ch_; }
  Index in_size() const override { return in_ch_ * height_ * width_; }
  Index out_size() const override { return out_ch_ * out_h_ * out_w_; }
  Index out_height() const { return out_h_; }
  Index out_width() const { return out_w_; }

  void initialize(std::span<double> params, std::mt19937_64& rng) const override;
  Matrix forward(const ParamView& params, const Matrix& in) const override;
  Matrix backward_input(const ParamView& params, const Matrix& in, const Matrix& out,
                        const Matrix& grad_out) const override;
  void accumulate_grad(const Matrix& in, const Matrix& grad_out, ParamSpan& grad) const override;
  void per_sample_grad(const Matrix& in, const Matrix& grad_out,
                       Eigen::Block<Matrix> grads) const override;
  Matrix jvp(const ParamView& params, const ParamView& dparams, const Matrix& in,
             const Matrix& din) const override;

 private:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  // patch_ x (out_h_ * out_w_) patch matrix of one sample.
  Matrix im2col(const double* sample) const;
  void col2im(const Matrix& cols, double* sample) const;

  Index in_ch_, out_ch_, kernel_, height_, width_;
  Index out_h_, out_w_, patch_;
};

/// 2x2 average pooling, stride 2.
class AvgPoolLayer final : public Layer {
 public:
  AvgPoolLayer(Index channels, Index height, Index width);

  Index param_count() const override { return 0; }
  Index in_size() const override { return ch_ * height_ * width_; }
  Index out_size() const override { return ch_ * (height_ / 2) * (width_ / 2); }
  Index out_height() const { return height_ / 2; }
  Index out_width() const { return width_ / 2; }

  Matrix forward(const ParamView& params, const Matrix& in) const override;
  Matrix backward_input(const ParamView& params, const Matrix& in, const Matrix& out,
                        const Matrix& grad_out) const override;
  Matrix jvp(const ParamView& params, const ParamView& dparams, const Matrix& in,
             const Matrix& din) const override;

 private:
  Index ch_, height_, width_;
};

}  // namespace entk
