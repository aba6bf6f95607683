#include "layers.hpp"

#include <cmath>

namespace entk {

namespace {

using RowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void fill_uniform(std::span<double> w, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w) v = dist(rng);
}

}  // namespace

void Layer::initialize(std::span<double>, std::mt19937_64&) const {}
void Layer::accumulate_grad(const Matrix&, const Matrix&, ParamSpan&) const {}
void Layer::per_sample_grad(const Matrix&, const Matrix&, Eigen::Block<Matrix>) const {}

// Dense: params are W (out x in, row-major) followed by b (out).

void DenseLayer::initialize(std::span<double> params, std::mt19937_64& rng) const {
  fill_uniform(params.subspan(0, static_cast<std::size_t>(in_ * out_)),
               1.0 / std::sqrt(static_cast<double>(in_)), rng);
  if (bias_) {
    for (std::size_t i = static_cast<std::size_t>(in_ * out_); i < params.size(); ++i) params[i] = 0.0;
  }
}

Matrix DenseLayer::forward(const ParamView& params, const Matrix& in) const {
  ConstRowMap w(params.data(), out_, in_);
  Matrix out = w * in;
  if (bias_) out.colwise() += params.segment(in_ * out_, out_);
  return out;
}

Matrix DenseLayer::backward_input(const ParamView& params, const Matrix&, const Matrix&,
                                  const Matrix& grad_out) const {
  ConstRowMap w(params.data(), out_, in_);
  return w.transpose() * grad_out;
}

void DenseLayer::accumulate_grad(const Matrix& in, const Matrix& grad_out, ParamSpan& grad) const {
  RowMap gw(grad.data(), out_, in_);
  gw.noalias() += grad_out * in.transpose();
  if (bias_) grad.segment(in_ * out_, out_) += grad_out.rowwise().sum();
}

void DenseLayer::per_sample_grad(const Matrix& in, const Matrix& grad_out,
                                 Eigen::Block<Matrix> grads) const {
  for (Index s = 0; s < in.cols(); ++s) {
    double* col = grads.col(s).data();
    RowMap(col, out_, in_).noalias() = grad_out.col(s) * in.col(s).transpose();
    if (bias_) Eigen::Map<Vector>(col + in_ * out_, out_) = grad_out.col(s);
  }
}

Matrix DenseLayer::jvp(const ParamView& params, const ParamView& dparams, const Matrix& in,
                       const Matrix& din) const {
  ConstRowMap dw(dparams.data(), out_, in_);
  Matrix dout = dw * in;
  if (din.size() != 0) {
    ConstRowMap w(params.data(), out_, in_);
    dout.noalias() += w * din;
  }
  if (bias_) dout.colwise() += dparams.segment(in_ * out_, out_);
  return dout;
}

// Activation

Matrix ActivationLayer::forward(const ParamView&, const Matrix& in) const {
  if (kind_ == Activation::relu) return in.cwiseMax(0.0);
  return in.array().tanh().matrix();
}

Matrix ActivationLayer::derivative(const Matrix& in, const Matrix& out) const {
  if (kind_ == Activation::relu) {
    // relu'(0) is taken as 0.
    return (in.array() > 0.0).cast<double>().matrix();
  }
  return (1.0 - out.array().square()).matrix();
}

Matrix ActivationLayer::backward_input(const ParamView&, const Matrix& in, const Matrix& out,
                                       const Matrix& grad_out) const {
  return grad_out.cwiseProduct(derivative(in, out));
}

Matrix ActivationLayer::jvp(const ParamView& params, const ParamView&, const Matrix& in,
                            const Matrix& din) const {
  if (din.size() == 0) return {};
  return din.cwiseProduct(derivative(in, forward(params, in)));
}

// Convolution: params are W (out_ch x in_ch*k*k, row-major) followed by b.

ConvLayer::ConvLayer(Index in_channels, Index out_channels, Index kernel, Index height,
                     Index width)
    : in_ch_(in_channels),
      out_ch_(out_channels),
      kernel_(kernel),
      height_(height),
      width_(width),
      out_h_(height - kernel + 1),
      out_w_(width - kernel + 1),
      patch_(in_channels * kernel * kernel) {}

void ConvLayer::initialize(std::span<double> params, std::mt19937_64& rng) const {
  fill_uniform(params.subspan(0, static_cast<std::size_t>(out_ch_ * patch_)),
               1.0 / std::sqrt(static_cast<double>(patch_)), rng);
  for (std::size_t i = static_cast<std::size_t>(out_ch_ * patch_); i < params.size(); ++i) params[i] = 0.0;
}

Matrix ConvLayer::im2col(const double* sample) const {
  Matrix cols(patch_, out_h_ * out_w_);
  for (Index c = 0; c < in_ch_; ++c) {
    const double* plane = sample + c * height_ * width_;
    for (Index ky = 0; ky < kernel_; ++ky) {
      for (Index kx = 0; kx < kernel_; ++kx) {
        const Index row = (c * kernel_ + ky) * kernel_ + kx;
        for (Index oy = 0; oy < out_h_; ++oy) {
          const double* src = plane + (oy + ky) * width_ + kx;
          for (Index ox = 0; ox < out_w_; ++ox) cols(row, oy * out_w_ + ox) = src[ox];
        }
      }
    }
  }
  return cols;
}

void ConvLayer::col2im(const Matrix& cols, double* sample) const {
  for (Index c = 0; c < in_ch_; ++c) {
    double* plane = sample + c * height_ * width_;
    for (Index ky = 0; ky < kernel_; ++ky) {
      for (Index kx = 0; kx < kernel_; ++kx) {
        const Index row = (c * kernel_ + ky) * kernel_ + kx;
        for (Index oy = 0; oy < out_h_; ++oy) {
          double* dst = plane + (oy + ky) * width_ + kx;
          for (Index ox = 0; ox < out_w_; ++ox) dst[ox] += cols(row, oy * out_w_ + ox);
        }
      }
    }
  }
}

Matrix ConvLayer::forward(const ParamView& params, const Matrix& in) const {
  ConstRowMap w(params.data(), out_ch_, patch_);
  const auto b = params.segment(out_ch_ * patch_, out_ch_);
  Matrix out(out_size(), in.cols());
  for (Index s = 0; s < in.cols(); ++s) {
    RowMap z(out.col(s).data(), out_ch_, out_h_ * out_w_);
    z.noalias() = w * im2col(in.col(s).data());
    z.colwise() += b;
  }
  return out;
}

Matrix ConvLayer::backward_input(const ParamView& params, const Matrix& in, const Matrix&,
                                 const Matrix& grad_out) const {
  ConstRowMap w(params.data(), out_ch_, patch_);
  Matrix grad_in = Matrix::Zero(in_size(), in.cols());
  for (Index s = 0; s < in.cols(); ++s) {
    ConstRowMap dz(grad_out.col(s).data(), out_ch_, out_h_ * out_w_);
    col2im(w.transpose() * dz, grad_in.col(s).data());
  }
  return grad_in;
}

void ConvLayer::accumulate_grad(const Matrix& in, const Matrix& grad_out, ParamSpan& grad) const {
  RowMap gw(grad.data(), out_ch_, patch_);
  for (Index s = 0; s < in.cols(); ++s) {
    ConstRowMap dz(grad_out.col(s).data(), out_ch_, out_h_ * out_w_);
    gw.noalias() += dz * im2col(in.col(s).data()).transpose();
    grad.segment(out_ch_ * patch_, out_ch_) += dz.rowwise().sum();
  }
}

void ConvLayer::per_sample_grad(const Matrix& in, const Matrix& grad_out,
                                Eigen::Block<Matrix> grads) const {
  for (Index s = 0; s < in.cols(); ++s) {
    ConstRowMap dz(grad_out.col(s).data(), out_ch_, out_h_ * out_w_);
    double* col = grads.col(s).data();
    RowMap(col, out_ch_, patch_).noalias() = dz * im2col(in.col(s).data()).transpose();
    Eigen::Map<Vector>(col + out_ch_ * patch_, out_ch_) = dz.rowwise().sum();
  }
}

Matrix ConvLayer::jvp(const ParamView& params, const ParamView& dparams, const Matrix& in,
                      const Matrix& din) const {
  ConstRowMap w(params.data(), out_ch_, patch_);
  ConstRowMap dw(dparams.data(), out_ch_, patch_);
  const auto db = dparams.segment(out_ch_ * patch_, out_ch_);
  Matrix dout(out_size(), in.cols());
  for (Index s = 0; s < in.cols(); ++s) {
    RowMap dz(dout.col(s).data(), out_ch_, out_h_ * out_w_);
    dz.noalias() = dw * im2col(in.col(s).data());
    if (din.size() != 0) dz.noalias() += w * im2col(din.col(s).data());
    dz.colwise() += db;
  }
  return dout;
}

// Average pooling

AvgPoolLayer::AvgPoolLayer(Index channels, Index height, Index width)
    : ch_(channels), height_(height), width_(width) {}

Matrix AvgPoolLayer::forward(const ParamView&, const Matrix& in) const {
  const Index oh = height_ / 2, ow = width_ / 2;
  Matrix out(out_size(), in.cols());
  for (Index s = 0; s < in.cols(); ++s) {
    const double* src = in.col(s).data();
    double* dst = out.col(s).data();
    for (Index c = 0; c < ch_; ++c) {
      const double* plane = src + c * height_ * width_;
      for (Index y = 0; y < oh; ++y) {
        for (Index x = 0; x < ow; ++x) {
          const double* p = plane + 2 * y * width_ + 2 * x;
          dst[(c * oh + y) * ow + x] = 0.25 * (p[0] + p[1] + p[width_] + p[width_ + 1]);
        }
      }
    }
  }
  return out;
}

Matrix AvgPoolLayer::backward_input(const ParamView&, const Matrix& in, const Matrix&,
                                    const Matrix& grad_out) const {
  const Index oh = height_ / 2, ow = width_ / 2;
  Matrix grad_in = Matrix::Zero(in_size(), in.cols());
  for (Index s = 0; s < in.cols(); ++s) {
    const double* src = grad_out.col(s).data();
    double* dst = grad_in.col(s).data();
    for (Index c = 0; c < ch_; ++c) {
      double* plane = dst + c * height_ * width_;
      for (Index y = 0; y < oh; ++y) {
        for (Index x = 0; x < ow; ++x) {
          const double g = 0.25 * src[(c * oh + y) * ow + x];
          double* p = plane + 2 * y * width_ + 2 * x;
          p[0] += g;
          p[1] += g;
          p[width_] += g;
          p[width_ + 1] += g;
        }
      }
    }
  }
  return grad_in;
}

Matrix AvgPoolLayer::jvp(const ParamView& params, const ParamView&, const Matrix&,
                         const Matrix& din) const {
  if (din.size() == 0) return {};
  return forward(params, din);
}

}  // namespace entk
