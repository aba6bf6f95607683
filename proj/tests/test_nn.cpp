#include <doctest.h>

#include <vector>

#include "entk/errors.hpp"
#include "entk/nn.hpp"
#include "helpers.hpp"

using namespace entk;
using namespace entk::testing;

namespace {

// Plain loops over the documented layout: W row-major (out x in) then b.
Vector mlp_forward_oracle(const std::vector<int>& sizes, const Vector& params, const Vector& x, Activation act) {
  Vector h = x;
  Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    Vector z(out);
    for (int o = 0; o < out; ++o) {
      double s = params[off + in * out + o];
      for (int i = 0; i < in; ++i) s += params[off + o * in + i] * h[i];
      z[o] = s;
    }
    off += in * out + out;
    if (l + 2 < sizes.size())
      for (int o = 0; o < out; ++o) z[o] = act == Activation::relu ? std::max(0.0, z[o]) : std::tanh(z[o]);
    h = z;
  }
  return h;
}

// Direct-loop LeNet trunk: conv 6@5x5, relu, 2x2 mean pool, conv 16@5x5,
// relu, 2x2 mean pool, then dense layers on the [channel][row][col] flattening.
Vector lenet_forward_oracle(int side, const std::vector<int>& head, const Vector& p, const Vector& x) {
  Index off = 0;
  auto conv = [&](const std::vector<Vector>& in, int s, int cout) {
    const int cin = static_cast<int>(in.size()), k = 5, o = s - k + 1;
    std::vector<Vector> out(cout, Vector::Zero(o * o));
    const Index wsize = static_cast<Index>(cout) * cin * k * k;
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < o; ++oy)
        for (int ox = 0; ox < o; ++ox) {
          double acc = p[off + wsize + co];
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx)
                acc += p[off + ((co * cin + ci) * k + ky) * k + kx] * in[ci][(oy + ky) * s + ox + kx];
          out[co][oy * o + ox] = std::max(0.0, acc);
        }
    off += wsize + cout;
    return out;
  };
  auto pool = [](const std::vector<Vector>& in, int s) {
    std::vector<Vector> out;
    const int o = s / 2;
    for (const Vector& c : in) {
      Vector r(o * o);
      for (int y = 0; y < o; ++y)
        for (int xx = 0; xx < o; ++xx)
          r[y * o + xx] = 0.25 * (c[2 * y * s + 2 * xx] + c[2 * y * s + 2 * xx + 1] + c[(2 * y + 1) * s + 2 * xx] +
                                  c[(2 * y + 1) * s + 2 * xx + 1]);
      out.push_back(r);
    }
    return out;
  };
  std::vector<Vector> a = conv({x}, side, 6);
  int s = side - 4;
  a = pool(a, s);
  s /= 2;
  a = conv(a, s, 16);
  s -= 4;
  a = pool(a, s);
  s /= 2;
  Vector flat(16 * s * s);
  for (int c = 0; c < 16; ++c) flat.segment(c * s * s, s * s) = a[c];
  std::vector<int> sizes{static_cast<int>(flat.size())};
  sizes.insert(sizes.end(), head.begin(), head.end());
  return mlp_forward_oracle(sizes, p.tail(p.size() - off), flat, Activation::relu);
}

}  // namespace

TEST_CASE("mlp forward matches a hand-written loop") {
  for (Activation act : {Activation::relu, Activation::tanh}) {
    const ModelState m = init_model(ArchSpec::mlp({5, 7, 4, 3}, act), 42);
    for (int s = 0; s < 4; ++s) {
      const Vector x = random_vector(5, 100 + s);
      CHECK((forward(m, x) - mlp_forward_oracle({5, 7, 4, 3}, m.params, x, act)).norm() < 1e-13);
    }
  }
}

TEST_CASE("lenet forward matches direct convolution loops") {
  const ModelState m = init_model(ArchSpec::lenet(16 * 16, {20, 10}), 5);
  for (int s = 0; s < 3; ++s) {
    const Vector x = random_vector(256, 7 + s).cwiseAbs();
    CHECK((forward(m, x) - lenet_forward_oracle(16, {20, 10}, m.params, x)).norm() < 1e-12);
  }
}

TEST_CASE("parameter counts") {
  CHECK(init_model(ArchSpec::mlp({4, 8, 3}), 0).param_count() == 4 * 8 + 8 + 8 * 3 + 3);
  CHECK(init_model(ArchSpec::linear(6, 3), 0).param_count() == 18);
  // 16x16 input: conv 156, conv 2416, dense 16->120->84->10.
  CHECK(init_model(ArchSpec::lenet(256, {120, 84, 10}), 0).param_count() == 156 + 2416 + 2040 + 10164 + 850);
}

TEST_CASE("initialization is deterministic in the seed") {
  const ArchSpec a = ArchSpec::mlp({3, 5, 2});
  CHECK(init_model(a, 9).params == init_model(a, 9).params);
  CHECK(init_model(a, 9).params != init_model(a, 10).params);
  const ModelState m = init_model(a, 1);
  // Biases start at zero, weights within +-1/sqrt(fan_in).
  CHECK(m.params.segment(15, 5).isZero());
  CHECK(m.params.head(15).cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
}

TEST_CASE("readout rules") {
  Vector logits(3);
  logits << 0.5, -1.0, 2.0;
  CHECK(readout(logits, 2, ReadoutRule::true_class()) == 2.0);
  CHECK(readout(logits, 2, ReadoutRule::fixed(1)) == -1.0);
  CHECK(readout(logits, std::nullopt, ReadoutRule::sum()) == doctest::Approx(1.5));
  CHECK_THROWS_AS(readout(logits, std::nullopt, ReadoutRule::true_class()), UsageError);
  CHECK_THROWS_AS(readout(logits, 3, ReadoutRule::true_class()), UsageError);
  CHECK_THROWS_AS(readout(logits, 0, ReadoutRule::fixed(5)), UsageError);
  for (const char* s : {"true-class-logit", "fixed-class-logit:2", "logit-sum"})
    CHECK(to_string(parse_readout(s)) == s);
  CHECK_THROWS_AS(parse_readout("max-logit"), ConfigError);
}

TEST_CASE("single-sample gradients match central differences") {
  struct Case {
    ArchSpec arch;
    ReadoutRule rule;
  };
  const std::vector<Case> cases = {
      {ArchSpec::mlp({4, 8, 3}, Activation::tanh), ReadoutRule::true_class()},
      {ArchSpec::mlp({4, 8, 3}, Activation::relu), ReadoutRule::fixed(1)},
      {ArchSpec::mlp({3, 6, 5, 2}, Activation::tanh), ReadoutRule::sum()},
      {ArchSpec::linear(5, 3), ReadoutRule::true_class()},
  };
  for (const Case& c : cases) {
    const ModelState m = init_model(c.arch, 3);
    for (int s = 0; s < 5; ++s) {
      const Vector x = random_vector(c.arch.input_dim, 50 + s);
      const int y = s % c.arch.classes;
      const Vector g = grad_params(m, x, y, c.rule);
      const Vector fd = fd_gradient([&](const Vector& p) { return scalar_output(with_params(m, p), x, y, c.rule); },
                                    m.params);
      CHECK(rel_err(g, fd) < 1e-7);
    }
  }
}

TEST_CASE("lenet gradient matches central differences on sampled coordinates") {
  const ModelState m = init_model(ArchSpec::lenet(16 * 16, {12, 10}, Activation::tanh), 8);
  const Vector x = random_vector(256, 3).cwiseAbs();
  const Vector g = grad_params(m, x, 4, ReadoutRule::true_class());
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<Index> pick(0, m.param_count() - 1);
  ModelState p = m;
  for (int k = 0; k < 60; ++k) {
    const Index i = pick(rng);
    const double keep = p.params[i];
    p.params[i] = keep + 1e-5;
    const double up = scalar_output(p, x, 4, ReadoutRule::true_class());
    p.params[i] = keep - 1e-5;
    const double dn = scalar_output(p, x, 4, ReadoutRule::true_class());
    p.params[i] = keep;
    CHECK(std::abs((up - dn) / 2e-5 - g[i]) < 1e-7 * std::max(1.0, std::abs(g[i])));
  }
}

TEST_CASE("per-sample gradient columns equal single-sample gradients") {
  const ModelState m = init_model(ArchSpec::mlp({3, 6, 4}), 2);
  const Matrix x = random_matrix(3, 5, 77);
  const std::vector<int> labels{0, 3, 1, 2, 3};
  const Matrix g = per_sample_grads(m, x, labels, ReadoutRule::true_class());
  REQUIRE(g.rows() == m.param_count());
  REQUIRE(g.cols() == 5);
  for (Index s = 0; s < 5; ++s)
    CHECK((g.col(s) - grad_params(m, x.col(s), labels[s], ReadoutRule::true_class())).norm() < 1e-14);
}

TEST_CASE("jvp equals the directional finite difference") {
  const ModelState m = init_model(ArchSpec::mlp({4, 9, 3}, Activation::tanh), 6);
  const Matrix x = random_matrix(4, 3, 8);
  const Vector dir = random_vector(m.param_count(), 9);
  const Matrix j = m.net->jvp(m.params, dir, x);
  const double h = 1e-6;
  const Matrix fd = (m.net->forward(m.params + h * dir, x) - m.net->forward(m.params - h * dir, x)) / (2 * h);
  CHECK((j - fd).norm() < 1e-7 * std::max(1.0, fd.norm()));
}

TEST_CASE("loss gradients match central differences") {
  const ModelState m = init_model(ArchSpec::mlp({3, 5, 4}, Activation::tanh), 12);
  Batch b{random_matrix(3, 6, 4), {0, 1, 2, 3, 1, 0}, {}};
  for (LossKind loss : {LossKind::cross_entropy, LossKind::mse_readout}) {
    const LossGrad lg = loss_and_grad(m, b, loss, ReadoutRule::true_class());
    const Vector fd = fd_gradient(
        [&](const Vector& p) { return loss_and_grad(with_params(m, p), b, loss, ReadoutRule::true_class()).loss; },
        m.params);
    CHECK(rel_err(lg.grad, fd) < 1e-7);
  }
}

TEST_CASE("cross-entropy on uniform logits is log(c)") {
  Batch b{Matrix::Zero(2, 2), {0, 3}, {}};
  const LogitLoss ll = logit_loss(Matrix::Zero(4, 2), b, LossKind::cross_entropy, {});
  CHECK(ll.loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("mse-on-readout uses explicit targets when present") {
  Matrix logits(2, 2);
  logits << 1.0, 0.0, 0.0, 3.0;
  Batch b{Matrix::Zero(1, 2), {0, 1}, {0.5, 1.0}};
  // 0.5 * mean((1 - 0.5)^2, (3 - 1)^2)
  CHECK(logit_loss(logits, b, LossKind::mse_readout, ReadoutRule::true_class()).loss == doctest::Approx(0.5 * (0.25 + 4.0) / 2));
}

TEST_CASE("architecture validation") {
  CHECK_THROWS_AS(ArchSpec::mlp({4}), ConfigError);
  CHECK_THROWS_AS(ArchSpec::mlp({4, 0, 3}), ConfigError);
  CHECK_THROWS_AS(ArchSpec::lenet(15 * 15, {10}), ConfigError);
  CHECK_THROWS_AS(ArchSpec::lenet(100, {10}), ConfigError);
  CHECK_NOTHROW(ArchSpec::lenet(28 * 28, {10}));
  CHECK(parse_arch_kind(to_string(ArchKind::lenet)) == ArchKind::lenet);
  CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
}

TEST_CASE("shape and numeric errors") {
  const ModelState m = init_model(ArchSpec::mlp({3, 4, 2}), 0);
  CHECK_THROWS_AS(forward(m, Vector::Zero(4)), ShapeError);
  CHECK_THROWS_AS(ModelState::from_params(m.arch, Vector::Zero(5)), ShapeError);
  Vector bad = m.params;
  bad[0] = std::nan("");
  CHECK_THROWS_AS(ModelState::from_params(m.arch, bad), NumericError);
  Vector x = Vector::Zero(3);
  x[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(forward(m, x), NumericError);
}
