#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "entk/nn.hpp"

namespace entk::testing {

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Vector random_vector(Index n, std::uint64_t seed, double scale = 1.0) {
  return random_matrix(n, 1, seed, scale).col(0);
}

/// Central finite-difference gradient of f at x.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, Vector x, double h = 1e-5) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double dn = f(x);
    x[i] = keep;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

inline double rel_err(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1e-300, std::max(a.norm(), b.norm()));
}

inline ModelState with_params(const ModelState& m, const Vector& p) {
  ModelState out = m;
  out.params = p;
  return out;
}

}  // namespace entk::testing
