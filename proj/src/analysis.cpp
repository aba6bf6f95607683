#include "entk/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "entk/errors.hpp"
#include "entk/ntk.hpp"

namespace entk {

namespace {

const GramMatrix& gram_of(const Checkpoint& c) {
  if (!c.gram) throw LookupError("no cached Gram at iteration " + std::to_string(c.iteration));
  return *c.gram;
}

}  // namespace

std::vector<DistanceCurve> distance_to_references(const TrajectoryLog& traj,
                                                  const std::vector<std::int64_t>& taus) {
  std::vector<DistanceCurve> curves;
  for (std::int64_t tau : taus) {
    const GramMatrix& ref = gram_of(traj.at(tau));
    DistanceCurve curve{DistanceCurve::Kind::reference, tau, {}};
    for (const Checkpoint& c : traj.records) curve.points.push_back({c.iteration, kernel_distance(gram_of(c), ref)});
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::vector<DistanceCurve> adjacent_distances(const TrajectoryLog& traj, const std::vector<std::int64_t>& dts) {
  const auto its = traj.iterations();
  std::int64_t spacing = 0;
  for (std::size_t i = 1; i < its.size(); ++i) spacing = std::gcd(spacing, its[i] - its[i - 1]);

  std::vector<DistanceCurve> curves;
  for (std::int64_t dt : dts) {
    if (dt <= 0 || (spacing > 0 && dt % spacing != 0))
      throw UsageError("dt " + std::to_string(dt) + " is not a positive multiple of the checkpoint spacing " +
                       std::to_string(spacing));
    DistanceCurve curve{DistanceCurve::Kind::adjacent, dt, {}};
    for (const Checkpoint& c : traj.records) {
      if (const Checkpoint* next = traj.find(c.iteration + dt))
        curve.points.push_back({c.iteration, kernel_distance(gram_of(c), gram_of(*next))});
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::vector<CurvePoint> velocity_series(const TrajectoryLog& traj, std::int64_t dt) {
  std::vector<CurvePoint> v;
  const std::vector<DistanceCurve> curves = adjacent_distances(traj, {dt});
  for (const CurvePoint& p : curves.front().points)
    v.push_back({p.t, p.value / static_cast<double>(dt)});
  return v;
}

std::optional<std::int64_t> detect_phase_transition(const std::vector<CurvePoint>& velocity, double rho,
                                                    int window) {
  if (velocity.empty()) throw UsageError("phase detection needs a nonempty velocity series");
  if (!(rho > 0.0 && rho < 1.0)) throw UsageError("drop fraction must lie in (0, 1)");
  if (window < 1) throw UsageError("window must be at least 1");

  double running_max = -std::numeric_limits<double>::infinity();
  int run = 0;
  for (std::size_t i = 0; i < velocity.size(); ++i) {
    running_max = std::max(running_max, velocity[i].value);
    if (velocity[i].value <= rho * running_max) {
      if (++run == window) return velocity[i + 1 - static_cast<std::size_t>(window)].t;
    } else {
      run = 0;
    }
  }
  return std::nullopt;
}

Matrix pairwise_distances(const TrajectoryLog& traj) {
  const Index m = static_cast<Index>(traj.records.size());
  Matrix s = Matrix::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < i; ++j) {
      const double d = kernel_distance(gram_of(traj.records[static_cast<std::size_t>(i)]),
                                       gram_of(traj.records[static_cast<std::size_t>(j)]));
      s(i, j) = d;
      s(j, i) = d;
    }
  }
  return s;
}

Embedding2D cone_embedding(const Matrix& dissimilarity, std::vector<std::int64_t> iterations) {
  const Index m = dissimilarity.rows();
  if (m == 0 || dissimilarity.cols() != m) throw UsageError("embedding needs a nonempty square matrix");
  const double scale = std::max(1.0, dissimilarity.cwiseAbs().maxCoeff());
  for (Index i = 0; i < m; ++i) {
    if (dissimilarity(i, i) != 0.0) throw UsageError("dissimilarity matrix must have a zero diagonal");
    for (Index j = 0; j < i; ++j)
      if (std::abs(dissimilarity(i, j) - dissimilarity(j, i)) > 1e-12 * scale)
        throw UsageError("dissimilarity matrix must be symmetric");
  }
  if (iterations.empty()) {
    iterations.resize(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) iterations[static_cast<std::size_t>(i)] = i;
  }
  if (static_cast<Index>(iterations.size()) != m) throw UsageError("iteration labels do not match matrix size");

  // B = -1/2 J D2 J, J = I - 11^T / m.
  const Matrix d2 = 0.5 * (dissimilarity + dissimilarity.transpose());
  const Matrix centering = Matrix::Identity(m, m) - Matrix::Constant(m, m, 1.0 / static_cast<double>(m));
  const Matrix b = -0.5 * centering * d2 * centering;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (b + b.transpose()));

  Embedding2D out;
  out.t = std::move(iterations);
  out.coords = Matrix::Zero(m, 2);
  for (int k = 0; k < 2 && k < m; ++k) {
    const Index idx = m - 1 - k;  // eigenvalues ascend
    const double lambda = std::max(0.0, eig.eigenvalues()[idx]);
    Vector v = eig.eigenvectors().col(idx);
    Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v[pivot] < 0.0) v = -v;
    out.coords.col(k) = v * std::sqrt(lambda);
  }
  const Eigen::RowVector2d origin = out.coords.row(0);
  out.coords.rowwise() -= origin;

  // Stress ||D - D_hat||_F / ||D||_F with D = sqrt(dissimilarity).
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) {
      const double d = std::sqrt(std::max(0.0, d2(i, j)));
      const double dh = (out.coords.row(i) - out.coords.row(j)).norm();
      num += (d - dh) * (d - dh);
      den += d * d;
    }
  }
  out.stress = den > 0.0 ? std::sqrt(num / den) : 0.0;
  return out;
}

std::size_t final_third_begin(std::size_t count) { return count - (count + 2) / 3; }

ConeReport cone_report(const TrajectoryLog& traj, const std::vector<std::int64_t>& taus,
                       const std::vector<std::int64_t>& dts, double rho, int window) {
  ConeReport report;
  if (!dts.empty()) {
    report.velocity_dt = *std::min_element(dts.begin(), dts.end());
    report.velocity = velocity_series(traj, report.velocity_dt);
    if (!report.velocity.empty()) report.transition = detect_phase_transition(report.velocity, rho, window);
  }
  for (const DistanceCurve& curve : distance_to_references(traj, taus)) {
    PlateauStats stats;
    stats.tau = curve.param;
    const std::size_t begin = final_third_begin(curve.points.size());
    if (begin < curve.points.size()) {
      double lo = curve.points[begin].value, hi = lo, sum = 0.0;
      for (std::size_t i = begin; i < curve.points.size(); ++i) {
        const double v = curve.points[i].value;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      stats.level = sum / static_cast<double>(curve.points.size() - begin);
      stats.variation = hi - lo;
    }
    report.plateaus.push_back(stats);
  }
  return report;
}

}  // namespace entk
