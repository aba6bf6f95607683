#include <doctest.h>

#include <random>

#include <Eigen/SVD>

#include "entk/analysis.hpp"
#include "entk/errors.hpp"
#include "entk/lintrain.hpp"
#include "entk/ntk.hpp"
#include "helpers.hpp"

using namespace entk;
using namespace entk::testing;

namespace {

TrajectoryLog trajectory_of(const std::vector<Matrix>& grams, std::int64_t spacing) {
  TrajectoryLog traj;
  for (std::size_t i = 0; i < grams.size(); ++i) {
    Checkpoint c;
    c.iteration = static_cast<std::int64_t>(i) * spacing;
    c.gram = std::make_shared<const GramMatrix>(GramMatrix{grams[i], c.iteration, {}});
    traj.records.push_back(c);
  }
  return traj;
}

Matrix psd(std::uint64_t seed) {
  const Matrix g = random_matrix(4, 6, seed);
  return g * g.transpose();
}

std::vector<CurvePoint> series(const std::vector<double>& v, std::int64_t spacing = 1) {
  std::vector<CurvePoint> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back({static_cast<std::int64_t>(i) * spacing, v[i]});
  return out;
}

// Residual after the best orthogonal alignment of centered point sets.
double procrustes_residual(const Matrix& a, const Matrix& b) {
  const Matrix ac = a.rowwise() - a.colwise().mean();
  const Matrix bc = b.rowwise() - b.colwise().mean();
  Eigen::JacobiSVD<Matrix> svd(ac.transpose() * bc, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix r = svd.matrixU() * svd.matrixV().transpose();
  return (ac * r - bc).norm();
}

Matrix squared_distances(const Matrix& pts) {
  const Index m = pts.rows();
  Matrix d(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) d(i, j) = (pts.row(i) - pts.row(j)).squaredNorm();
  return d;
}

}  // namespace

TEST_CASE("reference curves") {
  const std::vector<Matrix> g{psd(1), psd(2), psd(3), psd(4)};
  const TrajectoryLog traj = trajectory_of(g, 10);
  const auto curves = distance_to_references(traj, {0, 20});
  REQUIRE(curves.size() == 2);
  CHECK(curves[1].param == 20);
  REQUIRE(curves[1].points.size() == 4);
  CHECK(curves[1].points[2].value == 0.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(curves[0].points[i].t == static_cast<std::int64_t>(10 * i));
    CHECK(curves[0].points[i].value == kernel_distance(g[i], g[0]));
  }
  CHECK_THROWS_AS(distance_to_references(traj, {15}), LookupError);
}

TEST_CASE("identical checkpoints give zero curves and a zero report") {
  const TrajectoryLog traj = trajectory_of(std::vector<Matrix>(9, psd(5)), 50);
  for (const auto& c : distance_to_references(traj, {0, 200}))
    for (const auto& p : c.points) CHECK(p.value == 0.0);
  for (const auto& c : adjacent_distances(traj, {50, 100}))
    for (const auto& p : c.points) CHECK(p.value == 0.0);
  const ConeReport r = cone_report(traj, {0}, {50}, 0.2, 3);
  CHECK(r.plateaus[0].level == 0.0);
  CHECK(r.plateaus[0].variation == 0.0);
  for (const auto& p : r.velocity) CHECK(p.value == 0.0);
}

TEST_CASE("adjacent curves equal an explicit pairing") {
  std::vector<Matrix> g;
  for (int i = 0; i < 7; ++i) g.push_back(psd(20 + i));
  const TrajectoryLog traj = trajectory_of(g, 50);
  const auto curves = adjacent_distances(traj, {100});
  REQUIRE(curves[0].points.size() == 5);
  for (std::size_t i = 0; i + 2 < g.size(); ++i) {
    CHECK(curves[0].points[i].t == static_cast<std::int64_t>(50 * i));
    CHECK(curves[0].points[i].value == kernel_distance(g[i], g[i + 2]));
  }
  CHECK_THROWS_AS(adjacent_distances(traj, {75}), UsageError);
  CHECK_THROWS_AS(adjacent_distances(traj, {0}), UsageError);
  const auto v = velocity_series(traj, 50);
  REQUIRE(v.size() == 6);
  CHECK(v[3].value == kernel_distance(g[3], g[4]) / 50.0);
}

TEST_CASE("phase transition rule") {
  CHECK(detect_phase_transition(series({1, 1, 0.01, 0.01, 0.01}), 0.1, 2) == 2);
  CHECK(!detect_phase_transition(series({2, 2, 2, 2}), 0.1, 1).has_value());
  CHECK(detect_phase_transition(series({0, 0, 0}), 0.2, 3) == 0);
  CHECK(!detect_phase_transition(series({1, 0.01, 1, 0.01}), 0.1, 2).has_value());
  CHECK(detect_phase_transition(series({1, 0.5, 0.05, 0.04}, 50), 0.1, 2) == 100);
  CHECK_THROWS_AS(detect_phase_transition({}, 0.2, 3), UsageError);
  CHECK_THROWS_AS(detect_phase_transition(series({1}), 1.0, 3), UsageError);
  CHECK_THROWS_AS(detect_phase_transition(series({1}), 0.2, 0), UsageError);
}

TEST_CASE("noisy step series: change point found within one window") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int change = 10 + trial;
    std::vector<double> v;
    for (int i = 0; i < 60; ++i)
      v.push_back(i < change ? 1.0 + 0.05 * noise(rng) : 0.05 + 0.01 * std::abs(noise(rng)));
    const auto t = detect_phase_transition(series(v, 50), 0.2, 3);
    REQUIRE(t.has_value());
    CHECK(std::abs(*t - 50 * change) <= 50 * 3);
  }
}

TEST_CASE("larger drop fraction never detects later") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v;
    double level = 1.0;
    for (int i = 0; i < 40; ++i) {
      level *= 0.9;
      v.push_back(level * (0.5 + u(rng)));
    }
    std::optional<std::int64_t> prev;
    for (double rho : {0.05, 0.1, 0.2, 0.4, 0.8}) {
      const auto t = detect_phase_transition(series(v), rho, 2);
      if (prev) {
        REQUIRE(t.has_value());
        CHECK(*t <= *prev);
      }
      if (t) prev = t;
    }
  }
}

TEST_CASE("mds recovers planar points up to rigid motion") {
  const Matrix pts = random_matrix(10, 2, 77, 2.0);
  const Embedding2D e = cone_embedding(squared_distances(pts));
  CHECK(e.coords.rows() == 10);
  CHECK(procrustes_residual(e.coords, pts) < 1e-8);
  CHECK(e.coords.row(0).norm() == 0.0);
  CHECK(e.method == "classical-mds");
}

TEST_CASE("mds of an all-zero matrix is the origin") {
  const Embedding2D e = cone_embedding(Matrix::Zero(6, 6));
  CHECK(e.coords.isZero());
  CHECK(e.stress == 0.0);
}

TEST_CASE("mds of three collinear points stays on a line") {
  Matrix d2(3, 3);
  d2 << 0, 1, 4, 1, 0, 1, 4, 1, 0;
  const Embedding2D e = cone_embedding(d2, {0, 50, 100});
  CHECK(std::abs(e.coords(1, 1)) < 1e-12);
  CHECK(std::abs(e.coords(2, 1)) < 1e-12);
  CHECK(std::abs(std::abs(e.coords(2, 0)) - 2.0) < 1e-12);
  CHECK(e.t == std::vector<std::int64_t>{0, 50, 100});
  CHECK(e.stress < 1e-12);
}

TEST_CASE("mds is invariant under relabeling") {
  const Matrix pts = random_matrix(8, 3, 5);
  const Matrix d2 = squared_distances(pts);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(8);
  perm.indices() << 3, 0, 7, 1, 6, 2, 5, 4;
  const Matrix permuted = perm * d2 * perm.transpose();
  const Embedding2D a = cone_embedding(d2), b = cone_embedding(permuted);
  CHECK(procrustes_residual(perm * a.coords, b.coords) < 1e-9);
}

TEST_CASE("mds input checks") {
  Matrix bad = Matrix::Zero(3, 3);
  bad(0, 1) = 1.0;
  CHECK_THROWS_AS(cone_embedding(bad), UsageError);
  Matrix diag = Matrix::Zero(3, 3);
  diag(2, 2) = 0.5;
  CHECK_THROWS_AS(cone_embedding(diag), UsageError);
  CHECK_THROWS_AS(cone_embedding(Matrix::Zero(3, 3), {0, 1}), UsageError);
}

TEST_CASE("final third") {
  CHECK(final_third_begin(61) == 40);
  CHECK(final_third_begin(3) == 2);
  CHECK(final_third_begin(4) == 2);
  CHECK(final_third_begin(1) == 0);
  CHECK(final_third_begin(0) == 0);
}

TEST_CASE("cone report on a linearized run: flat kernel, transition at the first window") {
  const Dataset d = synth_blobs(2, 10, 3, 2, 1.0);
  const ModelState m = init_model(ArchSpec::mlp({3, 8, 2}), 1);
  const ProbeSet probe = ProbeSet::whole(d);
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.iterations = 200;
  cfg.batch_size = 5;
  cfg.schedule.every = 10;
  const TrajectoryLog log = train_linearized(linearize(m), d, cfg, [&](Checkpoint& c) {
    c.gram = std::make_shared<const GramMatrix>(checkpoint_gram(c, probe, ReadoutRule::true_class(), 4));
  });
  const ConeReport r = cone_report(log, {0, 100}, {10, 20}, 0.2, 3);
  CHECK(r.velocity_dt == 10);
  REQUIRE(r.transition.has_value());
  CHECK(*r.transition == 0);
  for (const PlateauStats& p : r.plateaus) CHECK(p.level < 1e-8);
}

TEST_CASE("cone report plateau statistics") {
  // S to the first Gram grows then stays put: grams interpolate from A to B
  // and stop halfway.
  const Matrix a = psd(40), b = psd(41);
  std::vector<Matrix> g;
  for (int i = 0; i < 9; ++i) g.push_back(a + std::min(i, 4) * 0.25 * (b - a));
  const TrajectoryLog traj = trajectory_of(g, 10);
  const ConeReport r = cone_report(traj, {0}, {10}, 0.2, 2);
  const double s = kernel_distance(a, g[4]);
  CHECK(r.plateaus[0].level == doctest::Approx(s).epsilon(1e-14));
  CHECK(r.plateaus[0].variation == 0.0);
  REQUIRE(r.transition.has_value());
  CHECK(*r.transition == 40);
}
