#pragma once

// Distance curves over a trajectory, phase-transition detection, cone
// statistics and a 2-D embedding of the kernel path.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "entk/nn.hpp"
#include "entk/train.hpp"

namespace entk {

struct CurvePoint {
  std::int64_t t = 0;
  double value = 0.0;
};

/// One distance curve. `param` is the reference iteration tau for reference
/// curves and the step dt for adjacent curves.
struct DistanceCurve {
  enum class Kind { reference, adjacent };
  Kind kind = Kind::reference;
  std::int64_t param = 0;
  std::vector<CurvePoint> points;
};

/// S(theta(t), theta(tau)) for every checkpoint t, one curve per tau.
std::vector<DistanceCurve> distance_to_references(const TrajectoryLog& traj,
                                                  const std::vector<std::int64_t>& taus);

/// S(theta(t), theta(t + dt)) wherever both checkpoints exist, one curve per
/// dt. Each dt must be a positive multiple of the checkpoint spacing.
std::vector<DistanceCurve> adjacent_distances(const TrajectoryLog& traj,
                                              const std::vector<std::int64_t>& dts);

/// Velocity series v(t) = S(t, t + dt) / dt.
std::vector<CurvePoint> velocity_series(const TrajectoryLog& traj, std::int64_t dt);

/// First t at which the velocity stays at or below rho times its running
/// maximum for `window` consecutive points. Empty when that never happens.
std::optional<std::int64_t> detect_phase_transition(const std::vector<CurvePoint>& velocity, double rho,
                                                    int window);

/// Pairwise kernel distances between all checkpoints of a trajectory.
Matrix pairwise_distances(const TrajectoryLog& traj);

struct Embedding2D {
  std::vector<std::int64_t> t;
  Matrix coords;  // m x 2
  double stress = 0.0;
  std::string method = "classical-mds";
};

/// Classical (Torgerson) MDS treating each entry of `dissimilarity` as a
/// squared distance. Eigenvalues are clamped at 0, point 0 is moved to the
/// origin and eigenvector signs are fixed so the output is deterministic.
/// Throws UsageError on a non-symmetric matrix or nonzero diagonal.
Embedding2D cone_embedding(const Matrix& dissimilarity, std::vector<std::int64_t> iterations = {});

struct PlateauStats {
  std::int64_t tau = 0;
  double level = 0.0;      // mean over the final third
  double variation = 0.0;  // max - min over the final third
};

struct ConeReport {
  std::optional<std::int64_t> transition;
  std::int64_t velocity_dt = 0;
  std::vector<PlateauStats> plateaus;
  std::vector<CurvePoint> velocity;
};

/// Indices of the final third of `count` items (the last ceil(count / 3)).
std::size_t final_third_begin(std::size_t count);

ConeReport cone_report(const TrajectoryLog& traj, const std::vector<std::int64_t>& taus,
                       const std::vector<std::int64_t>& dts, double rho, int window);

}  // namespace entk
