#pragma once

// Empirical neural tangent kernel measurements: Gram matrices of per-sample
// readout gradients, the trace-cosine kernel distance and kernel velocity.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "entk/data.hpp"
#include "entk/nn.hpp"

namespace entk {

struct Checkpoint;
struct TrajectoryLog;

/// n_probe x n_probe eNTK, H[i][j] = <grad f(x_i), grad f(x_j)>.
struct GramMatrix {
  Matrix h;
  std::int64_t iteration = 0;
  ReadoutRule rule;

  Index size() const { return h.rows(); }
};

/// Gram of per-sample readout gradients over the probe. Gradients are formed
/// `chunk` probe rows at a time and combined by block products; the result is
/// symmetrized. Throws NumericError naming the probe index of the first
/// non-finite gradient.
GramMatrix entk_gram(const ModelState& model, const ProbeSet& probe, const ReadoutRule& rule,
                     Index chunk, std::int64_t iteration = 0);

/// Gram at a trajectory checkpoint. Checkpoints from a linearized leg use the
/// anchor's gradients, which is the exact tangent kernel of the linearized
/// model.
GramMatrix checkpoint_gram(const Checkpoint& checkpoint, const ProbeSet& probe,
                           const ReadoutRule& rule, Index chunk);

/// 1 - <A, B>_F / (|A|_F |B|_F). Throws ShapeError on mismatched sizes and
/// DegenerateKernelError when either matrix is zero.
double kernel_distance(const Matrix& a, const Matrix& b);
double kernel_distance(const GramMatrix& a, const GramMatrix& b);

/// S(theta(t), theta(t + dt)) / dt from the Grams cached in `traj`.
/// Throws LookupError naming the missing iteration.
double kernel_velocity(const TrajectoryLog& traj, std::int64_t t, std::int64_t dt);

/// Grams keyed by (checkpoint iteration, probe id, readout rule).
class GramCache {
 public:
  struct Key {
    std::int64_t iteration;
    std::uint64_t probe_id;
    std::string rule;
    auto operator<=>(const Key&) const = default;
  };

  std::shared_ptr<const GramMatrix> find(const Key& key) const;
  std::shared_ptr<const GramMatrix> insert(const Key& key, GramMatrix gram);

  /// Returns the cached Gram for the checkpoint or computes and stores it.
  std::shared_ptr<const GramMatrix> get(const Checkpoint& checkpoint, const ProbeSet& probe,
                                        const ReadoutRule& rule, Index chunk);

  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<Key, std::shared_ptr<const GramMatrix>> grams_;
};

}  // namespace entk
