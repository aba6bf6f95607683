#include "entk/ntk.hpp"

#include <cmath>

#include "entk/errors.hpp"
#include "entk/train.hpp"

namespace entk {

GramMatrix entk_gram(const ModelState& model, const ProbeSet& probe, const ReadoutRule& rule,
                     Index chunk, std::int64_t iteration) {
  const Index n = probe.size();
  if (n == 0) throw UsageError("eNTK needs a nonempty probe set");
  if (chunk <= 0) throw UsageError("chunk size must be positive");

  // Per-sample gradients, one p x chunk block per slice of the probe.
  std::vector<Matrix> blocks;
  std::vector<Index> starts;
  for (Index start = 0; start < n; start += chunk) {
    const Index len = std::min(chunk, n - start);
    std::span<const int> labels(probe.labels.data() + start, static_cast<std::size_t>(len));
    Matrix g;
    try {
      g = per_sample_grads(model, probe.inputs.middleCols(start, len), labels, rule);
    } catch (const NumericError& e) {
      // Rescan the chunk one sample at a time to name the culprit.
      for (Index j = 0; j < len; ++j) {
        try {
          per_sample_grads(model, probe.inputs.col(start + j), labels.subspan(static_cast<std::size_t>(j), 1), rule);
        } catch (const NumericError&) {
          throw NumericError("non-finite gradient at probe index " + std::to_string(start + j) + ": " + e.what());
        }
      }
      throw;
    }
    for (Index j = 0; j < len; ++j) {
      if (!g.col(j).allFinite())
        throw NumericError("non-finite gradient at probe index " + std::to_string(start + j));
    }
    blocks.push_back(std::move(g));
    starts.push_back(start);
  }

  GramMatrix out;
  out.iteration = iteration;
  out.rule = rule;
  out.h.resize(n, n);
  for (std::size_t a = 0; a < blocks.size(); ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      const Matrix block = blocks[a].transpose() * blocks[b];
      out.h.block(starts[a], starts[b], block.rows(), block.cols()) = block;
      if (a != b) out.h.block(starts[b], starts[a], block.cols(), block.rows()) = block.transpose();
    }
  }
  const Matrix sym = 0.5 * (out.h + out.h.transpose());
  out.h = sym;
  return out;
}

GramMatrix checkpoint_gram(const Checkpoint& checkpoint, const ProbeSet& probe,
                           const ReadoutRule& rule, Index chunk) {
  const ModelState& source = checkpoint.linearized() ? *checkpoint.anchor : checkpoint.state;
  return entk_gram(source, probe, rule, chunk, checkpoint.iteration);
}

double kernel_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("kernel_distance on matrices of different shape");
  const double ab = a.cwiseProduct(b).sum();
  const double aa = a.cwiseProduct(a).sum();
  const double bb = b.cwiseProduct(b).sum();
  if (aa == 0.0 || bb == 0.0) throw DegenerateKernelError("kernel distance undefined for a zero kernel");
  // sqrt(x * x) == x exactly, so identical kernels give exactly 0.
  double norm = std::sqrt(aa * bb);
  if (!std::isfinite(norm) || norm == 0.0) norm = std::sqrt(aa) * std::sqrt(bb);
  return 1.0 - ab / norm;
}

double kernel_distance(const GramMatrix& a, const GramMatrix& b) { return kernel_distance(a.h, b.h); }

double kernel_velocity(const TrajectoryLog& traj, std::int64_t t, std::int64_t dt) {
  if (dt <= 0) throw UsageError("kernel velocity needs a positive dt");
  const Checkpoint& a = traj.at(t);
  const Checkpoint& b = traj.at(t + dt);
  if (!a.gram) throw LookupError("no cached Gram at iteration " + std::to_string(t));
  if (!b.gram) throw LookupError("no cached Gram at iteration " + std::to_string(t + dt));
  return kernel_distance(*a.gram, *b.gram) / static_cast<double>(dt);
}

std::shared_ptr<const GramMatrix> GramCache::find(const Key& key) const {
  std::lock_guard lock(mutex_);
  auto it = grams_.find(key);
  return it == grams_.end() ? nullptr : it->second;
}

std::shared_ptr<const GramMatrix> GramCache::insert(const Key& key, GramMatrix gram) {
  auto ptr = std::make_shared<const GramMatrix>(std::move(gram));
  std::lock_guard lock(mutex_);
  return grams_.try_emplace(key, std::move(ptr)).first->second;
}

std::shared_ptr<const GramMatrix> GramCache::get(const Checkpoint& checkpoint, const ProbeSet& probe,
                                                 const ReadoutRule& rule, Index chunk) {
  const Key key{checkpoint.iteration, probe.id(), to_string(rule)};
  if (auto hit = find(key)) return hit;
  return insert(key, checkpoint_gram(checkpoint, probe, rule, chunk));
}

std::size_t GramCache::size() const {
  std::lock_guard lock(mutex_);
  return grams_.size();
}

}  // namespace entk
