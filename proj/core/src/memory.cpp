#include "latte/memory.hpp"

#include <algorithm>
#include <cmath>

namespace latte {

LocalMemory::LocalMemory(std::size_t num_classes, std::size_t capacity)
    : capacity_(capacity), queues_(num_classes) {
  if (num_classes < 1) {
    raise(ErrorCode::InvalidArgument, "LocalMemory needs at least one class");
  }
  if (capacity < 1) {
    raise(ErrorCode::InvalidArgument, "LocalMemory capacity must be >= 1");
  }
}

UpdateReport LocalMemory::update(const Vec& f, std::size_t pseudo, double h) {
  if (pseudo >= queues_.size()) {
    raise(ErrorCode::BadClass, "pseudo-label " + std::to_string(pseudo) +
                                   " out of range [0, " +
                                   std::to_string(queues_.size()) + ")");
  }
  if (!std::isfinite(h) || h < 0.0) {
    raise(ErrorCode::InvalidArgument, "entropy must be finite and >= 0");
  }
  auto& q = queues_[pseudo];
  MemoryEntry entry{f, h, next_seq_++, false, -1};

  UpdateReport report;
  if (q.size() < capacity_) {
    q.push_back(std::move(entry));
    report.action = UpdateAction::inserted;
    return report;
  }

  // Worst slot: highest entropy, latest insertion among exact ties, so that
  // earlier arrivals survive.
  std::size_t worst = 0;
  for (std::size_t i = 1; i < q.size(); ++i) {
    if (q[i].entropy > q[worst].entropy ||
        (q[i].entropy == q[worst].entropy && q[i].seq > q[worst].seq)) {
      worst = i;
    }
  }
  if (h < q[worst].entropy) {
    report.action = UpdateAction::replaced;
    report.evicted = std::move(q[worst]);
    q[worst] = std::move(entry);
  } else {
    report.action = UpdateAction::rejected;
  }
  return report;
}

const std::vector<MemoryEntry>& LocalMemory::queue(std::size_t y) const {
  if (y >= queues_.size()) {
    raise(ErrorCode::BadClass, "class " + std::to_string(y) + " out of range");
  }
  return queues_[y];
}

bool LocalMemory::empty() const {
  return std::all_of(queues_.begin(), queues_.end(),
                     [](const auto& q) { return q.empty(); });
}

std::optional<Vec> compute_prototype(const std::vector<MemoryEntry>& queue,
                                     double gamma, bool renormalize) {
  if (queue.empty()) return std::nullopt;
  if (!std::isfinite(gamma) || gamma < 0.0) {
    raise(ErrorCode::InvalidArgument, "gamma must be finite and >= 0");
  }
  // Weights are exp(-gamma * H); shifting by the smallest exponent keeps them
  // in range and cannot change the (scale-invariant) result.
  double min_gh = gamma * queue.front().entropy;
  for (const auto& e : queue) min_gh = std::min(min_gh, gamma * e.entropy);

  const std::size_t d = queue.front().embedding.size();
  Vec sum(d, 0.0);
  double wsum = 0.0;
  for (const auto& e : queue) {
    if (e.embedding.size() != d) {
      raise(ErrorCode::DimMismatch, "inconsistent entry dimensions in queue");
    }
    const double w = std::exp(-(gamma * e.entropy - min_gh));
    for (std::size_t i = 0; i < d; ++i) sum[i] += w * e.embedding[i];
    wsum += w;
  }
  Vec mean(d);
  for (std::size_t i = 0; i < d; ++i) mean[i] = sum[i] / wsum;
  if (l2_norm(mean) <= kNormEps) {
    raise(ErrorCode::ZeroVector, "prototype cancelled out to zero");
  }
  return renormalize ? normalize(mean) : mean;
}

MergedMemory merge(const LocalMemory& local, const ExternalMemory& external,
                   std::size_t k_l) {
  if (external.num_classes() != 0 &&
      external.num_classes() != local.num_classes()) {
    raise(ErrorCode::DimMismatch, "external memory class count mismatch");
  }
  MergedMemory merged(local.num_classes());
  for (std::size_t y = 0; y < local.num_classes(); ++y) {
    auto& out = merged[y];
    out = local.queue(y);
    if (y < external.num_classes()) {
      const auto& ext = external.lists[y];
      out.insert(out.end(), ext.begin(), ext.end());
    }
    std::sort(out.begin(), out.end(),
              [](const MemoryEntry& a, const MemoryEntry& b) {
                if (a.entropy != b.entropy) return a.entropy < b.entropy;
                if (a.external != b.external) return !a.external;  // local first
                return a.seq < b.seq;
              });
    if (out.size() > k_l) out.resize(k_l);
  }
  return merged;
}

}  // namespace latte
