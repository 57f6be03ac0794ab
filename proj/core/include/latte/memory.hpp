#ifndef LATTE_MEMORY_HPP
#define LATTE_MEMORY_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "latte/core_math.hpp"

namespace latte {

struct MemoryEntry {
  Vec embedding;
  double entropy = 0.0;
  std::uint64_t seq = 0;   // insertion counter, tie-break key
  bool external = false;   // true for downloaded prototypes
  int origin = -1;         // uploading client id for external entries
};

enum class UpdateAction { inserted, replaced, rejected };

struct UpdateReport {
  UpdateAction action = UpdateAction::rejected;
  std::optional<MemoryEntry> evicted;
};

// Per-class bounded queues of a client's own test embeddings. A full queue
// evicts its highest-entropy entry (latest insertion among exact ties), so
// after any stream the queue holds the lowest-entropy embeddings seen,
// earlier arrivals winning ties.
class LocalMemory {
 public:
  LocalMemory(std::size_t num_classes, std::size_t capacity);

  /// Files (f, h) under the pseudo-class queue. Raises BadClass.
  UpdateReport update(const Vec& f, std::size_t pseudo, double h);

  const std::vector<MemoryEntry>& queue(std::size_t y) const;
  std::size_t num_classes() const { return queues_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_insertions() const { return next_seq_; }
  bool empty() const;

 private:
  std::size_t capacity_;
  std::vector<std::vector<MemoryEntry>> queues_;
  std::uint64_t next_seq_ = 0;
};

// Downloaded prototypes, one list per class, at most k_e each, never
// originating from the owning client.
struct ExternalMemory {
  std::vector<std::vector<MemoryEntry>> lists;

  explicit ExternalMemory(std::size_t num_classes = 0) : lists(num_classes) {}
  std::size_t num_classes() const { return lists.size(); }
  void clear_all() {
    for (auto& l : lists) l.clear();
  }
};

// Per-class selection of the k_l lowest-entropy members of local U external,
// sorted ascending by entropy.
using MergedMemory = std::vector<std::vector<MemoryEntry>>;

/// Entropy-weighted mean of a class queue: sum_k exp(-gamma*H_k) * l_k,
/// normalized when `renormalize` and returned as the plain weighted mean
/// otherwise. Empty queue -> nullopt. Raises ZeroVector on cancellation.
std::optional<Vec> compute_prototype(const std::vector<MemoryEntry>& queue,
                                     double gamma, bool renormalize = true);

/// Keeps the k_l lowest-entropy entries of local U external per class.
/// Ties prefer local entries, then lower seq.
MergedMemory merge(const LocalMemory& local, const ExternalMemory& external,
                   std::size_t k_l);

}  // namespace latte

#endif  // LATTE_MEMORY_HPP
