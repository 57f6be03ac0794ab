#ifndef LATTE_SERVER_HPP
#define LATTE_SERVER_HPP

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "latte/core_math.hpp"

namespace latte {

// How two embeddings are compared for ranking and attention weights.
// `cosine` is the raw inner product (equals cosine similarity on unit-norm
// vectors, the benchmark setting). `neg_sq_l2` is -||a-b||^2 / 2, the right
// ranking for raw ball-space embeddings; on unit vectors it equals
// cosine - 1, so both kinds rank identically there.
enum class Similarity { cosine, neg_sq_l2 };

double similarity(Similarity kind, const Vec& a, const Vec& b);

struct RetrievedProto {
  int origin = -1;
  Vec proto;
  double sim = 0.0;
};

// Per class: at most k_e prototypes, similarity nonincreasing, never the
// caller's own.
struct RetrievalResponse {
  std::vector<std::vector<RetrievedProto>> per_class;
};

// c x n slot table of per-client class prototypes. Slot (y, i) is written
// only by client i and persists until that client overwrites it. Safe for
// concurrent use: uploads and retrievals serialize per class, so a
// retrieval always sees a consistent per-class snapshot.
class GlobalMemory {
 public:
  GlobalMemory(std::size_t num_classes, std::size_t num_clients,
               std::size_t dim, Similarity sim = Similarity::cosine);

  /// Overwrites slot (y, i) for every class with a present prototype;
  /// absent classes keep their previous slot value. Raises BadClient /
  /// DimMismatch.
  void upload(int client, const std::vector<std::optional<Vec>>& protos);

  /// Per class: the k_e highest-similarity prototypes among non-empty slots
  /// of other clients, the caller's own slot excluded. Similarity ties break
  /// toward the lower client index. Classes with no query get empty lists.
  RetrievalResponse retrieve(int client,
                             const std::vector<std::optional<Vec>>& queries,
                             std::size_t k_e) const;

  std::optional<Vec> slot(std::size_t y, int client) const;
  bool fully_populated() const;

  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_clients() const { return num_clients_; }
  std::size_t dim() const { return dim_; }
  Similarity similarity_kind() const { return sim_; }

 private:
  void check_client(int client) const;

  std::size_t num_classes_;
  std::size_t num_clients_;
  std::size_t dim_;
  Similarity sim_;
  // slots_[y][i]; empty vector = tombstone
  std::vector<std::vector<Vec>> slots_;
  mutable std::vector<std::unique_ptr<std::mutex>> class_locks_;
};

// --- wire encoding --------------------------------------------------------
//
// Length-prefixed record used to log and account the communication
// protocol, one record per transferred prototype:
//   u32 length | u8 opcode | u32 client | u32 class | u32 dim | dim x f32le
// `length` counts the bytes after the prefix (13 + 4*dim).

enum class WireOp : std::uint8_t { upload = 1, download = 2 };

struct WireRecord {
  WireOp op = WireOp::upload;
  std::uint32_t client = 0;
  std::uint32_t cls = 0;
  std::vector<float> payload;
};

std::vector<std::uint8_t> encode_wire_record(const WireRecord& rec);

/// Inverse of encode_wire_record; raises TruncatedFile / BadMagic on
/// malformed input. `offset` advances past the record.
WireRecord decode_wire_record(const std::vector<std::uint8_t>& buf,
                              std::size_t& offset);

// Running per-direction totals, counted record by record exactly as they
// would appear on the wire. Payload byte accounting multiplies the scalar
// count by a configurable bytes-per-scalar (2 models fp16 transport, 4 the
// raw f32le records).
struct CommStats {
  std::uint64_t rounds = 0;
  std::uint64_t upload_records = 0;
  std::uint64_t download_records = 0;
  std::uint64_t upload_scalars = 0;
  std::uint64_t download_scalars = 0;

  std::uint64_t upload_bytes(std::uint64_t bytes_per_scalar) const {
    return upload_scalars * bytes_per_scalar;
  }
  std::uint64_t download_bytes(std::uint64_t bytes_per_scalar) const {
    return download_scalars * bytes_per_scalar;
  }
  void add(const CommStats& other) {
    rounds += other.rounds;
    upload_records += other.upload_records;
    download_records += other.download_records;
    upload_scalars += other.upload_scalars;
    download_scalars += other.download_scalars;
  }
};

}  // namespace latte

#endif  // LATTE_SERVER_HPP
