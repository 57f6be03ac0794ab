#ifndef LATTE_DATA_HPP
#define LATTE_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "latte/core_math.hpp"

#include "json.hpp"

namespace latte {

// --- synthetic world -------------------------------------------------------

struct OodPair {
  Vec mu0;
  Vec mu1;
};

// Binary ball-mixture world: class y is uniform in the unit ball centered at
// (2y-1) * mu, scored by the linear classifier z = w_pre^T f + b_pre with
// logistic scaling t_scale. Validity rules (checked by validate()):
//   assumption 3:  mu^T w_pre > 0  and  -mu^T w_pre - 1 < b_pre < mu^T w_pre + 1
//   assumption 4:  every OOD center is > 4 away from both +-mu
struct TheoryWorld {
  Vec mu;
  Vec w_pre;
  double b_pre = 0.0;
  double t_scale = 100.0;
  std::vector<OodPair> ood_centers;

  std::size_t dim() const { return mu.size(); }
  void validate() const;  // raises InvalidArgument naming the violated rule

  nlohmann::json to_json() const;
  static TheoryWorld from_json(const nlohmann::json& j);
};

/// Uniform sample from the class-y ball of the world (or of its
/// ood_index-th shifted copy): center + r * u with u uniform on the unit
/// sphere and r = U^{1/d}. Raw, not normalized.
Vec sample_theory(const TheoryWorld& world, int y,
                  std::optional<std::size_t> ood_index, std::mt19937_64& rng);

// Scores a raw embedding with the world's linear classifier as two-class
// logits (-t*z/2, +t*z/2); their softmax reproduces the logistic p_1 and
// their entropy the binary entropy of the prediction.
class TheoryPredictor {
 public:
  explicit TheoryPredictor(TheoryWorld world);

  double decision_value(const Vec& f) const;  // z = w^T f + b
  double p1(const Vec& f) const;
  Logits score(const Vec& f) const;
  std::size_t predict(const Vec& f) const { return decision_value(f) > 0.0; }
  double entropy_of(const Vec& f) const;
  const TheoryWorld& world() const { return world_; }

 private:
  TheoryWorld world_;
};

// --- on-disk embedding datasets ---------------------------------------------
//
// A dataset is a JSON manifest next to raw little-endian binary files:
//   manifest: { version:1, dim, num_samples, num_classes, class_names,
//               dtype:"f32le", files:{embeddings, labels, text_embeddings,
//               domains?}, crc32:{<file key>: <crc32>} }
//   embeddings / text_embeddings: row-major f32le
//   labels / domains: u32le, labels 1-based on disk
// CRC32 (IEEE polynomial) protects every binary file.

struct EmbeddingDataset {
  std::vector<Vec> embeddings;       // rows normalized on load
  std::vector<std::uint32_t> labels; // 0-based in memory
  std::vector<std::uint32_t> domains;  // empty = single domain
  std::vector<std::string> domain_names;
  TextClassifier classifier;

  std::size_t size() const { return embeddings.size(); }
  std::size_t dim() const { return classifier.dim(); }
  std::size_t num_classes() const { return classifier.num_classes(); }
  std::size_t num_domains() const;
  void validate() const;
};

/// Writes manifest.json plus binary files into `dir` (created if missing).
/// Embeddings are stored at f32 precision.
void save_dataset(const EmbeddingDataset& dataset,
                  const std::filesystem::path& dir,
                  bool normalize_rows = true);

/// Loads and fully validates a dataset; rows are re-normalized unless the
/// manifest sets normalized:false. Raises BadMagic, DimMismatch,
/// TruncatedFile, ChecksumMismatch, LabelOutOfRange, InvalidArgument.
EmbeddingDataset load_dataset(const std::filesystem::path& manifest_path);

// --- client sharding --------------------------------------------------------

struct ClientShard {
  int client = 0;
  std::uint32_t domain = 0;
  std::vector<std::size_t> indices;  // stream order into the dataset
  std::uint64_t seed = 0;
};

/// Splits every domain into m near-equal shards (sizes differ by at most 1)
/// of a seeded permutation; each shard's stream order is a further seeded
/// permutation. Raises EmptyDomain when a declared domain has no samples.
std::vector<ClientShard> partition(const EmbeddingDataset& dataset,
                                   std::size_t m, std::uint64_t seed);

// --- seeding ----------------------------------------------------------------

/// splitmix64 step; mixes a stream tag into a run seed so that per-client /
/// per-purpose RNG streams are independent.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

/// CRC32 (IEEE 802.3 polynomial) of a byte buffer.
std::uint32_t crc32_ieee(const void* data, std::size_t size);

}  // namespace latte

#endif  // LATTE_DATA_HPP
