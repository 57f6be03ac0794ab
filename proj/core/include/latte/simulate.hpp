#ifndef LATTE_SIMULATE_HPP
#define LATTE_SIMULATE_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "latte/adapt.hpp"
#include "latte/data.hpp"
#include "latte/theory.hpp"

#include "json.hpp"

namespace latte {

enum class RunMode { benchmark, theory };
enum class Interleaving { round_robin, sequential };

struct ExperimentConfig {
  RunMode mode = RunMode::theory;

  // exactly one data source
  std::optional<std::filesystem::path> dataset_manifest;  // benchmark
  std::optional<TheoryWorld> world;                       // theory

  std::size_t clients_per_domain = 10;  // benchmark
  std::size_t clients_id = 1;           // theory
  std::size_t clients_ood = 0;          // theory
  std::uint64_t samples_per_client = 0; // theory; 0 = benchmark shard size
  std::uint64_t eval_samples = 10000;   // theory held-out evaluation

  LatteParams params;
  Policy policy = Policy::latte;
  Interleaving interleaving = Interleaving::round_robin;
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  unsigned threads = 1;
  std::uint64_t bytes_per_scalar = 2;
  bool comm_enabled = true;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::filesystem::path& path);
};

struct ClientMetrics {
  int client = 0;
  std::uint32_t domain = 0;
  std::uint64_t processed = 0;
  std::uint64_t correct = 0;
  double accuracy() const {
    return processed ? static_cast<double>(correct) / processed : 0.0;
  }
};

struct CommReport {
  std::uint64_t rounds = 0;
  std::uint64_t upload_bytes = 0;
  std::uint64_t download_bytes = 0;
  double bytes_per_round = 0.0;
  // per-round upper bound observed violations are a bug; the max observed
  // round payload is kept for the accounting checks.
  std::uint64_t max_round_bytes = 0;
};

struct MetricsReport {
  RunMode mode = RunMode::theory;
  Policy policy = Policy::latte;
  Interleaving interleaving = Interleaving::round_robin;
  std::uint64_t seed = 0;
  std::uint64_t processed = 0;
  std::uint64_t correct = 0;
  double total_accuracy = 0.0;
  std::vector<ClientMetrics> per_client;
  std::vector<std::pair<std::uint32_t, ClientMetrics>> per_domain;
  std::optional<ErrorReport> eps_post;  // theory mode
  CommReport comm;

  nlohmann::json to_json() const;
};

// Streaming sinks for the optional CSV outputs.
struct TraceRow {
  int client = 0;
  std::uint64_t step = 0;
  std::size_t pseudo_initial = 0;
  std::size_t label_final = 0;
  std::uint32_t true_label = 0;
  double entropy_initial = 0.0;
  bool comm_round = false;
};

struct RunSinks {
  std::function<void(const TraceRow&)> trace;
  std::function<void(const CommEvent&)> retrieval;
};

/// Runs one experiment. Deterministic given the config; the sequential
/// interleaving is the reference schedule and round_robin results do not
/// depend on the thread count.
MetricsReport run(const ExperimentConfig& config,
                  const RunSinks* sinks = nullptr);

/// Runs config.repeats experiments with per-repeat derived seeds.
std::vector<MetricsReport> run_repeats(const ExperimentConfig& config,
                                       const RunSinks* sinks = nullptr);

/// Upper bounds on per-round payloads: upload c*d scalars, download
/// c*k_e*d scalars, both times bytes_per_scalar.
std::pair<std::uint64_t, std::uint64_t> comm_bytes(
    std::size_t num_classes, std::size_t dim, std::size_t k_e,
    std::uint64_t bytes_per_scalar);

std::string_view run_mode_name(RunMode mode);
std::string_view interleaving_name(Interleaving il);

}  // namespace latte

#endif  // LATTE_SIMULATE_HPP
