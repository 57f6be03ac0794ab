#ifndef LATTE_ADAPT_HPP
#define LATTE_ADAPT_HPP

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latte/core_math.hpp"
#include "latte/data.hpp"
#include "latte/memory.hpp"
#include "latte/server.hpp"

namespace latte {

// One record drives every stage of the pipeline.
struct LatteParams {
  double alpha = 1.0;   // memory-logit mixing weight
  double beta = 60.0;   // similarity sharpness
  double gamma = 1.5;   // entropy sharpness (shared by prototype & attention)
  std::size_t k_l = 12;
  std::size_t k_e = 9;
  std::uint64_t comm_period = 1;  // samples between communication rounds
  double scale = 100.0;           // memory-logit multiplier
  Similarity similarity = Similarity::cosine;
  // Unit-sphere pipelines renormalize aggregates; raw ball-space pipelines
  // keep plain weighted means instead.
  bool renormalize = true;

  void validate() const;
};

/// Hyperparameter presets by dataset name: "vlcs-latte", "terra-latte",
/// "cifar10c-latte", "cifar100c-latte". Raises InvalidArgument for unknown
/// names.
LatteParams params_preset(std::string_view name);
std::vector<std::string> params_preset_names();

// Anything that can score an embedding into pre-adaptation logits: the
// zero-shot text classifier in benchmark mode, the synthetic world's linear
// predictor in theory mode.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual Logits score(const Vec& f) const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual std::size_t dim() const = 0;
};

class ZeroShotScorer final : public Scorer {
 public:
  explicit ZeroShotScorer(TextClassifier clf) : clf_(std::move(clf)) {
    clf_.validate();
  }
  Logits score(const Vec& f) const override { return zero_shot_logits(f, clf_); }
  std::size_t num_classes() const override { return clf_.num_classes(); }
  std::size_t dim() const override { return clf_.dim(); }
  const TextClassifier& classifier() const { return clf_; }

 private:
  TextClassifier clf_;
};

class TheoryScorer final : public Scorer {
 public:
  explicit TheoryScorer(TheoryWorld world) : predictor_(std::move(world)) {}
  Logits score(const Vec& f) const override { return predictor_.score(f); }
  std::size_t num_classes() const override { return 2; }
  std::size_t dim() const override { return predictor_.world().dim(); }
  const TheoryPredictor& predictor() const { return predictor_; }

 private:
  TheoryPredictor predictor_;
};

struct PredictionTrace {
  Logits z_pre, z_mem, z_post;
  std::size_t pseudo_initial = 0;
  std::size_t label_final = 0;
  double entropy_initial = 0.0;
  UpdateReport memory_action;
};

/// Attention over the merged memory: per class, weights
/// exp(beta*sim(f,m)) * exp(-gamma*H(m)) aggregate the entries into a class
/// embedding whose similarity to f (times scale) is the memory logit.
/// Classes with empty memory fall back to the zero-shot logit, so the
/// all-empty case reduces exactly to z_pre.
Logits memory_logits(const Vec& f, const MergedMemory& merged,
                     const Logits& z_pre, const LatteParams& params);

enum class Policy { latte, zero_shot, local_only, global_shared };

Policy policy_from_string(std::string_view name);
std::string_view policy_name(Policy policy);

struct CommEvent {
  int downloader = 0;
  int uploader = 0;
  std::size_t cls = 0;
  double sim = 0.0;
};

// Per-client adaptation state. Owned by exactly one stream; `step` mutates,
// `classify` is read-only and usable for held-out evaluation.
class Client {
 public:
  Client(int id, std::shared_ptr<const Scorer> scorer, LatteParams params,
         Policy policy = Policy::latte,
         std::shared_ptr<LocalMemory> shared_memory = nullptr);

  /// Full per-sample pipeline: score, pseudo-label, memory update, merge,
  /// memory logits, z_post = z_pre + alpha * z_mem. No server interaction.
  PredictionTrace step(const Vec& f);

  /// Prediction without any state change.
  std::size_t classify(const Vec& f) const;
  Logits post_logits(const Vec& f) const;

  /// Uploads per-class prototypes of the local memory, retrieves the k_e
  /// most similar foreign prototypes per class and replaces the external
  /// memory wholesale. No-op for policies without communication.
  void communicate(GlobalMemory& server, CommStats* stats = nullptr,
                   std::vector<CommEvent>* log = nullptr);

  int id() const { return id_; }
  Policy policy() const { return policy_; }
  const LatteParams& params() const { return params_; }
  const Scorer& scorer() const { return *scorer_; }
  const LocalMemory& local() const { return *local_; }
  const ExternalMemory& external() const { return external_; }
  MergedMemory merged() const;
  std::uint64_t processed() const { return processed_; }

 private:
  bool uses_memory() const { return policy_ != Policy::zero_shot; }

  int id_;
  std::shared_ptr<const Scorer> scorer_;
  LatteParams params_;
  Policy policy_;
  std::shared_ptr<LocalMemory> local_;
  ExternalMemory external_;
  std::uint64_t processed_ = 0;
};

}  // namespace latte

#endif  // LATTE_ADAPT_HPP
