#include "latte/adapt.hpp"

#include <algorithm>
#include <cmath>

namespace latte {

void LatteParams::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
      raise(ErrorCode::InvalidArgument,
            std::string(name) + " must be finite and >= 0");
    }
  };
  nonneg(alpha, "alpha");
  nonneg(beta, "beta");
  nonneg(gamma, "gamma");
  nonneg(scale, "scale");
  if (k_l < 1 || k_e < 1 || comm_period < 1) {
    raise(ErrorCode::InvalidArgument,
          "k_l, k_e and comm_period must be >= 1");
  }
}

LatteParams params_preset(std::string_view name) {
  LatteParams p;
  if (name == "vlcs-latte") {
    p.alpha = 0.3; p.beta = 6.0; p.gamma = 6.0; p.k_l = 15; p.k_e = 12;
  } else if (name == "terra-latte") {
    p.alpha = 1.5; p.beta = 35.0; p.gamma = 10.0; p.k_l = 2; p.k_e = 20;
  } else if (name == "cifar10c-latte") {
    p.alpha = 1.0; p.beta = 60.0; p.gamma = 1.5; p.k_l = 12; p.k_e = 9;
  } else if (name == "cifar100c-latte") {
    p.alpha = 0.7; p.beta = 60.0; p.gamma = 1.5; p.k_l = 8; p.k_e = 5;
  } else {
    raise(ErrorCode::InvalidArgument,
          "unknown preset '" + std::string(name) + "'");
  }
  return p;
}

std::vector<std::string> params_preset_names() {
  return {"vlcs-latte", "terra-latte", "cifar10c-latte", "cifar100c-latte"};
}

Logits memory_logits(const Vec& f, const MergedMemory& merged,
                     const Logits& z_pre, const LatteParams& params) {
  if (merged.size() != z_pre.size()) {
    raise(ErrorCode::DimMismatch, "merged memory / logit class count mismatch");
  }
  Logits out;
  out.kind = LogitKind::mem;
  out.values.resize(merged.size());

  std::vector<double> log_w;
  for (std::size_t y = 0; y < merged.size(); ++y) {
    const auto& entries = merged[y];
    if (entries.empty()) {
      // Cold class: score against the zero-shot direction so empty classes
      // stay on the same logit scale as populated ones.
      out.values[y] = z_pre.values[y];
      continue;
    }
    log_w.resize(entries.size());
    double max_lw = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      log_w[k] = params.beta * similarity(params.similarity, f,
                                          entries[k].embedding) -
                 params.gamma * entries[k].entropy;
      max_lw = std::max(max_lw, log_w[k]);
    }
    const std::size_t d = entries.front().embedding.size();
    Vec agg(d, 0.0);
    double wsum = 0.0;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const double w = std::exp(log_w[k] - max_lw);
      const Vec& m = entries[k].embedding;
      for (std::size_t i = 0; i < d; ++i) agg[i] += w * m[i];
      wsum += w;
    }
    for (double& x : agg) x /= wsum;
    if (l2_norm(agg) <= kNormEps) {
      raise(ErrorCode::ZeroVector,
            "class aggregate cancelled out (antipodal entries)");
    }
    const Vec class_embed = params.renormalize ? normalize(agg) : agg;
    out.values[y] = params.scale * dot(f, class_embed);
  }
  return out;
}

Policy policy_from_string(std::string_view name) {
  if (name == "latte") return Policy::latte;
  if (name == "zero_shot") return Policy::zero_shot;
  if (name == "local_only") return Policy::local_only;
  if (name == "global_shared") return Policy::global_shared;
  raise(ErrorCode::BadConfig, "unknown policy '" + std::string(name) + "'");
}

std::string_view policy_name(Policy policy) {
  switch (policy) {
    case Policy::latte: return "latte";
    case Policy::zero_shot: return "zero_shot";
    case Policy::local_only: return "local_only";
    case Policy::global_shared: return "global_shared";
  }
  return "unknown";
}

Client::Client(int id, std::shared_ptr<const Scorer> scorer,
               LatteParams params, Policy policy,
               std::shared_ptr<LocalMemory> shared_memory)
    : id_(id),
      scorer_(std::move(scorer)),
      params_(params),
      policy_(policy),
      external_(scorer_ ? scorer_->num_classes() : 0) {
  if (!scorer_) raise(ErrorCode::InvalidArgument, "client needs a scorer");
  params_.validate();
  if (policy_ == Policy::global_shared) {
    if (!shared_memory) {
      raise(ErrorCode::InvalidArgument,
            "global_shared policy needs the shared memory");
    }
    local_ = std::move(shared_memory);
  } else {
    local_ = std::make_shared<LocalMemory>(scorer_->num_classes(), params_.k_l);
  }
  if (local_->num_classes() != scorer_->num_classes()) {
    raise(ErrorCode::DimMismatch, "shared memory class count mismatch");
  }
}

MergedMemory Client::merged() const {
  return merge(*local_, external_, params_.k_l);
}

PredictionTrace Client::step(const Vec& f) {
  PredictionTrace trace;
  trace.z_pre = scorer_->score(f);
  trace.pseudo_initial = argmax(trace.z_pre.values);
  trace.entropy_initial = entropy(trace.z_pre);

  if (!uses_memory()) {
    trace.z_mem = Logits{trace.z_pre.values, LogitKind::mem};
    trace.z_post = Logits{trace.z_pre.values, LogitKind::post};
    trace.label_final = trace.pseudo_initial;
    trace.memory_action.action = UpdateAction::rejected;
    ++processed_;
    return trace;
  }

  // Memory update happens before prediction, so a sample can retrieve itself.
  trace.memory_action =
      local_->update(f, trace.pseudo_initial, trace.entropy_initial);

  const MergedMemory m = merged();
  trace.z_mem = memory_logits(f, m, trace.z_pre, params_);

  trace.z_post.kind = LogitKind::post;
  trace.z_post.values.resize(trace.z_pre.size());
  for (std::size_t y = 0; y < trace.z_pre.size(); ++y) {
    trace.z_post.values[y] =
        trace.z_pre.values[y] + params_.alpha * trace.z_mem.values[y];
  }
  trace.label_final = argmax(trace.z_post.values);
  ++processed_;
  return trace;
}

Logits Client::post_logits(const Vec& f) const {
  const Logits z_pre = scorer_->score(f);
  if (!uses_memory()) return Logits{z_pre.values, LogitKind::post};
  const MergedMemory m = merged();
  const Logits z_mem = memory_logits(f, m, z_pre, params_);
  Logits z_post;
  z_post.kind = LogitKind::post;
  z_post.values.resize(z_pre.size());
  for (std::size_t y = 0; y < z_pre.size(); ++y) {
    z_post.values[y] = z_pre.values[y] + params_.alpha * z_mem.values[y];
  }
  return z_post;
}

std::size_t Client::classify(const Vec& f) const {
  return argmax(post_logits(f).values);
}

void Client::communicate(GlobalMemory& server, CommStats* stats,
                         std::vector<CommEvent>* log) {
  if (policy_ != Policy::latte) return;

  const std::size_t c = scorer_->num_classes();
  std::vector<std::optional<Vec>> protos(c);
  for (std::size_t y = 0; y < c; ++y) {
    try {
      protos[y] =
          compute_prototype(local_->queue(y), params_.gamma, params_.renormalize);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroVector) throw;
      protos[y] = std::nullopt;  // cancelled prototype: skip this class
    }
  }

  CommStats round;
  round.rounds = 1;
  for (std::size_t y = 0; y < c; ++y) {
    if (!protos[y]) continue;
    ++round.upload_records;
    round.upload_scalars += protos[y]->size();
  }

  server.upload(id_, protos);
  const RetrievalResponse resp = server.retrieve(id_, protos, params_.k_e);

  external_ = ExternalMemory(c);
  std::uint64_t ext_seq = 0;
  for (std::size_t y = 0; y < c; ++y) {
    for (const RetrievedProto& r : resp.per_class[y]) {
      if (r.origin == id_) {
        raise(ErrorCode::BadClient, "server returned caller's own prototype");
      }
      MemoryEntry entry;
      entry.embedding = r.proto;
      // Prototypes are new vectors with no stored entropy; score them the
      // same way fresh embeddings are scored.
      entry.entropy = entropy(scorer_->score(r.proto));
      entry.seq = ext_seq++;
      entry.external = true;
      entry.origin = r.origin;
      ++round.download_records;
      round.download_scalars += entry.embedding.size();
      if (log) {
        log->push_back({id_, r.origin, y, r.sim});
      }
      external_.lists[y].push_back(std::move(entry));
    }
  }
  if (stats) stats->add(round);
}

}  // namespace latte
