#include "latte/simulate.hpp"

#include <algorithm>
#include <fstream>
#include <thread>

namespace latte {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  const bool has_dataset = dataset_manifest.has_value();
  const bool has_world = world.has_value();
  if (mode == RunMode::benchmark) {
    if (!has_dataset || has_world) {
      raise(ErrorCode::BadConfig,
            "benchmark mode needs dataset_manifest and no world");
    }
    if (clients_per_domain < 1) {
      raise(ErrorCode::BadConfig, "clients_per_domain must be >= 1");
    }
  } else {
    if (!has_world || has_dataset) {
      raise(ErrorCode::BadConfig, "theory mode needs world and no dataset");
    }
    world->validate();
    if (clients_id < 1) raise(ErrorCode::BadConfig, "clients_id must be >= 1");
    if (clients_ood > 0 && world->ood_centers.empty()) {
      raise(ErrorCode::BadConfig,
            "clients_ood > 0 needs ood_centers in the world spec");
    }
    if (samples_per_client < 1) {
      raise(ErrorCode::BadConfig, "samples_per_client must be >= 1");
    }
    if (eval_samples < 100) {
      raise(ErrorCode::BadConfig, "eval_samples must be >= 100");
    }
  }
  params.validate();
  if (repeats < 1) raise(ErrorCode::BadConfig, "repeats must be >= 1");
  if (threads < 1) raise(ErrorCode::BadConfig, "threads must be >= 1");
  if (bytes_per_scalar != 2 && bytes_per_scalar != 4) {
    raise(ErrorCode::BadConfig, "bytes_per_scalar must be 2 or 4");
  }
}

json ExperimentConfig::to_json() const {
  json p = {{"alpha", params.alpha},
            {"beta", params.beta},
            {"gamma", params.gamma},
            {"k_l", params.k_l},
            {"k_e", params.k_e},
            {"comm_period", params.comm_period},
            {"scale", params.scale},
            {"similarity", params.similarity == Similarity::cosine
                               ? "cosine"
                               : "neg_sq_l2"},
            {"renormalize", params.renormalize}};
  json j = {{"mode", std::string(run_mode_name(mode))},
            {"params", p},
            {"policy", std::string(policy_name(policy))},
            {"interleaving", std::string(interleaving_name(interleaving))},
            {"seed", seed},
            {"repeats", repeats},
            {"threads", threads},
            {"bytes_per_scalar", bytes_per_scalar},
            {"comm_enabled", comm_enabled}};
  if (dataset_manifest) {
    j["dataset_manifest"] = dataset_manifest->string();
    j["clients_per_domain"] = clients_per_domain;
  }
  if (world) {
    j["world"] = world->to_json();
    j["clients_id"] = clients_id;
    j["clients_ood"] = clients_ood;
    j["samples_per_client"] = samples_per_client;
    j["eval_samples"] = eval_samples;
  }
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    const std::string mode = j.value("mode", "theory");
    if (mode == "benchmark") {
      cfg.mode = RunMode::benchmark;
    } else if (mode == "theory") {
      cfg.mode = RunMode::theory;
    } else {
      raise(ErrorCode::BadConfig, "unknown mode '" + mode + "'");
    }
    if (j.contains("dataset_manifest")) {
      cfg.dataset_manifest = fs::path(j["dataset_manifest"].get<std::string>());
    }
    if (j.contains("world")) {
      cfg.world = TheoryWorld::from_json(j["world"]);
    }
    cfg.clients_per_domain = j.value("clients_per_domain", std::size_t{10});
    cfg.clients_id = j.value("clients_id", std::size_t{1});
    cfg.clients_ood = j.value("clients_ood", std::size_t{0});
    cfg.samples_per_client = j.value("samples_per_client", std::uint64_t{0});
    cfg.eval_samples = j.value("eval_samples", std::uint64_t{10000});

    if (j.contains("params_preset")) {
      cfg.params = params_preset(j["params_preset"].get<std::string>());
    }
    // Theory pipelines run on raw ball-space embeddings, where rankings and
    // aggregates must follow L2 geometry rather than inner products.
    if (cfg.mode == RunMode::theory) {
      cfg.params.similarity = Similarity::neg_sq_l2;
      cfg.params.renormalize = false;
    }
    if (j.contains("params")) {
      const json& p = j["params"];
      cfg.params.alpha = p.value("alpha", cfg.params.alpha);
      cfg.params.beta = p.value("beta", cfg.params.beta);
      cfg.params.gamma = p.value("gamma", cfg.params.gamma);
      cfg.params.k_l = p.value("k_l", cfg.params.k_l);
      cfg.params.k_e = p.value("k_e", cfg.params.k_e);
      cfg.params.comm_period = p.value("comm_period", cfg.params.comm_period);
      cfg.params.scale = p.value("scale", cfg.params.scale);
      if (p.contains("similarity")) {
        const std::string s = p["similarity"].get<std::string>();
        if (s == "cosine") {
          cfg.params.similarity = Similarity::cosine;
        } else if (s == "neg_sq_l2") {
          cfg.params.similarity = Similarity::neg_sq_l2;
        } else {
          raise(ErrorCode::BadConfig, "unknown similarity '" + s + "'");
        }
      }
      cfg.params.renormalize = p.value("renormalize", cfg.params.renormalize);
    }
    if (j.contains("policy")) {
      cfg.policy = policy_from_string(j["policy"].get<std::string>());
    }
    if (j.contains("interleaving")) {
      const std::string il = j["interleaving"].get<std::string>();
      if (il == "round_robin") {
        cfg.interleaving = Interleaving::round_robin;
      } else if (il == "sequential") {
        cfg.interleaving = Interleaving::sequential;
      } else {
        raise(ErrorCode::BadConfig, "unknown interleaving '" + il + "'");
      }
    }
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.repeats = j.value("repeats", std::size_t{1});
    cfg.threads = j.value("threads", 1u);
    cfg.bytes_per_scalar = j.value("bytes_per_scalar", std::uint64_t{2});
    cfg.comm_enabled = j.value("comm_enabled", true);
  } catch (const json::exception& e) {
    raise(ErrorCode::BadConfig, std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoError, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorCode::BadConfig,
          "config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

json MetricsReport::to_json() const {
  json j;
  j["mode"] = std::string(run_mode_name(mode));
  j["policy"] = std::string(policy_name(policy));
  j["interleaving"] = std::string(interleaving_name(interleaving));
  j["seed"] = seed;
  j["processed"] = processed;
  j["correct"] = correct;
  j["total_accuracy"] = total_accuracy;
  j["per_client"] = json::array();
  for (const auto& c : per_client) {
    j["per_client"].push_back({{"client", c.client},
                               {"domain", c.domain},
                               {"processed", c.processed},
                               {"correct", c.correct},
                               {"accuracy", c.accuracy()}});
  }
  j["per_domain"] = json::array();
  for (const auto& [dom, m] : per_domain) {
    j["per_domain"].push_back({{"domain", dom},
                               {"processed", m.processed},
                               {"correct", m.correct},
                               {"accuracy", m.accuracy()}});
  }
  if (eps_post) {
    j["eps_post"] = {{"estimate", eps_post->estimate},
                     {"half_width", eps_post->half_width},
                     {"n", eps_post->n}};
  }
  j["comm"] = {{"rounds", comm.rounds},
               {"upload_bytes", comm.upload_bytes},
               {"download_bytes", comm.download_bytes},
               {"bytes_per_round", comm.bytes_per_round},
               {"max_round_bytes", comm.max_round_bytes}};
  return j;
}

std::pair<std::uint64_t, std::uint64_t> comm_bytes(
    std::size_t num_classes, std::size_t dim, std::size_t k_e,
    std::uint64_t bytes_per_scalar) {
  if (num_classes < 1 || dim < 1 || bytes_per_scalar < 1) {
    raise(ErrorCode::InvalidArgument, "comm_bytes arguments must be positive");
  }
  const std::uint64_t upload =
      static_cast<std::uint64_t>(num_classes) * dim * bytes_per_scalar;
  const std::uint64_t download = static_cast<std::uint64_t>(num_classes) *
                                 k_e * dim * bytes_per_scalar;
  return {upload, download};
}

std::string_view run_mode_name(RunMode mode) {
  return mode == RunMode::benchmark ? "benchmark" : "theory";
}

std::string_view interleaving_name(Interleaving il) {
  return il == Interleaving::round_robin ? "round_robin" : "sequential";
}

// --- the runner --------------------------------------------------------------

namespace {

struct Sample {
  Vec f;
  std::uint32_t label = 0;
};

struct ClientStream {
  std::uint32_t domain = 0;
  bool is_id = true;  // draws the reference distribution (theory mode)
  std::optional<std::size_t> ood_index;
  std::vector<Sample> samples;
};

constexpr std::uint64_t kStreamTag = 0xA11CE000ULL;
constexpr std::uint64_t kEvalTag = 0xE7A1000ULL;

std::vector<ClientStream> build_theory_streams(const ExperimentConfig& cfg) {
  const std::size_t n = cfg.clients_id + cfg.clients_ood;
  std::vector<ClientStream> streams(n);
  for (std::size_t i = 0; i < n; ++i) {
    ClientStream& s = streams[i];
    s.is_id = i < cfg.clients_id;
    if (!s.is_id) {
      s.ood_index = (i - cfg.clients_id) % cfg.world->ood_centers.size();
      s.domain = static_cast<std::uint32_t>(*s.ood_index) + 1;
    }
    std::mt19937_64 rng(mix_seed(cfg.seed, kStreamTag + i));
    std::bernoulli_distribution label(0.5);
    s.samples.reserve(cfg.samples_per_client);
    for (std::uint64_t k = 0; k < cfg.samples_per_client; ++k) {
      const int y = label(rng) ? 1 : 0;
      s.samples.push_back(
          {sample_theory(*cfg.world, y, s.ood_index, rng),
           static_cast<std::uint32_t>(y)});
    }
  }
  return streams;
}

std::vector<ClientStream> build_benchmark_streams(
    const ExperimentConfig& cfg, const EmbeddingDataset& dataset) {
  const auto shards = partition(dataset, cfg.clients_per_domain, cfg.seed);
  std::vector<ClientStream> streams(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    streams[i].domain = shards[i].domain;
    streams[i].samples.reserve(shards[i].indices.size());
    for (std::size_t idx : shards[i].indices) {
      streams[i].samples.push_back(
          {dataset.embeddings[idx], dataset.labels[idx]});
    }
  }
  return streams;
}

void for_each_parallel(std::size_t count, unsigned threads,
                       const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const unsigned workers = std::min<unsigned>(threads, count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < count; i += workers) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

MetricsReport run(const ExperimentConfig& cfg, const RunSinks* sinks) {
  cfg.validate();

  // data + scorer
  std::shared_ptr<const Scorer> scorer;
  std::vector<ClientStream> streams;
  if (cfg.mode == RunMode::benchmark) {
    EmbeddingDataset dataset = load_dataset(*cfg.dataset_manifest);
    streams = build_benchmark_streams(cfg, dataset);
    scorer = std::make_shared<ZeroShotScorer>(dataset.classifier);
  } else {
    streams = build_theory_streams(cfg);
    scorer = std::make_shared<TheoryScorer>(*cfg.world);
  }
  const std::size_t n = streams.size();
  const std::size_t c = scorer->num_classes();

  // clients
  std::shared_ptr<LocalMemory> shared_memory;
  if (cfg.policy == Policy::global_shared) {
    shared_memory = std::make_shared<LocalMemory>(c, cfg.params.k_l);
  }
  std::vector<Client> clients;
  clients.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    clients.emplace_back(static_cast<int>(i), scorer, cfg.params, cfg.policy,
                         shared_memory);
  }

  // A single-client federation has nobody to talk to: self-exclusion makes
  // every retrieval empty, so the round is skipped entirely.
  const bool comm_on =
      cfg.comm_enabled && cfg.policy == Policy::latte && n > 1;
  std::optional<GlobalMemory> server;
  if (comm_on) {
    server.emplace(c, n, scorer->dim(), cfg.params.similarity);
  }

  MetricsReport report;
  report.mode = cfg.mode;
  report.policy = cfg.policy;
  report.interleaving = cfg.interleaving;
  report.seed = cfg.seed;
  report.per_client.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    report.per_client[i].client = static_cast<int>(i);
    report.per_client[i].domain = streams[i].domain;
  }

  CommStats stats;
  std::uint64_t round_payload_max = 0;
  std::vector<CommEvent> retrieval_events;

  auto do_comm = [&](std::size_t i) {
    if (!comm_on) return false;
    if (clients[i].processed() % cfg.params.comm_period != 0) return false;
    CommStats round;
    retrieval_events.clear();
    clients[i].communicate(*server, &round,
                           sinks && sinks->retrieval ? &retrieval_events
                                                     : nullptr);
    if (sinks && sinks->retrieval) {
      for (const auto& ev : retrieval_events) sinks->retrieval(ev);
    }
    const std::uint64_t payload = round.upload_bytes(cfg.bytes_per_scalar) +
                                  round.download_bytes(cfg.bytes_per_scalar);
    round_payload_max = std::max(round_payload_max, payload);
    stats.add(round);
    return true;
  };

  std::vector<TraceRow> rows(n);
  std::vector<char> row_live(n, 0);

  auto record = [&](std::size_t i, std::uint64_t step,
                    const PredictionTrace& trace) {
    const Sample& sample = streams[i].samples[step];
    auto& pc = report.per_client[i];
    ++pc.processed;
    if (trace.label_final == sample.label) ++pc.correct;
    if (sinks && sinks->trace) {
      rows[i] = TraceRow{static_cast<int>(i), step,       trace.pseudo_initial,
                         trace.label_final,  sample.label, trace.entropy_initial,
                         false};
      row_live[i] = 1;
    }
  };

  if (cfg.interleaving == Interleaving::sequential) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::uint64_t step = 0; step < streams[i].samples.size(); ++step) {
        const PredictionTrace trace = clients[i].step(streams[i].samples[step].f);
        record(i, step, trace);
        const bool fired = do_comm(i);
        if (sinks && sinks->trace && row_live[i]) {
          rows[i].comm_round = fired;
          sinks->trace(rows[i]);
          row_live[i] = 0;
        }
      }
    }
  } else {
    std::uint64_t max_len = 0;
    for (const auto& s : streams) {
      max_len = std::max<std::uint64_t>(max_len, s.samples.size());
    }
    // The shared-memory baseline mutates one queue set from every client, so
    // its epochs run serially; all other policies keep client state disjoint
    // and the prediction phase parallelizes without changing results.
    const unsigned threads =
        cfg.policy == Policy::global_shared ? 1u : cfg.threads;
    std::vector<PredictionTrace> traces(n);
    for (std::uint64_t step = 0; step < max_len; ++step) {
      for_each_parallel(n, threads, [&](std::size_t i) {
        if (step < streams[i].samples.size()) {
          traces[i] = clients[i].step(streams[i].samples[step].f);
        }
      });
      for (std::size_t i = 0; i < n; ++i) {
        if (step >= streams[i].samples.size()) continue;
        record(i, step, traces[i]);
        const bool fired = do_comm(i);
        if (sinks && sinks->trace && row_live[i]) {
          rows[i].comm_round = fired;
          sinks->trace(rows[i]);
          row_live[i] = 0;
        }
      }
    }
  }

  // totals
  for (const auto& pc : report.per_client) {
    report.processed += pc.processed;
    report.correct += pc.correct;
  }
  report.total_accuracy =
      report.processed
          ? static_cast<double>(report.correct) / report.processed
          : 0.0;

  std::vector<std::uint32_t> domains;
  for (const auto& pc : report.per_client) domains.push_back(pc.domain);
  std::sort(domains.begin(), domains.end());
  domains.erase(std::unique(domains.begin(), domains.end()), domains.end());
  for (std::uint32_t dom : domains) {
    ClientMetrics agg;
    agg.domain = dom;
    for (const auto& pc : report.per_client) {
      if (pc.domain != dom) continue;
      agg.processed += pc.processed;
      agg.correct += pc.correct;
    }
    report.per_domain.emplace_back(dom, agg);
  }

  report.comm.rounds = stats.rounds;
  report.comm.upload_bytes = stats.upload_bytes(cfg.bytes_per_scalar);
  report.comm.download_bytes = stats.download_bytes(cfg.bytes_per_scalar);
  report.comm.max_round_bytes = round_payload_max;
  report.comm.bytes_per_round =
      stats.rounds ? static_cast<double>(report.comm.upload_bytes +
                                         report.comm.download_bytes) /
                         static_cast<double>(stats.rounds)
                   : 0.0;

  // held-out evaluation on fresh samples, never on the adaptation stream
  if (cfg.mode == RunMode::theory) {
    std::uint64_t wrong = 0;
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!streams[i].is_id) continue;
      std::mt19937_64 rng(mix_seed(cfg.seed, kEvalTag + i));
      std::bernoulli_distribution label(0.5);
      for (std::uint64_t k = 0; k < cfg.eval_samples; ++k) {
        const int y = label(rng) ? 1 : 0;
        const Vec f = sample_theory(*cfg.world, y, std::nullopt, rng);
        if (clients[i].classify(f) != static_cast<std::size_t>(y)) ++wrong;
        ++total;
      }
    }
    ErrorReport eps;
    eps.n = total;
    eps.estimate = total ? static_cast<double>(wrong) / total : 0.0;
    eps.half_width =
        total ? 1.96 * std::sqrt(eps.estimate * (1.0 - eps.estimate) / total)
              : 0.0;
    report.eps_post = eps;
  }

  return report;
}

std::vector<MetricsReport> run_repeats(const ExperimentConfig& cfg,
                                       const RunSinks* sinks) {
  cfg.validate();
  std::vector<MetricsReport> reports;
  reports.reserve(cfg.repeats);
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    ExperimentConfig one = cfg;
    one.repeats = 1;
    one.seed = r == 0 ? cfg.seed : mix_seed(cfg.seed, 0x5EED0000ULL + r);
    reports.push_back(run(one, sinks));
  }
  return reports;
}

}  // namespace latte
