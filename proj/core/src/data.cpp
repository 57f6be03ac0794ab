#include "latte/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace latte {

namespace fs = std::filesystem;
using nlohmann::json;

// --- theory world -----------------------------------------------------------

namespace {

std::string fmt_num(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

double center_distance(const Vec& a, const Vec& b) {
  return std::sqrt(sq_dist(a, b));
}

}  // namespace

void TheoryWorld::validate() const {
  if (mu.empty()) {
    raise(ErrorCode::InvalidArgument, "world has empty class center");
  }
  if (w_pre.size() != mu.size()) {
    raise(ErrorCode::DimMismatch, "w_pre dimension disagrees with mu");
  }
  if (!all_finite(mu) || !all_finite(w_pre) || !std::isfinite(b_pre)) {
    raise(ErrorCode::InvalidArgument, "world parameters must be finite");
  }
  if (std::abs(l2_norm(w_pre) - 1.0) > 1e-9) {
    raise(ErrorCode::InvalidArgument, "w_pre must be unit-norm");
  }
  if (!(t_scale > 0.0) || !std::isfinite(t_scale)) {
    raise(ErrorCode::InvalidArgument, "t_scale must be positive");
  }
  const double align = dot(mu, w_pre);
  if (!(align > 0.0)) {
    raise(ErrorCode::InvalidArgument,
          "Assumption 3: mu^T w_pre = " + fmt_num(align) + " <= 0");
  }
  if (!(b_pre > -align - 1.0 && b_pre < align + 1.0)) {
    raise(ErrorCode::InvalidArgument,
          "Assumption 3: b_pre = " + fmt_num(b_pre) + " outside (" +
              fmt_num(-align - 1.0) + ", " + fmt_num(align + 1.0) + ")");
  }
  Vec mu0(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) mu0[i] = -mu[i];
  for (std::size_t k = 0; k < ood_centers.size(); ++k) {
    const OodPair& pair = ood_centers[k];
    if (pair.mu0.size() != mu.size() || pair.mu1.size() != mu.size()) {
      raise(ErrorCode::DimMismatch,
            "OOD pair " + std::to_string(k) + " dimension disagrees with mu");
    }
    const Vec* id_centers[2] = {&mu0, &mu};
    const Vec* ood[2] = {&pair.mu0, &pair.mu1};
    for (int y = 0; y < 2; ++y) {
      for (int yp = 0; yp < 2; ++yp) {
        const double dist = center_distance(*id_centers[y], *ood[yp]);
        if (!(dist > 4.0)) {
          raise(ErrorCode::InvalidArgument,
                "Assumption 4: ||mu_" + std::to_string(y) + " - mu'_" +
                    std::to_string(yp) + "|| = " + fmt_num(dist) +
                    " <= 4 (OOD pair " + std::to_string(k) + ")");
        }
      }
    }
  }
}

json TheoryWorld::to_json() const {
  json j;
  j["mu"] = mu;
  j["w_pre"] = w_pre;
  j["b_pre"] = b_pre;
  j["t_scale"] = t_scale;
  j["ood_centers"] = json::array();
  for (const auto& p : ood_centers) {
    j["ood_centers"].push_back({{"mu0", p.mu0}, {"mu1", p.mu1}});
  }
  return j;
}

TheoryWorld TheoryWorld::from_json(const json& j) {
  TheoryWorld world;
  try {
    world.mu = j.at("mu").get<Vec>();
    world.w_pre = j.at("w_pre").get<Vec>();
    world.b_pre = j.value("b_pre", 0.0);
    world.t_scale = j.value("t_scale", 100.0);
    if (j.contains("ood_centers")) {
      for (const auto& p : j.at("ood_centers")) {
        world.ood_centers.push_back(
            {p.at("mu0").get<Vec>(), p.at("mu1").get<Vec>()});
      }
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::BadConfig, std::string("world spec: ") + e.what());
  }
  return world;
}

Vec sample_theory(const TheoryWorld& world, int y,
                  std::optional<std::size_t> ood_index, std::mt19937_64& rng) {
  if (y != 0 && y != 1) {
    raise(ErrorCode::BadClass, "theory world classes are {0, 1}");
  }
  const std::size_t d = world.dim();
  const Vec* center = nullptr;
  if (ood_index.has_value()) {
    if (*ood_index >= world.ood_centers.size()) {
      raise(ErrorCode::InvalidArgument, "ood_index out of range");
    }
    const OodPair& pair = world.ood_centers[*ood_index];
    center = (y == 1) ? &pair.mu1 : &pair.mu0;
  }

  // Direction uniform on the sphere via a normalized gaussian, radius with
  // density proportional to r^{d-1}, i.e. r = U^{1/d}.
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec u(d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      u[i] = gauss(rng);
      norm += u[i] * u[i];
    }
    norm = std::sqrt(norm);
  } while (norm <= kNormEps);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double r =
      std::pow(unif(rng), 1.0 / static_cast<double>(d));

  Vec f(d);
  const double sign = (y == 1) ? 1.0 : -1.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double c = center ? (*center)[i] : sign * world.mu[i];
    f[i] = c + r * u[i] / norm;
  }
  return f;
}

TheoryPredictor::TheoryPredictor(TheoryWorld world) : world_(std::move(world)) {
  world_.validate();
}

double TheoryPredictor::decision_value(const Vec& f) const {
  if (f.size() != world_.dim()) {
    raise(ErrorCode::DimMismatch, "embedding dim disagrees with world dim");
  }
  return dot(f, world_.w_pre) + world_.b_pre;
}

double TheoryPredictor::p1(const Vec& f) const {
  const double a = world_.t_scale * decision_value(f);
  return 1.0 / (1.0 + std::exp(-a));
}

Logits TheoryPredictor::score(const Vec& f) const {
  const double half = 0.5 * world_.t_scale * decision_value(f);
  return Logits{{-half, half}, LogitKind::pre};
}

double TheoryPredictor::entropy_of(const Vec& f) const {
  return entropy(score(f));
}

// --- datasets ----------------------------------------------------------------

std::size_t EmbeddingDataset::num_domains() const {
  if (domains.empty()) return 1;
  std::uint32_t max_dom = 0;
  for (auto d : domains) max_dom = std::max(max_dom, d);
  return static_cast<std::size_t>(max_dom) + 1;
}

void EmbeddingDataset::validate() const {
  classifier.validate();
  if (labels.size() != embeddings.size()) {
    raise(ErrorCode::DimMismatch, "labels/embeddings size mismatch");
  }
  if (!domains.empty() && domains.size() != embeddings.size()) {
    raise(ErrorCode::DimMismatch, "domains/embeddings size mismatch");
  }
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != classifier.dim()) {
      raise(ErrorCode::DimMismatch,
            "embedding row " + std::to_string(i) + " has wrong dim");
    }
    if (labels[i] >= classifier.num_classes()) {
      raise(ErrorCode::LabelOutOfRange,
            "label at row " + std::to_string(i) + " out of range");
    }
  }
}

namespace {

constexpr int kManifestVersion = 1;

std::uint32_t crc32_of_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  uLong crc = ::crc32(0L, Z_NULL, 0);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    if (got > 0) {
      crc = ::crc32(crc, reinterpret_cast<const Bytef*>(buf),
                    static_cast<uInt>(got));
    }
  }
  return static_cast<std::uint32_t>(crc);
}

void write_binary(const fs::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(size));
  if (!out) raise(ErrorCode::IoError, "short write to " + path.string());
}

std::vector<std::uint8_t> read_binary(const fs::path& path,
                                      std::size_t expected_size,
                                      const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (buf.size() != expected_size) {
    raise(ErrorCode::TruncatedFile,
          what + " file " + path.string() + " holds " +
              std::to_string(buf.size()) + " bytes, expected " +
              std::to_string(expected_size));
  }
  return buf;
}

std::vector<float> flatten_f32(const std::vector<Vec>& rows, std::size_t dim) {
  std::vector<float> flat;
  flat.reserve(rows.size() * dim);
  for (const auto& row : rows) {
    for (double x : row) flat.push_back(static_cast<float>(x));
  }
  return flat;
}

}  // namespace

void save_dataset(const EmbeddingDataset& dataset, const fs::path& dir,
                  bool normalize_rows) {
  dataset.validate();
  fs::create_directories(dir);

  const std::size_t d = dataset.dim();
  const std::vector<float> emb = flatten_f32(dataset.embeddings, d);
  const std::vector<float> text = flatten_f32(dataset.classifier.rows, d);

  std::vector<std::uint32_t> labels_disk(dataset.labels.size());
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    labels_disk[i] = dataset.labels[i] + 1;  // 1-based on disk
  }

  write_binary(dir / "embeddings.f32", emb.data(), emb.size() * 4);
  write_binary(dir / "labels.u32", labels_disk.data(),
               labels_disk.size() * 4);
  write_binary(dir / "text_embeddings.f32", text.data(), text.size() * 4);
  if (!dataset.domains.empty()) {
    write_binary(dir / "domains.u32", dataset.domains.data(),
                 dataset.domains.size() * 4);
  }

  json files = {{"embeddings", "embeddings.f32"},
                {"labels", "labels.u32"},
                {"text_embeddings", "text_embeddings.f32"}};
  json crcs = {
      {"embeddings", crc32_of_file(dir / "embeddings.f32")},
      {"labels", crc32_of_file(dir / "labels.u32")},
      {"text_embeddings", crc32_of_file(dir / "text_embeddings.f32")}};
  if (!dataset.domains.empty()) {
    files["domains"] = "domains.u32";
    crcs["domains"] = crc32_of_file(dir / "domains.u32");
  }

  json manifest = {{"version", kManifestVersion},
                   {"dim", d},
                   {"num_samples", dataset.size()},
                   {"num_classes", dataset.num_classes()},
                   {"class_names", dataset.classifier.class_names},
                   {"scale", dataset.classifier.scale},
                   {"dtype", "f32le"},
                   {"normalized", normalize_rows},
                   {"files", files},
                   {"crc32", crcs}};
  if (!dataset.domain_names.empty()) {
    manifest["domain_names"] = dataset.domain_names;
  }

  std::ofstream out(dir / "manifest.json");
  if (!out) raise(ErrorCode::IoError, "cannot write manifest");
  out << manifest.dump(2) << "\n";
}

EmbeddingDataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) {
    raise(ErrorCode::IoError, "cannot open " + manifest_path.string());
  }
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    raise(ErrorCode::BadMagic,
          "manifest is not valid JSON: " + std::string(e.what()));
  }

  if (!manifest.contains("version") ||
      manifest["version"].get<int>() != kManifestVersion) {
    raise(ErrorCode::BadMagic, "unsupported manifest version");
  }
  if (manifest.value("dtype", "") != "f32le") {
    raise(ErrorCode::BadMagic,
          "unsupported dtype '" + manifest.value("dtype", "") + "'");
  }

  std::size_t dim, num_samples, num_classes;
  json files, crcs;
  try {
    dim = manifest.at("dim").get<std::size_t>();
    num_samples = manifest.at("num_samples").get<std::size_t>();
    num_classes = manifest.at("num_classes").get<std::size_t>();
    files = manifest.at("files");
    crcs = manifest.at("crc32");
  } catch (const json::exception& e) {
    raise(ErrorCode::BadMagic, "manifest missing field: " + std::string(e.what()));
  }
  if (dim < 1 || num_classes < 2) {
    raise(ErrorCode::BadMagic, "manifest declares invalid dimensions");
  }

  const fs::path dir = manifest_path.parent_path();
  auto checked_read = [&](const char* key, std::size_t expected_bytes) {
    const std::string rel = files.at(key).get<std::string>();
    auto buf = read_binary(dir / rel, expected_bytes, key);
    const std::uint32_t want = crcs.at(key).get<std::uint32_t>();
    const std::uint32_t got = crc32_ieee(buf.data(), buf.size());
    if (want != got) {
      raise(ErrorCode::ChecksumMismatch,
            std::string(key) + " crc32 " + std::to_string(got) +
                " != manifest " + std::to_string(want));
    }
    return buf;
  };

  const auto emb_bytes = checked_read("embeddings", num_samples * dim * 4);
  const auto label_bytes = checked_read("labels", num_samples * 4);
  const auto text_bytes = checked_read("text_embeddings",
                                       num_classes * dim * 4);
  std::vector<std::uint8_t> domain_bytes;
  const bool has_domains = files.contains("domains");
  if (has_domains) domain_bytes = checked_read("domains", num_samples * 4);

  const bool renorm = manifest.value("normalized", true);

  EmbeddingDataset dataset;
  dataset.classifier.scale = manifest.value("scale", 100.0);
  dataset.classifier.class_names =
      manifest.value("class_names", std::vector<std::string>{});
  if (manifest.contains("domain_names")) {
    dataset.domain_names =
        manifest["domain_names"].get<std::vector<std::string>>();
  }

  auto read_rows = [&](const std::vector<std::uint8_t>& bytes,
                       std::size_t rows, const char* what, bool renormalize) {
    std::vector<Vec> out(rows, Vec(dim));
    const float* p = reinterpret_cast<const float*>(bytes.data());
    for (std::size_t r = 0; r < rows; ++r) {
      Vec& row = out[r];
      for (std::size_t i = 0; i < dim; ++i) row[i] = p[r * dim + i];
      if (!all_finite(row)) {
        raise(ErrorCode::InvalidArgument, std::string(what) + " row " +
                                              std::to_string(r) +
                                              " contains a non-finite value");
      }
      if (renormalize) row = normalize(row);
    }
    return out;
  };

  dataset.embeddings = read_rows(emb_bytes, num_samples, "embeddings", renorm);
  dataset.classifier.rows = read_rows(text_bytes, num_classes,
                                      "text_embeddings", true);

  dataset.labels.resize(num_samples);
  const auto* lp = reinterpret_cast<const std::uint32_t*>(label_bytes.data());
  for (std::size_t i = 0; i < num_samples; ++i) {
    const std::uint32_t raw = lp[i];
    if (raw < 1 || raw > num_classes) {
      raise(ErrorCode::LabelOutOfRange,
            "label at row " + std::to_string(i) + " is " +
                std::to_string(raw) + ", valid range [1, " +
                std::to_string(num_classes) + "]");
    }
    dataset.labels[i] = raw - 1;
  }

  if (has_domains) {
    dataset.domains.resize(num_samples);
    const auto* dp =
        reinterpret_cast<const std::uint32_t*>(domain_bytes.data());
    std::copy(dp, dp + num_samples, dataset.domains.begin());
  }

  dataset.validate();
  return dataset;
}

// --- sharding ----------------------------------------------------------------

std::vector<ClientShard> partition(const EmbeddingDataset& dataset,
                                   std::size_t m, std::uint64_t seed) {
  if (m < 1) raise(ErrorCode::InvalidArgument, "clients per domain must be >= 1");
  const std::size_t num_domains = dataset.num_domains();

  std::vector<std::vector<std::size_t>> by_domain(num_domains);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::uint32_t dom = dataset.domains.empty() ? 0 : dataset.domains[i];
    by_domain[dom].push_back(i);
  }

  std::vector<ClientShard> shards;
  int client = 0;
  for (std::size_t dom = 0; dom < num_domains; ++dom) {
    auto& indices = by_domain[dom];
    if (indices.empty()) {
      raise(ErrorCode::EmptyDomain,
            "domain " + std::to_string(dom) + " has no samples");
    }
    std::mt19937_64 perm_rng(mix_seed(seed, 0xD0000000ULL + dom));
    std::shuffle(indices.begin(), indices.end(), perm_rng);

    // near-equal contiguous split: the first (size % m) shards get one extra
    const std::size_t base = indices.size() / m;
    const std::size_t extra = indices.size() % m;
    std::size_t pos = 0;
    for (std::size_t s = 0; s < m; ++s) {
      const std::size_t len = base + (s < extra ? 1 : 0);
      ClientShard shard;
      shard.client = client;
      shard.domain = static_cast<std::uint32_t>(dom);
      shard.seed = mix_seed(seed, 0xC0000000ULL + static_cast<std::uint64_t>(client));
      shard.indices.assign(indices.begin() + pos, indices.begin() + pos + len);
      std::mt19937_64 stream_rng(shard.seed);
      std::shuffle(shard.indices.begin(), shard.indices.end(), stream_rng);
      pos += len;
      shards.push_back(std::move(shard));
      ++client;
    }
  }
  return shards;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 finalizer over seed + tag * golden gamma
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint32_t crc32_ieee(const void* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data),
                static_cast<uInt>(size));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace latte
