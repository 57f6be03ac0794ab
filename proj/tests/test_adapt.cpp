#include <cmath>
#include <random>

#include "doctest.h"
#include "latte/adapt.hpp"
#include "latte/theory.hpp"

using namespace latte;

namespace {

TextClassifier axes_classifier(std::size_t c, std::size_t d) {
  TextClassifier clf;
  for (std::size_t y = 0; y < c; ++y) {
    Vec row(d, 0.0);
    row[y] = 1.0;
    clf.rows.push_back(row);
  }
  return clf;
}

Vec random_unit(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> gauss;
  Vec v(d);
  for (auto& x : v) x = gauss(rng);
  return normalize(v);
}

MemoryEntry mem_entry(Vec v, double h, std::uint64_t seq = 0) {
  return MemoryEntry{std::move(v), h, seq, false, -1};
}

}  // namespace

TEST_CASE("hyperparameter presets") {
  const auto vlcs = params_preset("vlcs-latte");
  CHECK(vlcs.alpha == 0.3);
  CHECK(vlcs.beta == 6.0);
  CHECK(vlcs.gamma == 6.0);
  CHECK(vlcs.k_l == 15);
  CHECK(vlcs.k_e == 12);

  const auto terra = params_preset("terra-latte");
  CHECK(terra.alpha == 1.5);
  CHECK(terra.beta == 35.0);
  CHECK(terra.gamma == 10.0);
  CHECK(terra.k_l == 2);
  CHECK(terra.k_e == 20);

  const auto c10 = params_preset("cifar10c-latte");
  CHECK(c10.alpha == 1.0);
  CHECK(c10.beta == 60.0);
  CHECK(c10.gamma == 1.5);
  CHECK(c10.k_l == 12);
  CHECK(c10.k_e == 9);

  const auto c100 = params_preset("cifar100c-latte");
  CHECK(c100.alpha == 0.7);
  CHECK(c100.beta == 60.0);
  CHECK(c100.gamma == 1.5);
  CHECK(c100.k_l == 8);
  CHECK(c100.k_e == 5);

  CHECK_THROWS_AS(params_preset("nope"), Error);
}

TEST_CASE("memory logits: singleton classes reduce to plain similarity") {
  auto clf = axes_classifier(3, 3);
  LatteParams params;
  params.beta = 7.0;
  params.gamma = 2.0;
  std::mt19937_64 rng(1);
  const Vec f = random_unit(rng, 3);

  MergedMemory merged(3);
  std::vector<Vec> ms;
  for (int y = 0; y < 3; ++y) {
    ms.push_back(random_unit(rng, 3));
    merged[y] = {mem_entry(ms[y], 0.3 * y)};
  }
  const Logits z_pre = zero_shot_logits(f, clf);
  const Logits z_mem = memory_logits(f, merged, z_pre, params);
  for (int y = 0; y < 3; ++y) {
    CHECK(z_mem.values[y] ==
          doctest::Approx(params.scale * dot(f, ms[y])).epsilon(1e-12));
  }
}

TEST_CASE("memory logits: empty classes fall back to the zero-shot logit") {
  auto clf = axes_classifier(4, 4);
  LatteParams params;
  std::mt19937_64 rng(2);
  const Vec f = random_unit(rng, 4);
  const Logits z_pre = zero_shot_logits(f, clf);

  MergedMemory all_empty(4);
  const Logits z_mem = memory_logits(f, all_empty, z_pre, params);
  CHECK(z_mem.values == z_pre.values);

  MergedMemory one(4);
  one[2] = {mem_entry(random_unit(rng, 4), 0.1)};
  const Logits partial = memory_logits(f, one, z_pre, params);
  CHECK(partial.values[0] == z_pre.values[0]);
  CHECK(partial.values[1] == z_pre.values[1]);
  CHECK(partial.values[3] == z_pre.values[3]);
}

TEST_CASE("memory logits stay within the scale bound") {
  auto clf = axes_classifier(3, 5);
  LatteParams params;
  params.beta = 60.0;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    MergedMemory merged(3);
    for (int y = 0; y < 3; ++y) {
      const std::size_t k = rng() % 4;
      for (std::size_t i = 0; i < k; ++i) {
        merged[y].push_back(
            mem_entry(random_unit(rng, 5), 0.01 * (rng() % 100), i));
      }
    }
    const Vec f = random_unit(rng, 5);
    const Logits z_pre = zero_shot_logits(f, clf);
    const Logits z_mem = memory_logits(f, merged, z_pre, params);
    for (double v : z_mem.values) {
      CHECK(v <= params.scale + 1e-9);
      CHECK(v >= -params.scale - 1e-9);
    }
  }
}

TEST_CASE("extreme beta reproduces the nearest neighbor on unit entries") {
  std::mt19937_64 rng(4);
  LatteParams params;
  params.beta = 1e6;
  params.gamma = 0.0;
  params.alpha = 1e6;
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + rng() % 7;
    const std::size_t c = 2 + rng() % 4;
    auto clf = axes_classifier(c, std::max(c, d));
    const std::size_t dim = std::max(c, d);

    MergedMemory merged(c);
    std::vector<std::pair<Vec, std::size_t>> flat;
    for (std::size_t y = 0; y < c; ++y) {
      const std::size_t k = 1 + rng() % 4;
      for (std::size_t i = 0; i < k; ++i) {
        Vec m = random_unit(rng, dim);
        merged[y].push_back(mem_entry(m, 0.0, i));
        flat.emplace_back(m, y);
      }
    }
    const Vec f = random_unit(rng, dim);

    // top-2 similarity margin over all entries
    std::vector<double> sims;
    for (const auto& [m, y] : flat) sims.push_back(dot(f, m));
    std::sort(sims.rbegin(), sims.rend());
    if (sims.size() > 1 && sims[0] - sims[1] < 1e-3) continue;
    ++checked;

    const Logits z_pre = zero_shot_logits(f, clf);
    const Logits z_mem = memory_logits(f, merged, z_pre, params);
    std::vector<double> z_post(c);
    for (std::size_t y = 0; y < c; ++y) {
      z_post[y] = z_pre.values[y] + params.alpha * z_mem.values[y];
    }
    CHECK(argmax(z_post) == onenn_oracle(f, flat));
  }
  CHECK(checked > 800);
}

TEST_CASE("client step: alpha = 0 is pure zero-shot") {
  auto scorer = std::make_shared<ZeroShotScorer>(axes_classifier(3, 3));
  LatteParams params;
  params.alpha = 0.0;
  Client client(0, scorer, params);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec f = random_unit(rng, 3);
    const auto trace = client.step(f);
    CHECK(trace.label_final == argmax(trace.z_pre.values));
  }
}

TEST_CASE("client step: the first sample retrieves itself") {
  auto scorer = std::make_shared<ZeroShotScorer>(axes_classifier(3, 3));
  LatteParams params;
  Client client(0, scorer, params);
  std::mt19937_64 rng(6);
  const Vec f = random_unit(rng, 3);
  const auto trace = client.step(f);
  CHECK(trace.memory_action.action == UpdateAction::inserted);
  CHECK(trace.z_mem.values[trace.pseudo_initial] ==
        doctest::Approx(params.scale).epsilon(1e-9));
}

TEST_CASE("client step: duplicate inputs give identical posteriors") {
  auto scorer = std::make_shared<ZeroShotScorer>(axes_classifier(4, 4));
  Client client(0, scorer, LatteParams{});
  std::mt19937_64 rng(7);
  const Vec f = random_unit(rng, 4);
  const auto first = client.step(f);
  const auto second = client.step(f);
  CHECK(first.z_post.values == second.z_post.values);
  CHECK(first.label_final == second.label_final);
}

TEST_CASE("client step is deterministic given the state") {
  auto scorer = std::make_shared<ZeroShotScorer>(axes_classifier(3, 3));
  Client a(0, scorer, LatteParams{});
  Client b(0, scorer, LatteParams{});
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const Vec f = random_unit(rng, 3);
    const auto ta = a.step(f);
    const auto tb = b.step(f);
    CHECK(ta.z_post.values == tb.z_post.values);
    CHECK(ta.label_final == tb.label_final);
  }
}

TEST_CASE("posterior argmax is invariant to a common positive rescaling") {
  // scaling z_pre and z_mem together is the same as scaling z_post
  auto scorer = std::make_shared<ZeroShotScorer>(axes_classifier(3, 3));
  Client client(0, scorer, LatteParams{});
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const Vec f = random_unit(rng, 3);
    const auto trace = client.step(f);
    std::vector<double> scaled(trace.z_post.values);
    for (auto& v : scaled) v *= 37.5;
    CHECK(argmax(scaled) == trace.label_final);
  }
}

TEST_CASE("twin clients retrieve each other's prototypes at similarity ~1") {
  auto scorer = std::make_shared<ZeroShotScorer>(axes_classifier(3, 3));
  LatteParams params;
  params.k_e = 2;
  Client a(0, scorer, params);
  Client b(1, scorer, params);
  GlobalMemory server(3, 2, 3, params.similarity);

  std::mt19937_64 rng(10);
  for (int i = 0; i < 30; ++i) {
    const Vec f = random_unit(rng, 3);
    a.step(f);
    b.step(f);
  }
  CommStats stats;
  a.communicate(server, &stats);
  b.communicate(server, &stats);
  a.communicate(server, &stats);  // now both sides are populated

  bool any = false;
  for (std::size_t y = 0; y < 3; ++y) {
    for (const auto& e : a.external().lists[y]) {
      CHECK(e.origin == 1);
      CHECK(e.external);
      any = true;
    }
  }
  CHECK(any);
  // identical streams produce identical prototypes
  for (std::size_t y = 0; y < 3; ++y) {
    if (a.external().lists[y].empty()) continue;
    const auto own = compute_prototype(a.local().queue(y), params.gamma);
    REQUIRE(own.has_value());
    CHECK(dot(*own, a.external().lists[y][0].embedding) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("client with empty memory uploads and downloads nothing") {
  auto scorer = std::make_shared<ZeroShotScorer>(axes_classifier(3, 3));
  Client a(0, scorer, LatteParams{});
  GlobalMemory server(3, 2, 3);
  CommStats stats;
  a.communicate(server, &stats);
  CHECK(stats.upload_records == 0);
  CHECK(stats.download_records == 0);
  CHECK(stats.rounds == 1);
  for (const auto& l : a.external().lists) CHECK(l.empty());
}

TEST_CASE("policies") {
  auto scorer = std::make_shared<ZeroShotScorer>(axes_classifier(3, 3));
  std::mt19937_64 rng(11);

  SUBCASE("zero_shot ignores memory entirely") {
    Client z(0, scorer, LatteParams{}, Policy::zero_shot);
    for (int i = 0; i < 20; ++i) {
      const Vec f = random_unit(rng, 3);
      const auto trace = z.step(f);
      CHECK(trace.label_final == argmax(trace.z_pre.values));
    }
    CHECK(z.local().empty());
  }

  SUBCASE("local_only never communicates") {
    Client l(0, scorer, LatteParams{}, Policy::local_only);
    GlobalMemory server(3, 2, 3);
    CommStats stats;
    for (int i = 0; i < 5; ++i) l.step(random_unit(rng, 3));
    l.communicate(server, &stats);
    CHECK(stats.rounds == 0);
    CHECK_FALSE(server.slot(0, 0).has_value());
  }

  SUBCASE("global_shared clients mutate one queue set") {
    auto shared = std::make_shared<LocalMemory>(3, 12);
    Client a(0, scorer, LatteParams{}, Policy::global_shared, shared);
    Client b(1, scorer, LatteParams{}, Policy::global_shared, shared);
    const Vec f = random_unit(rng, 3);
    a.step(f);
    CHECK(shared->total_insertions() == 1);
    b.step(f);
    CHECK(shared->total_insertions() == 2);
  }
}

TEST_CASE("policy names round-trip") {
  for (auto p : {Policy::latte, Policy::zero_shot, Policy::local_only,
                 Policy::global_shared}) {
    CHECK(policy_from_string(policy_name(p)) == p);
  }
  CHECK_THROWS_AS(policy_from_string("bogus"), Error);
}
