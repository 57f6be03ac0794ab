#include <atomic>
#include <random>
#include <thread>

#include "doctest.h"
#include "latte/server.hpp"

using namespace latte;

namespace {

std::vector<std::optional<Vec>> one_proto(std::size_t c, std::size_t y,
                                          Vec v) {
  std::vector<std::optional<Vec>> protos(c);
  protos[y] = std::move(v);
  return protos;
}

}  // namespace

TEST_CASE("upload writes, overwrites and keeps stale slots") {
  GlobalMemory g(4, 3, 2);

  g.upload(2, one_proto(4, 0, {1.0, 0.0}));
  CHECK(g.slot(0, 2).has_value());
  CHECK_FALSE(g.slot(0, 0).has_value());
  CHECK_FALSE(g.slot(1, 2).has_value());

  g.upload(2, one_proto(4, 0, {0.0, 1.0}));
  CHECK((*g.slot(0, 2))[1] == doctest::Approx(1.0));

  // absent class leaves the previous value in place
  g.upload(2, std::vector<std::optional<Vec>>(4));
  CHECK(g.slot(0, 2).has_value());
  CHECK((*g.slot(0, 2))[1] == doctest::Approx(1.0));

  CHECK_THROWS_AS(g.upload(5, one_proto(4, 0, {1.0, 0.0})), Error);
  CHECK_THROWS_AS(g.upload(0, one_proto(4, 0, {1.0, 0.0, 0.0})), Error);
}

TEST_CASE("retrieve excludes the caller and ranks by similarity") {
  GlobalMemory g(1, 3, 2);
  g.upload(0, one_proto(1, 0, {1.0, 0.0}));

  SUBCASE("only own slot populated: empty response") {
    auto resp = g.retrieve(0, one_proto(1, 0, {1.0, 0.0}), 5);
    CHECK(resp.per_class[0].empty());
  }

  SUBCASE("two candidates, k_e = 1 keeps the more similar") {
    g.upload(1, one_proto(1, 0, {1.0, 0.0}));
    g.upload(2, one_proto(1, 0, {0.0, 1.0}));
    auto resp = g.retrieve(0, one_proto(1, 0, {1.0, 0.0}), 1);
    REQUIRE(resp.per_class[0].size() == 1);
    CHECK(resp.per_class[0][0].origin == 1);
    CHECK(resp.per_class[0][0].sim == doctest::Approx(1.0));
  }

  SUBCASE("k_e >= n-1 returns all other clients") {
    g.upload(1, one_proto(1, 0, {0.6, 0.8}));
    g.upload(2, one_proto(1, 0, {0.0, 1.0}));
    auto resp = g.retrieve(0, one_proto(1, 0, {1.0, 0.0}), 2);
    REQUIRE(resp.per_class[0].size() == 2);
    CHECK(resp.per_class[0][0].origin == 1);
    CHECK(resp.per_class[0][1].origin == 2);
    CHECK(resp.per_class[0][0].sim >= resp.per_class[0][1].sim);
  }

  SUBCASE("k_e = 0 is always empty") {
    g.upload(1, one_proto(1, 0, {1.0, 0.0}));
    auto resp = g.retrieve(0, one_proto(1, 0, {1.0, 0.0}), 0);
    CHECK(resp.per_class[0].empty());
  }

  SUBCASE("missing query yields an empty class list") {
    g.upload(1, one_proto(1, 0, {1.0, 0.0}));
    auto resp = g.retrieve(0, std::vector<std::optional<Vec>>(1), 3);
    CHECK(resp.per_class[0].empty());
  }

  CHECK_THROWS_AS(g.retrieve(-1, one_proto(1, 0, {1.0, 0.0}), 1), Error);
}

TEST_CASE("similarity ties break toward the lower client index") {
  GlobalMemory g(1, 4, 2);
  g.upload(1, one_proto(1, 0, {0.0, 1.0}));
  g.upload(2, one_proto(1, 0, {0.0, 1.0}));
  g.upload(3, one_proto(1, 0, {0.0, 1.0}));
  auto resp = g.retrieve(0, one_proto(1, 0, {1.0, 0.0}), 2);
  REQUIRE(resp.per_class[0].size() == 2);
  CHECK(resp.per_class[0][0].origin == 1);
  CHECK(resp.per_class[0][1].origin == 2);
}

TEST_CASE("retrieval equals an exhaustive top-k sort") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss;
  for (Similarity kind : {Similarity::cosine, Similarity::neg_sq_l2}) {
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 2 + rng() % 8;
      const std::size_t d = 2 + rng() % 4;
      GlobalMemory g(1, n, d, kind);
      std::vector<std::optional<Vec>> slots(n);
      for (std::size_t j = 0; j < n; ++j) {
        if (rng() % 4 == 0) continue;  // leave some slots empty
        Vec v(d);
        for (auto& x : v) x = gauss(rng);
        slots[j] = v;
        g.upload(static_cast<int>(j), one_proto(1, 0, v));
      }
      Vec q(d);
      for (auto& x : q) x = gauss(rng);
      const std::size_t k_e = rng() % (n + 1);
      const int caller = static_cast<int>(rng() % n);
      auto resp = g.retrieve(caller, one_proto(1, 0, q), k_e);

      // oracle: full sort over eligible slots
      std::vector<std::pair<double, int>> eligible;
      for (std::size_t j = 0; j < n; ++j) {
        if (static_cast<int>(j) == caller || !slots[j]) continue;
        eligible.emplace_back(similarity(kind, *slots[j], q),
                              static_cast<int>(j));
      }
      std::sort(eligible.begin(), eligible.end(), [](auto& a, auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      if (eligible.size() > k_e) eligible.resize(k_e);

      REQUIRE(resp.per_class[0].size() == eligible.size());
      for (std::size_t i = 0; i < eligible.size(); ++i) {
        CHECK(resp.per_class[0][i].origin == eligible[i].second);
        CHECK(resp.per_class[0][i].sim ==
              doctest::Approx(eligible[i].first).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("similarity kinds agree on rankings for unit vectors") {
  // neg_sq_l2 equals cosine - 1 on unit-norm inputs
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 100; ++trial) {
    Vec a(4), b(4);
    for (auto& x : a) x = gauss(rng);
    for (auto& x : b) x = gauss(rng);
    a = normalize(a);
    b = normalize(b);
    CHECK(similarity(Similarity::neg_sq_l2, a, b) ==
          doctest::Approx(similarity(Similarity::cosine, a, b) - 1.0)
              .epsilon(1e-9));
  }
}

TEST_CASE("concurrent uploads and retrievals keep slots consistent") {
  const std::size_t n = 8;
  const std::size_t d = 16;
  GlobalMemory g(4, n, d);
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < n; ++j) {
    pool.emplace_back([&, j]() {
      Vec v(d, 0.0);
      v[j % d] = 1.0;
      for (int round = 0; round < 200; ++round) {
        std::vector<std::optional<Vec>> protos(4);
        for (std::size_t y = 0; y < 4; ++y) protos[y] = v;
        g.upload(static_cast<int>(j), protos);
        auto resp = g.retrieve(static_cast<int>(j), protos, 3);
        for (const auto& per_class : resp.per_class) {
          for (const auto& r : per_class) {
            if (r.origin == static_cast<int>(j) || r.proto.size() != d) {
              failed = true;
            }
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  CHECK_FALSE(failed.load());
  CHECK(g.fully_populated());
}

TEST_CASE("wire record encoding round-trips with the documented layout") {
  WireRecord rec;
  rec.op = WireOp::download;
  rec.client = 42;
  rec.cls = 7;
  rec.payload = {1.5f, -2.25f, 0.0f};
  const auto bytes = encode_wire_record(rec);
  CHECK(bytes.size() == 4 + 13 + 4 * rec.payload.size());

  std::size_t offset = 0;
  const WireRecord back = decode_wire_record(bytes, offset);
  CHECK(offset == bytes.size());
  CHECK(back.op == rec.op);
  CHECK(back.client == rec.client);
  CHECK(back.cls == rec.cls);
  CHECK(back.payload == rec.payload);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 2);
  offset = 0;
  CHECK_THROWS_AS(decode_wire_record(truncated, offset), Error);
}
