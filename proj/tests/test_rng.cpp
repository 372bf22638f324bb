#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "tampo/rng.hpp"

using tampo::rng::Stream;
using tampo::rng::derive;

TEST_CASE("streams with the same seed are identical") {
  Stream a(42);
  Stream b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform01 stays in [0, 1)") {
  Stream s(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.uniform01();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("derive separates key paths") {
  REQUIRE(derive(1, {2, 3}) != derive(1, {3, 2}));
  REQUIRE(derive(1, {2}) != derive(2, {2}));
  REQUIRE(derive(1, {2, 3}) == derive(1, {2, 3}));
}

TEST_CASE("split depends on the construction seed, not consumption") {
  Stream a(99);
  Stream b(99);
  a.next_u64();
  a.next_u64();
  REQUIRE(a.split(5).next_u64() == b.split(5).next_u64());
  REQUIRE(a.split(5).next_u64() != a.split(6).next_u64());
}

TEST_CASE("categorical follows the CDF") {
  Stream s(3);
  const std::vector<double> one_hot{0.0, 0.0, 1.0, 0.0};
  for (int i = 0; i < 50; ++i) REQUIRE(s.categorical(one_hot) == 2);

  const std::vector<double> uniform{0.25, 0.25, 0.25, 0.25};
  std::vector<int> counts(4, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[s.categorical(uniform)];
  for (int c : counts) {
    const double freq = static_cast<double>(c) / draws;
    REQUIRE(freq > 0.24);
    REQUIRE(freq < 0.26);
  }
}

TEST_CASE("below is bounded and covers its range") {
  Stream s(11);
  std::vector<bool> seen(9, false);
  for (int i = 0; i < 2000; ++i) {
    const auto v = s.below(9);
    REQUIRE(v < 9);
    seen[v] = true;
  }
  for (bool hit : seen) REQUIRE(hit);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  std::vector<int> items{0, 1, 2, 3, 4, 5, 6, 7};
  Stream s1(13);
  tampo::rng::shuffle(items, s1);
  std::vector<int> again{0, 1, 2, 3, 4, 5, 6, 7};
  Stream s2(13);
  tampo::rng::shuffle(again, s2);
  REQUIRE(items == again);
  std::vector<int> sorted = items;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}
