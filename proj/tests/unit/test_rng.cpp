#include <doctest.h>

#include <set>

#include "atso/rng.hpp"

TEST_SUITE("rng") {
  TEST_CASE("derive_seed is stable and tag-sensitive") {
    CHECK(atso::derive_seed(1, "data") == atso::derive_seed(1, "data"));
    CHECK(atso::derive_seed(1, "data") != atso::derive_seed(1, "partition"));
    CHECK(atso::derive_seed(1, "data") != atso::derive_seed(2, "data"));
    CHECK(atso::derive_seed(7, std::uint64_t{0}) != atso::derive_seed(7, std::uint64_t{1}));
  }

  TEST_CASE("fnv1a matches published test vectors") {
    CHECK(atso::fnv1a(std::string_view("")) == 0xcbf29ce484222325ULL);
    CHECK(atso::fnv1a(std::string_view("a")) == 0xaf63dc4c8601ec8cULL);
    CHECK(atso::fnv1a(std::string_view("foobar")) == 0x85944171f73967e8ULL);
  }

  TEST_CASE("hex64 is zero padded") {
    CHECK(atso::hex64(0) == "0000000000000000");
    CHECK(atso::hex64(0xabcULL) == "0000000000000abc");
  }

  TEST_CASE("same seed, same stream") {
    atso::Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
      CHECK(a.uniform() == b.uniform());
      CHECK(a.normal() == b.normal());
    }
  }

  TEST_CASE("uniform stays in range and below covers every value") {
    atso::Rng r(3);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
      const double u = r.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      const auto k = r.below(7);
      CHECK(k < 7);
      seen.insert(k);
      const auto n = r.integer(-2, 2);
      CHECK(n >= -2);
      CHECK(n <= 2);
    }
    CHECK(seen.size() == 7);
  }

  TEST_CASE("normal moments are close to the target") {
    atso::Rng r(11);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal(1.5, 2.0);
      s += x;
      s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(mean == doctest::Approx(1.5).epsilon(0.01));
    CHECK(var == doctest::Approx(4.0).epsilon(0.02));
  }

  TEST_CASE("shuffle is a permutation") {
    atso::Rng r(5);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    r.shuffle(v);
    std::set<int> s(v.begin(), v.end());
    CHECK(s.size() == 10);
  }
}
