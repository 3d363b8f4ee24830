#include <doctest.h>

#include <set>

#include "atso/datasets.hpp"
#include "atso/error.hpp"

namespace {

atso::GeneratorSpec small_spec() {
  atso::GeneratorSpec s;
  s.labeled = 3;
  s.reference = 7;
  s.test = 4;
  return s;
}

std::size_t foreground(const atso::LabelMap& m) {
  std::size_t n = 0;
  for (auto v : m.data) n += v != 0;
  return n;
}

}  // namespace

TEST_SUITE("datasets") {
  TEST_CASE("generation is a deterministic function of spec and seed") {
    const auto a = atso::gen_synthetic_task(small_spec(), 5);
    const auto b = atso::gen_synthetic_task(small_spec(), 5);
    const auto c = atso::gen_synthetic_task(small_spec(), 6);
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint() != c.fingerprint());
    CHECK(a.labeled().size() == 3);
    CHECK(a.reference().size() == 7);
    CHECK(a.test().size() == 4);
  }

  TEST_CASE("reference samples carry no visible labels") {
    const auto b = atso::gen_synthetic_task(small_spec(), 1);
    for (const auto& s : b.reference()) CHECK_FALSE(s.label.has_value());
    for (const auto& s : b.labeled()) CHECK(s.label.has_value());
    for (const auto& s : b.test()) CHECK(s.label.has_value());
    CHECK(b.has_reference_truth());
  }

  TEST_CASE("ids are unique across roles") {
    const auto b = atso::gen_synthetic_task(small_spec(), 1);
    std::set<std::string> ids;
    for (auto set : {b.labeled(), b.reference(), b.test()}) {
      for (const auto& s : set) CHECK(ids.insert(s.id).second);
    }
  }

  TEST_CASE("truth reads are audited by phase") {
    const auto b = atso::gen_synthetic_task(small_spec(), 1);
    const std::string id = b.reference().front().id;
    {
      atso::ScopedAccessPhase p(atso::AccessPhase::evaluation);
      (void)b.reference_truth(id);
    }
    {
      atso::ScopedAccessPhase p(atso::AccessPhase::training);
      (void)b.reference_truth(id);
      (void)b.reference_truth(id);
    }
    CHECK(b.audit().reads(atso::AccessPhase::evaluation) == 1);
    CHECK(b.audit().reads(atso::AccessPhase::training) == 2);
    CHECK(atso::ScopedAccessPhase::current() == atso::AccessPhase::unscoped);
    CHECK_THROWS_AS((void)b.reference_truth("nope"), atso::ValidationError);
  }

  TEST_CASE("no noise and no objects gives a constant background image") {
    auto s = small_spec();
    s.noise = 0.0;
    s.texture = 0.0;
    s.offset_std = 0.0;
    s.objects_min = s.objects_max = 0;
    s.distractors_max = 0;
    const auto b = atso::gen_synthetic_task(s, 3);
    for (const auto& smp : b.labeled()) {
      CHECK(foreground(*smp.label) == 0);
      for (double v : smp.image.data) CHECK(v == smp.image.data.front());
    }
  }

  TEST_CASE("foreground band is respected") {
    auto s = small_spec();
    s.foreground_min = 0.05;
    s.foreground_max = 0.4;
    const auto b = atso::gen_synthetic_task(s, 8);
    for (const auto& smp : b.labeled()) {
      const double f = static_cast<double>(foreground(*smp.label)) / 1024.0;
      CHECK(f >= 0.05);
      CHECK(f <= 0.4);
    }
  }

  TEST_CASE("many-class tasks use every class index in range") {
    auto s = small_spec();
    s.num_classes = 6;
    s.rare_classes = 2;
    s.labeled = 20;
    const auto b = atso::gen_synthetic_task(s, 4);
    std::set<int> seen;
    for (const auto& smp : b.labeled()) {
      for (auto v : smp.label->data) {
        CHECK(v < 6);
        seen.insert(v);
      }
    }
    CHECK(seen.size() >= 4);
  }

  TEST_CASE("invalid specs name the field") {
    auto s = small_spec();
    s.labeled = 0;
    try {
      atso::gen_synthetic_task(s, 1);
      FAIL("expected a ValidationError");
    } catch (const atso::ValidationError& e) {
      CHECK(e.field() == "generator.labeled");
    }
    s = small_spec();
    s.num_classes = 1;
    CHECK_THROWS_AS(atso::gen_synthetic_task(s, 1), atso::ValidationError);
  }

  TEST_CASE("identity shift only changes the domain tag") {
    const auto b = atso::gen_synthetic_task(small_spec(), 2);
    const auto t = atso::apply_domain_shift(b, atso::ShiftSpec{}, 9);
    REQUIRE(t.labeled().size() == b.labeled().size());
    for (std::size_t i = 0; i < b.labeled().size(); ++i) {
      CHECK(t.labeled()[i].image == b.labeled()[i].image);
      CHECK(t.labeled()[i].label == b.labeled()[i].label);
      CHECK(t.labeled()[i].domain == atso::Domain::target);
    }
  }

  TEST_CASE("intensity shift scales pixels and keeps labels") {
    const auto b = atso::gen_synthetic_task(small_spec(), 2);
    atso::ShiftSpec sh;
    sh.intensity_scale = 2.0;
    const auto t = atso::apply_domain_shift(b, sh, 9);
    const auto& x = b.test().front();
    const auto& y = t.test().front();
    CHECK(y.label == x.label);
    for (std::size_t i = 0; i < x.image.data.size(); ++i) {
      CHECK(y.image.data[i] == doctest::Approx(2.0 * x.image.data[i]));
    }
  }

  TEST_CASE("radius shift regenerates ground truth") {
    const auto b = atso::gen_synthetic_task(small_spec(), 2);
    atso::ShiftSpec sh;
    sh.radius_scale = 1.5;
    const auto t = atso::apply_domain_shift(b, sh, 9);
    std::size_t before = 0, after = 0;
    for (std::size_t i = 0; i < b.test().size(); ++i) {
      before += foreground(*b.test()[i].label);
      after += foreground(*t.test()[i].label);
    }
    CHECK(after > before);
  }

  TEST_CASE("shift parameters out of range are rejected") {
    const auto b = atso::gen_synthetic_task(small_spec(), 2);
    atso::ShiftSpec sh;
    sh.anomaly_rate = 1.5;
    CHECK_THROWS_AS(atso::apply_domain_shift(b, sh, 1), atso::ValidationError);
    sh = {};
    sh.intensity_scale = 10.0;
    CHECK_THROWS_AS(atso::apply_domain_shift(b, sh, 1), atso::ValidationError);
  }

  TEST_CASE("partition is balanced, disjoint and covers R") {
    const auto b = atso::gen_synthetic_task(small_spec(), 2);
    const auto p = atso::partition_reference(b, 17);
    CHECK(p.subset1_ids.size() == 4);
    CHECK(p.subset2_ids.size() == 3);
    std::set<std::string> all(p.subset1_ids.begin(), p.subset1_ids.end());
    for (const auto& id : p.subset2_ids) CHECK(all.insert(id).second);
    CHECK(all.size() == 7);
    CHECK(atso::partition_reference(b, 17) == p);
  }

  TEST_CASE("partition_ids property: sizes differ by at most one") {
    for (std::size_t n = 2; n < 40; ++n) {
      std::vector<std::string> ids;
      for (std::size_t i = 0; i < n; ++i) ids.push_back("x" + std::to_string(i));
      for (std::size_t k = 1; k <= std::min<std::size_t>(n, 5); ++k) {
        const auto parts = atso::partition_ids(ids, k, n * 31 + k);
        std::size_t lo = n, hi = 0, total = 0;
        for (const auto& p : parts) {
          lo = std::min(lo, p.size());
          hi = std::max(hi, p.size());
          total += p.size();
        }
        CHECK(hi - lo <= 1);
        CHECK(total == n);
      }
    }
  }

  TEST_CASE("partition of a single reference sample fails") {
    auto s = small_spec();
    s.reference = 1;
    const auto b = atso::gen_synthetic_task(s, 2);
    CHECK_THROWS_AS(atso::partition_reference(b, 1), atso::ValidationError);
  }
}
