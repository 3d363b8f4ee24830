#include <doctest.h>

#include <filesystem>

#include "atso/error.hpp"
#include "atso/metrics.hpp"
#include "oracles.hpp"

using atso::LabelMap;

namespace {

LabelMap from_rows(std::vector<std::vector<int>> rows, std::uint32_t k = 2) {
  LabelMap m(rows.size(), rows[0].size(), k);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m.at(r, c) = static_cast<std::uint8_t>(rows[r][c]);
  }
  return m;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("dsc of identical masks is 1") {
    const auto m = from_rows({{0, 1, 1}, {0, 1, 0}});
    CHECK(atso::dsc(m, m) == 1.0);
  }

  TEST_CASE("dsc of disjoint non-empty masks is 0") {
    CHECK(atso::dsc(from_rows({{1, 0}, {0, 0}}), from_rows({{0, 0}, {0, 1}})) == 0.0);
  }

  TEST_CASE("dsc with both masks empty is 1, one empty is 0") {
    const auto empty = from_rows({{0, 0}, {0, 0}});
    const auto some = from_rows({{0, 1}, {0, 0}});
    CHECK(atso::dsc(empty, empty) == 1.0);
    CHECK(atso::dsc(empty, some) == 0.0);
    CHECK(atso::dsc(some, empty) == 0.0);
  }

  TEST_CASE("dsc hand example: |Y|=3, |Z|=2, overlap 2") {
    const auto y = from_rows({{1, 1, 1, 0}});
    const auto z = from_rows({{1, 1, 0, 0}});
    CHECK(atso::dsc(y, z) == doctest::Approx(0.8));
  }

  TEST_CASE("dsc rejects shape mismatch") {
    CHECK_THROWS_AS(atso::dsc(LabelMap(2, 2, 2), LabelMap(2, 3, 2)), atso::ValidationError);
  }

  TEST_CASE("global dsc pools counts, unlike the mean") {
    // Case 1: perfect 1-pixel match; case 2: 1 predicted vs 3 true, overlap 1.
    std::vector<LabelMap> p{from_rows({{1, 0, 0, 0}}), from_rows({{1, 0, 0, 0}})};
    std::vector<LabelMap> t{from_rows({{1, 0, 0, 0}}), from_rows({{1, 1, 1, 0}})};
    CHECK(atso::global_dsc(p, t) == doctest::Approx(2.0 * 2 / (2 + 4)));
    const double mean = 0.5 * (atso::dsc(p[0], t[0]) + atso::dsc(p[1], t[1]));
    CHECK(mean != doctest::Approx(atso::global_dsc(p, t)));
  }

  TEST_CASE("class iou is nullopt for classes absent from both maps") {
    const auto a = from_rows({{0, 1}, {1, 0}}, 3);
    CHECK_FALSE(atso::class_iou(a, a, 2).has_value());
    CHECK(*atso::class_iou(a, a, 1) == 1.0);
  }

  TEST_CASE("miou exclude vs count_as_zero") {
    const auto a = from_rows({{0, 1}, {1, 0}}, 3);
    CHECK(atso::miou(a, a) == 1.0);
    CHECK(atso::miou(a, a, atso::AbsentClassPolicy::count_as_zero) == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("random masks agree with the brute-force oracle") {
    atso::Rng rng(2024);
    for (int i = 0; i < 300; ++i) {
      const auto h = 1 + rng.below(64), w = 1 + rng.below(64);
      const auto k = static_cast<std::uint32_t>(2 + rng.below(7));
      const auto p = oracle::random_mask(rng, h, w, k);
      const auto t = oracle::random_mask(rng, h, w, k);
      CHECK(std::abs(atso::dsc(p, t) - oracle::dsc(p, t)) <= 1e-12);
      const auto fg = static_cast<std::uint32_t>(rng.below(k));
      CHECK(std::abs(atso::dsc(p, t, fg) - oracle::dsc(p, t, fg)) <= 1e-12);
      for (std::uint32_t c = 0; c < k; ++c) {
        const auto a = atso::class_iou(p, t, c);
        const auto b = oracle::class_iou(p, t, c);
        REQUIRE(a.has_value() == b.has_value());
        if (a) CHECK(std::abs(*a - *b) <= 1e-12);
      }
      CHECK(std::abs(atso::miou(p, t) - oracle::miou(p, t)) <= 1e-12);
    }
  }

  TEST_CASE("confusion matrix reproduces per-map iou and totals") {
    atso::Rng rng(9);
    const auto p = oracle::random_mask(rng, 20, 30, 5);
    const auto t = oracle::random_mask(rng, 20, 30, 5);
    atso::ConfusionMatrix cm(5);
    cm.add(p, t);
    CHECK(cm.total() == 600);
    for (std::uint32_t c = 0; c < 5; ++c) {
      const auto a = cm.class_iou(c);
      const auto b = oracle::class_iou(p, t, c);
      REQUIRE(a.has_value() == b.has_value());
      if (a) CHECK(*a == doctest::Approx(*b));
    }
    CHECK(cm.miou() == doctest::Approx(oracle::miou(p, t)));
  }

  TEST_CASE("class mapping validation, reduction and composition") {
    atso::ClassMapping m{4, 2, {0, 1, 1, 0}, {}};
    m.validate();
    const auto r = atso::reduce_classes(from_rows({{0, 1, 2, 3}}, 4), m);
    CHECK(r.num_classes == 2);
    CHECK(r == from_rows({{0, 1, 1, 0}}, 2));
    CHECK_THROWS_AS((atso::ClassMapping{4, 2, {0, 1, 2, 0}, {}}.validate()), atso::ValidationError);
    CHECK_THROWS_AS((atso::ClassMapping{4, 2, {0, 1, 1}, {}}.validate()), atso::ValidationError);
    const auto id = atso::ClassMapping::identity(4);
    CHECK(atso::ClassMapping::compose(id, m) == m);
    CHECK(atso::reduce_classes(from_rows({{3, 2}}, 4), id) == from_rows({{3, 2}}, 4));
  }

  TEST_CASE("class mapping round-trips through JSON") {
    const auto dir = std::filesystem::temp_directory_path() / "atso_metrics_test";
    std::filesystem::create_directories(dir);
    atso::ClassMapping m{3, 2, {0, 1, 1}, {"bg", "thing"}};
    atso::save_class_mapping(m, dir / "m.json");
    CHECK(atso::load_class_mapping(dir / "m.json") == m);
  }

  TEST_CASE("shipped 12-to-5 mapping is valid and groups the rare classes") {
    const auto m = atso::load_class_mapping(std::filesystem::path(ATSO_SOURCE_DIR) / "data" /
                                            "class_mapping_12to5.json");
    CHECK(m.source_classes == 12);
    CHECK(m.target_classes == 5);
    CHECK(m.table[9] == m.table[1]);
    CHECK(m.table[10] == m.table[3]);
    CHECK(m.table[11] == m.table[5]);
  }

  TEST_CASE("metric report csv and mean") {
    const auto r = atso::make_mean_report("dsc", {{"a", 0.5}, {"b", 1.0}});
    CHECK(r.aggregate == doctest::Approx(0.75));
    CHECK(r.item_count == 2);
    CHECK(r.to_csv().rfind("sample_id,metric,value\n", 0) == 0);
  }

  TEST_CASE("default metric follows the class count") {
    CHECK(atso::default_metric(2) == atso::ScoreMetric::dsc);
    CHECK(atso::default_metric(5) == atso::ScoreMetric::miou);
  }
}
