#include <doctest.h>

#include <cmath>

#include "atso/error.hpp"
#include "atso/noise_analysis.hpp"

namespace {

atso::ScoreGrid random_grid(atso::Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  atso::ScoreGrid g(h, w, c);
  for (auto& v : g.data) v = rng.uniform(-2.0, 2.0);
  return g;
}

double l1(const atso::ScoreGrid& a, const atso::ScoreGrid& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s;
}

}  // namespace

TEST_SUITE("noise_analysis") {
  TEST_CASE("one-hot grid has a single 1 per pixel") {
    atso::LabelMap m(2, 2, 3);
    m.data = {0, 1, 2, 1};
    const auto g = atso::one_hot(m);
    CHECK(g.channels == 3);
    CHECK(g.data == std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0});
  }

  TEST_CASE("estimation bound is tight when the model matches the truth") {
    atso::Rng rng(3);
    const auto y = random_grid(rng, 4, 4, 2);
    const auto ys = random_grid(rng, 4, 4, 2);
    const auto c = atso::check_estimation_bound(y, ys, ys);
    CHECK(c.holds);
    CHECK(c.lhs == doctest::Approx(c.rhs));
    const auto same = atso::check_estimation_bound(y, y, ys);
    CHECK(same.lhs == 0.0);
    CHECK(same.rhs == 0.0);
  }

  TEST_CASE("estimation bound holds on 10000 random triples") {
    atso::Rng rng(2025);
    std::size_t violations = 0;
    for (int i = 0; i < 10000; ++i) {
      const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6), c = 1 + rng.below(4);
      const auto y = random_grid(rng, h, w, c);
      const auto ys = random_grid(rng, h, w, c);
      const auto f = random_grid(rng, h, w, c);
      const auto r = atso::check_estimation_bound(y, ys, f);
      violations += !r.holds;
      CHECK(r.rhs == doctest::Approx(l1(y, ys)));
      CHECK(r.lhs == doctest::Approx(std::abs(l1(y, f) - l1(ys, f))));
    }
    CHECK(violations == 0);
  }

  TEST_CASE("bound check rejects mismatched grids") {
    CHECK_THROWS_AS(atso::check_estimation_bound(atso::ScoreGrid(2, 2, 1), atso::ScoreGrid(2, 2, 1),
                                                 atso::ScoreGrid(2, 3, 1)),
                    atso::ValidationError);
  }

  TEST_CASE("label bias of hand-made pseudo labels") {
    atso::GeneratorSpec s;
    s.height = s.width = 8;
    s.labeled = 1;
    s.reference = 3;
    s.test = 1;
    s.radius_min = 1.5;
    s.radius_max = 2.5;
    s.margin = 2.0;
    const auto b = atso::gen_synthetic_task(s, 1);
    atso::Model producer;
    producer.model_id = "m";
    atso::PseudoLabelStore store;
    const auto& r = b.reference();
    atso::LabelMap truth0, truth1;
    {
      atso::ScopedAccessPhase phase(atso::AccessPhase::evaluation);
      truth0 = b.reference_truth(r[0].id);
      truth1 = b.reference_truth(r[1].id);
    }
    store.write(r[0].id, truth0, producer, 1, 0);
    store.write(r[1].id, atso::LabelMap(8, 8, 2, 1), producer, 1, 0);
    const auto est = atso::estimate_label_bias(store, b);
    REQUIRE(est.records.size() == 2);
    CHECK(est.skipped == 1);
    CHECK(est.records[0].bias == 0.0);
    CHECK(est.records[0].magnitude == 0.0);
    std::size_t fg = 0;
    for (auto v : truth1.data) fg += v != 0;
    const double bg = static_cast<double>(64 - fg) / 64.0;
    CHECK(est.records[1].bias == doctest::Approx(bg));
    CHECK(est.records[1].magnitude == doctest::Approx(bg));
    REQUIRE(est.generations.size() == 1);
    CHECK(est.generations[0].mean_bias == doctest::Approx(bg / 2));
    CHECK(est.generations[0].pooled_magnitude == doctest::Approx(bg / 2));
    CHECK(b.audit().reads(atso::AccessPhase::training) == 0);
    CHECK(est.to_csv().rfind("sample_id,generation,producer_id,bias,magnitude\n", 0) == 0);
  }

  TEST_CASE("continual mean bias matches its closed form") {
    atso::PropagationSpec spec;
    spec.trials = 4000;
    const auto r = atso::simulate_error_propagation(spec, 17);
    const auto means = r.mean_by_generation();
    REQUIRE(means.size() == 6);
    double expect = spec.initial_bias;
    for (int g = 1; g <= spec.generations; ++g) {
      expect = spec.persistence * expect + spec.injection_mean;
      // Sd of the mean of the accumulated noise is at most injection_std / sqrt(1 - rho^2) / sqrt(n).
      const double se = spec.injection_std / std::sqrt(1 - spec.persistence * spec.persistence) /
                        std::sqrt(static_cast<double>(spec.trials));
      CHECK(std::abs(means[static_cast<std::size_t>(g)] - expect) <= 4 * se);
    }
  }

  TEST_CASE("attenuation 1 makes scratch identical to continual") {
    atso::PropagationSpec spec;
    spec.attenuation = 1.0;
    spec.trials = 50;
    const auto a = atso::simulate_error_propagation(spec, 5);
    spec.regime = atso::Regime::scratch;
    const auto b = atso::simulate_error_propagation(spec, 5);
    CHECK(a.trajectories == b.trajectories);
  }

  TEST_CASE("no initial bias and no injection stays at zero") {
    for (auto regime : {atso::Regime::continual, atso::Regime::scratch, atso::Regime::cross_subset}) {
      atso::PropagationSpec spec;
      spec.regime = regime;
      spec.initial_bias = 0.0;
      spec.injection_mean = 0.0;
      spec.injection_std = 0.0;
      spec.trials = 10;
      const auto r = atso::simulate_error_propagation(spec, 1);
      CHECK(r.final_mean() == 0.0);
      CHECK(r.final_std() == 0.0);
    }
  }

  TEST_CASE("default spec separates cross_subset from continual") {
    atso::PropagationSpec spec;
    const auto cont = atso::simulate_error_propagation(spec, 0);
    spec.regime = atso::Regime::cross_subset;
    const auto cross = atso::simulate_error_propagation(spec, 0);
    CHECK(cross.final_mean() < cont.final_mean());
    CHECK(cross.final_mean() + cross.final_ci95() < cont.final_mean() - cont.final_ci95());
    const auto csv = atso::propagation_csv({cont, cross});
    CHECK(csv.rfind("trial,generation,regime,bias\n", 0) == 0);
  }

  TEST_CASE("simulation is deterministic and validates its spec") {
    atso::PropagationSpec spec;
    spec.trials = 20;
    CHECK(atso::simulate_error_propagation(spec, 3).trajectories ==
          atso::simulate_error_propagation(spec, 3).trajectories);
    spec.persistence = 1.5;
    CHECK_THROWS_AS(atso::simulate_error_propagation(spec, 3), atso::ValidationError);
    CHECK(atso::regime_from_string("cross_subset") == atso::Regime::cross_subset);
    CHECK_THROWS_AS(atso::regime_from_string("other"), atso::ValidationError);
  }
}
