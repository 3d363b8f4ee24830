#include <doctest.h>

#include "atso/datasets.hpp"
#include "atso/error.hpp"
#include "atso/learners.hpp"
#include "oracles.hpp"

namespace {

atso::ArchSpec small_arch(std::size_t hidden, std::uint32_t k) {
  atso::ArchSpec a;
  a.features.radii = {0, 1};
  a.hidden = hidden;
  a.num_classes = k;
  return a;
}

struct Fixture {
  atso::DatasetBundle bundle;
  atso::TrainSet train;

  Fixture() {
    atso::GeneratorSpec s;
    s.height = s.width = 16;
    s.labeled = 3;
    s.reference = 2;
    s.test = 2;
    s.radius_min = 2.0;
    s.radius_max = 4.0;
    s.margin = 3.0;
    bundle = atso::gen_synthetic_task(s, 31);
    for (const auto& smp : bundle.labeled()) train.items.push_back({&smp, *smp.label});
  }
};

atso::TrainHyper quick(std::size_t epochs = 3) {
  atso::TrainHyper h;
  h.epochs = epochs;
  h.batch_size = 32;
  return h;
}

}  // namespace

TEST_SUITE("learners") {
  TEST_CASE("analytic gradient matches central differences on 20 random batches") {
    atso::Rng rng(1001);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t hidden = trial % 4 == 0 ? 0 : 3 + rng.below(5);
      const auto k = static_cast<std::uint32_t>(2 + rng.below(4));
      const auto arch = small_arch(hidden, k);
      auto w = atso::init_weights(arch, rng.next_u64());
      for (auto& v : w) v += 0.3 * rng.normal();
      const auto batch = oracle::random_batch(rng, arch, 4 + rng.below(8), nullptr);
      const double wd = trial % 2 ? 1e-3 : 0.0;
      const auto analytic = atso::loss_and_gradient(arch, w, batch, nullptr, wd).gradient;
      const auto numeric = oracle::numeric_gradient(arch, w, batch, nullptr, wd);
      CHECK(oracle::relative_error(analytic, numeric) <= 1e-5);
    }
  }

  TEST_CASE("gradient of the group-summed loss matches central differences") {
    atso::Rng rng(7);
    const atso::ClassMapping m{4, 2, {0, 1, 1, 0}, {}};
    for (int trial = 0; trial < 5; ++trial) {
      const auto arch = small_arch(4, 4);
      const auto w = atso::init_weights(arch, rng.next_u64());
      const auto batch = oracle::random_batch(rng, arch, 10, &m);
      const auto analytic = atso::loss_and_gradient(arch, w, batch, &m, 1e-4).gradient;
      const auto numeric = oracle::numeric_gradient(arch, w, batch, &m, 1e-4);
      CHECK(oracle::relative_error(analytic, numeric) <= 1e-5);
    }
  }

  TEST_CASE("identity mapping leaves the loss unchanged") {
    atso::Rng rng(8);
    const auto arch = small_arch(5, 3);
    const auto w = atso::init_weights(arch, 4);
    const auto id = atso::ClassMapping::identity(3);
    auto batch = oracle::random_batch(rng, arch, 12, &id);
    const auto a = atso::loss_and_gradient(arch, w, batch, &id, 0.0);
    std::fill(batch.reduced.begin(), batch.reduced.end(), 0);
    const auto b = atso::loss_and_gradient(arch, w, batch, nullptr, 0.0);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    CHECK(oracle::relative_error(a.gradient, b.gradient) <= 1e-12);
  }

  TEST_CASE("reduce_scores sums within groups") {
    const atso::ClassMapping m{3, 2, {0, 1, 1}, {}};
    const std::vector<double> s{0.2, 0.3, 0.5, 0.6, 0.1, 0.3};
    const auto r = atso::reduce_scores(s, 3, m);
    REQUIRE(r.size() == 4);
    CHECK(r[0] == doctest::Approx(0.2));
    CHECK(r[1] == doctest::Approx(0.8));
    CHECK(r[2] == doctest::Approx(0.6));
    CHECK(r[3] == doctest::Approx(0.4));
  }

  TEST_CASE("argmax breaks ties toward the lower class") {
    const std::vector<double> s{0.5, 0.5, 0.2, 0.8};
    const auto l = atso::argmax_labels(s, 1, 2, 2);
    CHECK(l.at(0, 0) == 0);
    CHECK(l.at(0, 1) == 1);
  }

  TEST_CASE("training is deterministic in its arguments") {
    Fixture f;
    const auto arch = small_arch(6, 2);
    const auto a = atso::train(arch, f.train, atso::InitPolicy::fresh(), quick(), 5, "a");
    const auto b = atso::train(arch, f.train, atso::InitPolicy::fresh(), quick(), 5, "a");
    const auto c = atso::train(arch, f.train, atso::InitPolicy::fresh(), quick(), 6, "a");
    CHECK(a == b);
    CHECK(a.weights != c.weights);
    CHECK(atso::encode_model(a) == atso::encode_model(b));
  }

  TEST_CASE("training reduces the loss and predictions are distributions") {
    Fixture f;
    const auto m = atso::train(small_arch(6, 2), f.train, atso::InitPolicy::fresh(), quick(8), 1);
    const auto& h = m.provenance.loss_history;
    REQUIRE(h.size() == 8);
    CHECK(h.back() < h.front());
    const auto p = atso::predict(m, f.bundle.test().front().image);
    CHECK(p.label.pixel_count() == 256);
    for (std::size_t i = 0; i < p.label.pixel_count(); ++i) {
      CHECK(p.scores[2 * i] + p.scores[2 * i + 1] == doctest::Approx(1.0));
    }
  }

  TEST_CASE("provenance records ids, fingerprint and init policy") {
    Fixture f;
    const auto arch = small_arch(4, 2);
    auto parent = std::make_shared<const atso::Model>(
        atso::train(arch, f.train, atso::InitPolicy::fresh(), quick(0), 1, "p"));
    CHECK(parent->provenance.init_policy == "fresh");
    CHECK(parent->provenance.train_ids == f.train.ids());
    CHECK(parent->provenance.dataset_fingerprint == atso::fingerprint_ids(f.train.ids()));
    CHECK(parent->provenance.ground_truth_items == 3);

    const auto cont =
        atso::train(arch, f.train, atso::InitPolicy::continued(parent), quick(0), 2, "c");
    CHECK(cont.provenance.init_policy == "continued_from:p");
    CHECK(cont.weights == parent->weights);
    CHECK(cont.normalizer == parent->normalizer);

    const auto part =
        atso::train(arch, f.train, atso::InitPolicy::partial(parent, 1), quick(0), 2, "q");
    CHECK(part.provenance.init_policy == "partial_from:p:1");
    const std::size_t w1 = arch.input_dim() * 4 + 4;
    CHECK(std::equal(part.weights.begin(), part.weights.begin() + static_cast<long>(w1),
                     parent->weights.begin()));
    const auto fresh_top = atso::init_weights(arch, atso::derive_seed(2, "init"));
    CHECK(std::equal(part.weights.begin() + static_cast<long>(w1), part.weights.end(),
                     fresh_top.begin() + static_cast<long>(w1)));

    const auto full =
        atso::train(arch, f.train, atso::InitPolicy::partial(parent, 2), quick(0), 2, "r");
    CHECK(full.provenance.init_policy == "fresh");
  }

  TEST_CASE("bad inputs raise ValidationError") {
    Fixture f;
    auto hyper = quick();
    hyper.learning_rate = -1.0;
    CHECK_THROWS_AS(atso::train(small_arch(4, 2), f.train, {}, hyper, 1), atso::ValidationError);
    atso::TrainSet empty;
    CHECK_THROWS_AS(atso::train(small_arch(4, 2), empty, {}, quick(), 1), atso::ValidationError);
    auto parent = std::make_shared<const atso::Model>(
        atso::train(small_arch(4, 2), f.train, {}, quick(0), 1, "p"));
    CHECK_THROWS_AS(
        atso::train(small_arch(5, 2), f.train, atso::InitPolicy::continued(parent), quick(), 1),
        atso::ValidationError);
  }

  TEST_CASE("diverging training raises TrainingError") {
    Fixture f;
    auto hyper = quick(5);
    hyper.learning_rate = 1e200;
    CHECK_THROWS_AS(atso::train(small_arch(4, 2), f.train, {}, hyper, 1), atso::TrainingError);
  }

  TEST_CASE("models round-trip through the binary format") {
    Fixture f;
    const auto m = atso::train(small_arch(4, 2), f.train, {}, quick(2), 9, "rt");
    CHECK(atso::decode_model(atso::encode_model(m)) == m);
    auto bytes = atso::encode_model(m);
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(atso::decode_model(bytes), atso::Error);
  }

  TEST_CASE("features: radius 0 is the raw pixel and box means match the oracle") {
    atso::Rng rng(5);
    atso::Image im(6, 7, 2);
    for (auto& v : im.data) v = rng.normal();
    atso::FeatureSpec spec;
    spec.radii = {0, 2};
    spec.global_mean = spec.global_std = spec.position = false;
    const auto f = atso::compute_features(im, spec);
    const std::size_t d = spec.dim(2);
    REQUIRE(d == 4);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 7; ++c) {
        const std::size_t row = static_cast<std::size_t>(r * 7 + c) * d;
        for (std::size_t ch = 0; ch < 2; ++ch) {
          const double raw = im.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch);
          const double box = oracle::box_mean(im, r, c, 2, ch);
          CHECK(f[row + 2 * ch] == raw);
          CHECK(std::abs(f[row + 2 * ch + 1] - box) <= 1e-10);
        }
      }
    }
  }
}
