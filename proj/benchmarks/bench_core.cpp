#include <benchmark/benchmark.h>

#include "atso/datasets.hpp"
#include "atso/learners.hpp"
#include "atso/metrics.hpp"
#include "atso/noise_analysis.hpp"

namespace {

atso::LabelMap random_mask(atso::Rng& rng, std::size_t side, std::uint32_t k) {
  atso::LabelMap m(side, side, k);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(rng.below(k));
  return m;
}

void BM_Dsc(benchmark::State& state) {
  atso::Rng rng(1);
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto a = random_mask(rng, side, 2), b = random_mask(rng, side, 2);
  for (auto _ : state) benchmark::DoNotOptimize(atso::dsc(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_Dsc)->Arg(32)->Arg(128);

void BM_Miou(benchmark::State& state) {
  atso::Rng rng(2);
  const auto a = random_mask(rng, 64, 12), b = random_mask(rng, 64, 12);
  for (auto _ : state) benchmark::DoNotOptimize(atso::miou(a, b));
}
BENCHMARK(BM_Miou);

void BM_GenerateTask(benchmark::State& state) {
  atso::GeneratorSpec spec;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(atso::gen_synthetic_task(spec, seed++));
}
BENCHMARK(BM_GenerateTask)->Unit(benchmark::kMillisecond);

void BM_Features(benchmark::State& state) {
  const auto bundle = atso::gen_synthetic_task(atso::GeneratorSpec{}, 3);
  const atso::FeatureSpec spec;
  for (auto _ : state) {
    benchmark::DoNotOptimize(atso::compute_features(bundle.test().front().image, spec));
  }
}
BENCHMARK(BM_Features);

void BM_LossAndGradient(benchmark::State& state) {
  atso::Rng rng(4);
  atso::ArchSpec arch;
  const auto w = atso::init_weights(arch, 5);
  atso::Batch batch;
  for (std::size_t i = 0; i < 64 * arch.input_dim(); ++i) batch.x.push_back(rng.normal());
  for (std::size_t i = 0; i < 64; ++i) {
    batch.y.push_back(static_cast<std::uint32_t>(rng.below(2)));
    batch.reduced.push_back(0);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(atso::loss_and_gradient(arch, w, batch, nullptr, 1e-4));
  }
}
BENCHMARK(BM_LossAndGradient);

void BM_TrainStudent(benchmark::State& state) {
  const auto bundle = atso::gen_synthetic_task(atso::GeneratorSpec{}, 6);
  atso::TrainSet ts;
  for (const auto& s : bundle.labeled()) ts.items.push_back({&s, *s.label});
  atso::ArchSpec arch;
  atso::TrainHyper hyper;
  for (auto _ : state) {
    benchmark::DoNotOptimize(atso::train(arch, ts, atso::InitPolicy::fresh(), hyper, 7));
  }
}
BENCHMARK(BM_TrainStudent)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  const auto bundle = atso::gen_synthetic_task(atso::GeneratorSpec{}, 8);
  atso::TrainSet ts;
  for (const auto& s : bundle.labeled()) ts.items.push_back({&s, *s.label});
  atso::TrainHyper hyper;
  hyper.epochs = 1;
  const auto m = atso::train(atso::ArchSpec{}, ts, atso::InitPolicy::fresh(), hyper, 9);
  for (auto _ : state) benchmark::DoNotOptimize(atso::predict(m, bundle.test().front().image));
}
BENCHMARK(BM_Predict);

void BM_Propagation(benchmark::State& state) {
  atso::PropagationSpec spec;
  spec.regime = atso::Regime::cross_subset;
  for (auto _ : state) benchmark::DoNotOptimize(atso::simulate_error_propagation(spec, 0));
}
BENCHMARK(BM_Propagation)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
