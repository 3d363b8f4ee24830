// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "atso/error.hpp"
#include "atso/experiment.hpp"
#include "atso/learners.hpp"
#include "atso/metrics.hpp"
#include "atso/noise_analysis.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> check;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path config_path(const char* name) { return fs::path(ATSO_SOURCE_DIR) / "configs" / name; }

atso::ExperimentConfig load_config(const char* name) {
  return atso::parse_config(config_path(name));
}

// Sweeps shared by several criteria are run once.
std::optional<atso::RunReportBundle> standard_sweep;
double standard_sweep_seconds = 0.0;

const atso::RunReportBundle& get_standard_sweep() {
  if (!standard_sweep) {
    const auto start = std::chrono::steady_clock::now();
    auto cfg = load_config("standard.json");
    cfg.sweep.num_seeds = 10;
    standard_sweep = atso::sweep(cfg);
    standard_sweep_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return *standard_sweep;
}

/// Per-seed value of one report cell, in seed order.
std::vector<double> per_seed(const atso::RunReportBundle& b, atso::Mode mode,
                             const std::string& row, const std::string& split) {
  std::vector<double> out;
  const std::string metric = atso::to_string(atso::default_metric(b.num_classes));
  for (const auto& r : b.runs) {
    if (r.mode != mode) continue;
    for (const auto& c : r.cells()) {
      if (c.row == row && c.split == split && c.metric == metric) out.push_back(c.value);
    }
  }
  return out;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------

Outcome metric_oracle() {
  atso::Rng rng(20240601);
  double worst = 0.0;
  const int n = 300;
  for (int i = 0; i < n; ++i) {
    const auto h = 1 + rng.below(64), w = 1 + rng.below(64);
    const auto k = static_cast<std::uint32_t>(2 + rng.below(7));
    const auto p = oracle::random_mask(rng, h, w, k);
    const auto t = oracle::random_mask(rng, h, w, k);
    worst = std::max(worst, std::abs(atso::dsc(p, t) - oracle::dsc(p, t)));
    for (std::uint32_t c = 0; c < k; ++c) {
      const auto a = atso::class_iou(p, t, c);
      const auto b = oracle::class_iou(p, t, c);
      if (a.has_value() != b.has_value()) return {false, "class_iou presence differs"};
      if (a) worst = std::max(worst, std::abs(*a - *b));
    }
    worst = std::max(worst, std::abs(atso::miou(p, t) - oracle::miou(p, t)));
  }
  // Batches of binary masks for the pooled score.
  for (int i = 0; i < 50; ++i) {
    std::vector<atso::LabelMap> ps, ts;
    const auto h = 1 + rng.below(64), w = 1 + rng.below(64);
    for (std::size_t j = 0; j < 1 + rng.below(6); ++j) {
      ps.push_back(oracle::random_mask(rng, h, w, 2));
      ts.push_back(oracle::random_mask(rng, h, w, 2));
    }
    worst = std::max(worst, std::abs(atso::global_dsc(ps, ts) - oracle::global_dsc(ps, ts)));
  }
  return {worst <= 1e-12, fmt("max |err| %.1e over %d mask pairs and 50 batches", worst, n)};
}

Outcome estimation_bound() {
  atso::Rng rng(77);
  std::size_t violations = 0;
  double tightest = 1e300;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t h = 1 + rng.below(8), w = 1 + rng.below(8), c = 1 + rng.below(5);
    atso::ScoreGrid y(h, w, c), ys(h, w, c), f(h, w, c);
    for (auto* g : {&y, &ys, &f}) {
      for (auto& v : g->data) v = rng.uniform(-1.0, 1.0);
    }
    const auto r = atso::check_estimation_bound(y, ys, f);
    if (!(r.lhs <= r.rhs + 1e-12)) ++violations;
    tightest = std::min(tightest, r.rhs - r.lhs);
  }
  return {violations == 0, fmt("%zu violations in 10000 triples (min slack %.2e)", violations,
                               tightest)};
}

Outcome ledger_audit() {
  auto cfg = load_config("standard.json");
  cfg.T = 3;
  const auto data = atso::build_data(cfg, cfg.seed);
  const auto r = atso::run(atso::Mode::atso, data.target, 3, cfg.hyper, cfg.seed);
  const auto& part = *r.partition;
  std::size_t ok = 0, total = 0;
  for (const auto& e : r.store.history()) {
    ++total;
    const auto& subset = part.subset(e.subset);
    const std::set<std::string> ids(subset.begin(), subset.end());
    const auto it = r.models.find(e.producer_id);
    if (it == r.models.end() || !ids.count(e.sample_id)) continue;
    const auto& train = it->second->provenance.train_ids;
    if (std::none_of(train.begin(), train.end(), [&](const std::string& id) { return ids.count(id); })) {
      ++ok;
    }
  }
  std::vector<std::string> want;
  for (const auto& s : data.target.labeled()) want.push_back(s.id);
  want.insert(want.end(), part.subset1_ids.begin(), part.subset1_ids.end());
  want.insert(want.end(), part.subset2_ids.begin(), part.subset2_ids.end());
  std::sort(want.begin(), want.end());
  const auto& merge = r.final_model->provenance;
  const bool merge_ok =
      merge.train_ids == want && merge.dataset_fingerprint == atso::fingerprint_ids(want);
  const std::size_t expected = data.target.reference().size() * 4;
  return {total == expected && ok == total && merge_ok && r.audit.ok(),
          fmt("%zu/%zu ledger entries obey the cross-subset rule (expected %zu); merge set %s",
              ok, total, expected, merge_ok ? "= S u R1 u R2" : "MISMATCH")};
}

Outcome lazy_plateau() {
  const auto& b = get_standard_sweep();
  const auto g2 = per_seed(b, atso::Mode::self_learning, "G2", "reference");
  const auto g3 = per_seed(b, atso::Mode::self_learning, "G3", "reference");
  int plateau = 0;
  std::string deltas;
  for (std::size_t i = 0; i < g2.size(); ++i) {
    const double d = 100.0 * (g3[i] - g2[i]);
    plateau += d < 0.5;
    deltas += fmt("%s%+.2f", deltas.empty() ? "" : " ", d);
  }
  return {g2.size() == 10 && plateau >= 7,
          fmt("%d/10 seeds with G3-G2 < 0.5 on R [%s] (sweep %.0f s)", plateau, deltas.c_str(),
              standard_sweep_seconds)};
}

Outcome mode_ordering() {
  const auto& b = get_standard_sweep();
  const double sl = 100.0 * mean(per_seed(b, atso::Mode::self_learning, "G3", "test"));
  const double st = 100.0 * mean(per_seed(b, atso::Mode::stso, "G3", "test"));
  const double at = 100.0 * mean(per_seed(b, atso::Mode::atso, "final", "test"));
  const bool pass = at > st && st > sl && at - sl >= 2.0 && at - st >= 0.5;
  return {pass, fmt("E: ATSO %.2f, STSO %.2f, self-learning %.2f (ATSO-SL %+.2f, ATSO-STSO %+.2f)",
                    at, st, sl, at - sl, at - st)};
}

Outcome transfer_gain() {
  auto cfg = load_config("transfer.json");
  cfg.sweep.num_seeds = 10;
  cfg.modes = {atso::Mode::atso};
  const auto b = atso::sweep(cfg);
  const auto g0 = per_seed(b, atso::Mode::atso, "G0", "test");
  const auto fin = per_seed(b, atso::Mode::atso, "final", "test");
  std::vector<double> gain;
  for (std::size_t i = 0; i < g0.size(); ++i) gain.push_back(100.0 * (fin[i] - g0[i]));
  const double g = mean(gain);
  return {g0.size() == 10 && g >= 3.0,
          fmt("ATSO final %.2f vs direct transfer %.2f: gain %+.2f points", 100.0 * mean(fin),
              100.0 * mean(g0), g)};
}

Outcome reduced_staging() {
  auto cfg = load_config("reduced.json");
  cfg.sweep.num_seeds = 10;
  const auto b = atso::sweep(cfg);
  std::vector<double> staged, direct;
  for (const auto& r : b.reduced) {
    staged.push_back(r.row("ATSO_{k->K}").miou);
    direct.push_back(r.row("ATSO_K").miou);
  }
  const double s = 100.0 * mean(staged), d = 100.0 * mean(direct);
  return {b.reduced.size() == 10 && b.num_classes == 12 && s >= d,
          fmt("K=%u mIoU: staged ATSO_{k->K} %.2f vs direct ATSO_K %.2f (%+.2f)", b.num_classes,
              s, d, s - d)};
}

Outcome monte_carlo() {
  atso::PropagationSpec spec;
  spec.trials = 500;
  spec.regime = atso::Regime::continual;
  const auto cont = atso::simulate_error_propagation(spec, 0);
  spec.regime = atso::Regime::cross_subset;
  const auto cross = atso::simulate_error_propagation(spec, 0);
  const double c_hi = cross.final_mean() + cross.final_ci95();
  const double k_lo = cont.final_mean() - cont.final_ci95();
  return {cross.final_mean() < cont.final_mean() && c_hi < k_lo,
          fmt("final bias cross_subset %.4f +- %.4f vs continual %.4f +- %.4f",
              cross.final_mean(), cross.final_ci95(), cont.final_mean(), cont.final_ci95())};
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).generic_string()] =
        std::string(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

void write_artifacts(const atso::RunReportBundle& b, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const auto& r : b.runs) r.save(dir / atso::to_string(r.mode));
  for (const char* layout : {"table1", "appendixA", "csv", "json"}) {
    atso::render_report(b, layout, dir);
  }
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "atso_acceptance_determinism";
  auto cfg = load_config("standard.json");
  cfg.hyper.concurrent = true;
  write_artifacts(atso::run_experiment(cfg, cfg.seed), root / "concurrent");
  cfg.hyper.concurrent = false;
  write_artifacts(atso::run_experiment(cfg, cfg.seed), root / "sequential");
  const auto a = read_tree(root / "concurrent");
  const auto b = read_tree(root / "sequential");
  std::size_t compared = 0;
  std::vector<std::string> diffs;
  for (const auto& [name, bytes] : a) {
    // Wall-clock seconds are the one intentionally nondeterministic artifact.
    if (fs::path(name).filename() == "timing.csv") continue;
    ++compared;
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) diffs.push_back(name);
  }
  if (a.size() != b.size()) diffs.push_back("file sets differ");

  // A repeated sweep, sequential this time, against the shared concurrent one.
  auto scfg = load_config("standard.json");
  scfg.sweep.num_seeds = 10;
  scfg.hyper.concurrent = false;
  const auto again = atso::sweep(scfg);
  const auto& first = get_standard_sweep();
  const bool sweep_same = again.to_json() == first.to_json() &&
                          again.runs_csv() == first.runs_csv() &&
                          again.aggregates_csv() == first.aggregates_csv();
  if (!sweep_same) diffs.push_back("10-seed sweep");
  std::string list;
  for (const auto& d : diffs) list += " " + d;
  return {diffs.empty() && compared > 0,
          fmt("%zu run artifacts and a 10-seed sweep compared, concurrent vs sequential; %zu "
              "differ%s",
              compared, diffs.size(), list.c_str())};
}

Outcome gradient_check() {
  atso::Rng rng(4242);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    atso::ArchSpec arch;
    arch.features.radii = {0, 1};
    arch.hidden = trial % 5 == 0 ? 0 : 2 + rng.below(8);
    arch.num_classes = static_cast<std::uint32_t>(2 + rng.below(5));
    auto w = atso::init_weights(arch, rng.next_u64());
    for (auto& v : w) v += 0.2 * rng.normal();
    const auto batch = oracle::random_batch(rng, arch, 3 + rng.below(10), nullptr);
    const double wd = trial % 2 ? 1e-3 : 0.0;
    const auto analytic = atso::loss_and_gradient(arch, w, batch, nullptr, wd).gradient;
    const auto numeric = oracle::numeric_gradient(arch, w, batch, nullptr, wd);
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  }
  return {worst <= 1e-5, fmt("max relative error %.2e over 20 random batches", worst)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "metric oracle equivalence", 10, metric_oracle},
      {2, "estimation error bound", 10, estimation_bound},
      {3, "ledger audit", 120, ledger_audit},
      {4, "lazy-learning plateau", 900, lazy_plateau},
      {5, "mode ordering", 1800, mode_ordering},
      {6, "transfer gain", 1800, transfer_gain},
      {7, "reduced-class staging", 1800, reduced_staging},
      {8, "Monte Carlo separation", 60, monte_carlo},
      {9, "determinism", 1e9, determinism},
      {10, "gradient check", 10, gradient_check},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    // The shared sweep is charged to every criterion that reads it.
    if ((c.id == 4 || c.id == 5) && standard_sweep) secs = std::max(secs, standard_sweep_seconds);
    const bool in_budget = secs < c.budget_s;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::printf("%s [%2d] %s: %s (%.1f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
