#include "atso/noise_analysis.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "atso/error.hpp"
#include "atso/rng.hpp"
#include "json_codec.hpp"

namespace atso {

using detail::Json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

NoiseRecord make_record(const LedgerEntry& e, const LabelMap& truth) {
  const LabelMap& pseudo = *e.label;
  if (!pseudo.same_shape(truth)) {
    throw ValidationError("store", "pseudo label for '" + e.sample_id + "' has wrong dims");
  }
  const std::uint32_t K = std::max(pseudo.num_classes, truth.num_classes);
  NoiseRecord r;
  r.sample_id = e.sample_id;
  r.generation = e.generation;
  r.producer_id = e.producer_id;
  r.num_classes = K;
  r.confusion.assign(static_cast<std::size_t>(K) * K, 0);
  r.pixels = pseudo.data.size();
  std::int64_t fg_diff = 0;
  std::uint64_t mismatched = 0;
  std::vector<std::int64_t> diff(K, 0);
  for (std::size_t i = 0; i < pseudo.data.size(); ++i) {
    const auto p = pseudo.data[i];
    const auto t = truth.data[i];
    ++r.confusion[static_cast<std::size_t>(t) * K + p];
    ++diff[p];
    --diff[t];
    fg_diff += (p != 0) - (t != 0);
    mismatched += p != t;
  }
  const double n = static_cast<double>(r.pixels);
  for (auto d : diff) r.class_error.push_back(static_cast<double>(d) / n);
  r.bias = static_cast<double>(fg_diff) / n;
  r.magnitude = static_cast<double>(mismatched) / n;
  return r;
}

}  // namespace

NoiseEstimate estimate_label_bias(const PseudoLabelStore& store, const DatasetBundle& bundle) {
  if (!bundle.has_reference_truth()) {
    throw ValidationError("bundle", "reference ground truth is not available");
  }
  NoiseEstimate out;
  ScopedAccessPhase phase(AccessPhase::evaluation);
  struct Acc {
    std::size_t n = 0;
    double bias = 0.0, magnitude = 0.0;
    std::uint64_t mismatched = 0, pixels = 0;
  };
  std::map<int, Acc> acc;
  for (const auto& e : store.history()) {
    if (!bundle.find(e.sample_id)) continue;
    NoiseRecord r = make_record(e, bundle.reference_truth(e.sample_id));
    Acc& a = acc[r.generation];
    ++a.n;
    a.bias += r.bias;
    a.magnitude += r.magnitude;
    a.pixels += r.pixels;
    for (std::uint32_t t = 0; t < r.num_classes; ++t) {
      for (std::uint32_t p = 0; p < r.num_classes; ++p) {
        if (p != t) a.mismatched += r.confusion[static_cast<std::size_t>(t) * r.num_classes + p];
      }
    }
    out.records.push_back(std::move(r));
  }
  for (const auto& s : bundle.reference()) {
    if (!store.find(s.id)) ++out.skipped;
  }
  for (const auto& [g, a] : acc) {
    out.generations.push_back({g, a.n, a.bias / static_cast<double>(a.n),
                               a.magnitude / static_cast<double>(a.n),
                               static_cast<double>(a.mismatched) / static_cast<double>(a.pixels)});
  }
  return out;
}

std::string NoiseEstimate::to_csv() const {
  std::string out = "sample_id,generation,producer_id,bias,magnitude\n";
  for (const auto& r : records) {
    out += r.sample_id + "," + std::to_string(r.generation) + "," + r.producer_id + "," +
           fmt(r.bias) + "," + fmt(r.magnitude) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

ScoreGrid one_hot(const LabelMap& label) {
  ScoreGrid g(label.height, label.width, label.num_classes);
  for (std::size_t i = 0; i < label.data.size(); ++i) {
    g.data[i * label.num_classes + label.data[i]] = 1.0;
  }
  return g;
}

double l1_distance(const ScoreGrid& a, const ScoreGrid& b) {
  if (!a.same_shape(b) || a.data.size() != b.data.size()) {
    throw ValidationError("grid", "shape mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s;
}

BoundCheck check_estimation_bound(const ScoreGrid& y, const ScoreGrid& y_star,
                                  const ScoreGrid& f) {
  if (!y.same_shape(y_star) || !y.same_shape(f)) {
    throw ValidationError("grid", "y, y_star and f must share a shape");
  }
  BoundCheck b;
  b.lhs = std::abs(l1_distance(y, f) - l1_distance(y_star, f));
  b.rhs = l1_distance(y, y_star);
  b.holds = b.lhs <= b.rhs + 1e-12;
  return b;
}

// ---------------------------------------------------------------------------

const char* to_string(Regime r) noexcept {
  switch (r) {
    case Regime::continual:
      return "continual";
    case Regime::scratch:
      return "scratch";
    case Regime::cross_subset:
      return "cross_subset";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  if (s == "continual") return Regime::continual;
  if (s == "scratch") return Regime::scratch;
  if (s == "cross_subset") return Regime::cross_subset;
  throw ValidationError("propagation.regime",
                        "expected continual|scratch|cross_subset, got '" + s + "'");
}

void PropagationSpec::validate() const {
  auto unit = [](double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(std::string("propagation.") + field, "must lie in [0, 1]");
    }
  };
  unit(persistence, "persistence");
  unit(attenuation, "attenuation");
  unit(cross_transfer, "cross_transfer");
  if (generations < 0) throw ValidationError("propagation.generations", "must be >= 0");
  if (trials < 1) throw ValidationError("propagation.trials", "must be >= 1");
  if (!(injection_std >= 0.0)) throw ValidationError("propagation.injection_std", "must be >= 0");
  if (!std::isfinite(initial_bias) || !std::isfinite(injection_mean)) {
    throw ValidationError("propagation.initial_bias", "must be finite");
  }
}

PropagationResult simulate_error_propagation(const PropagationSpec& spec, std::uint64_t seed) {
  spec.validate();
  PropagationResult out;
  out.spec = spec;
  out.seed = seed;
  out.trajectories.reserve(spec.trials);
  for (std::size_t trial = 0; trial < spec.trials; ++trial) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(trial)));
    // The second stream only feeds the other subset chain.
    Rng other(derive_seed(derive_seed(seed, "other-subset"), static_cast<std::uint64_t>(trial)));
    std::vector<double> traj{spec.initial_bias};
    double b = spec.initial_bias;
    double b2 = spec.initial_bias;
    for (int g = 0; g < spec.generations; ++g) {
      const double eta = rng.normal(spec.injection_mean, spec.injection_std);
      switch (spec.regime) {
        case Regime::continual:
          b = spec.persistence * b + eta;
          traj.push_back(b);
          break;
        case Regime::scratch:
          b = spec.attenuation * spec.persistence * b + eta;
          traj.push_back(b);
          break;
        case Regime::cross_subset: {
          const double eta2 = other.normal(spec.injection_mean, spec.injection_std);
          const double k = spec.attenuation * spec.persistence * spec.cross_transfer;
          const double next1 = k * b2 + eta;
          const double next2 = k * b + eta2;
          b = next1;
          b2 = next2;
          traj.push_back(0.5 * (b + b2));
          break;
        }
      }
    }
    out.trajectories.push_back(std::move(traj));
  }
  return out;
}

double PropagationResult::final_mean() const {
  double s = 0.0;
  for (const auto& t : trajectories) s += t.back();
  return s / static_cast<double>(trajectories.size());
}

double PropagationResult::final_std() const {
  if (trajectories.size() < 2) return 0.0;
  const double m = final_mean();
  double s = 0.0;
  for (const auto& t : trajectories) s += (t.back() - m) * (t.back() - m);
  return std::sqrt(s / static_cast<double>(trajectories.size() - 1));
}

double PropagationResult::final_ci95() const {
  return 1.959963984540054 * final_std() / std::sqrt(static_cast<double>(trajectories.size()));
}

std::vector<double> PropagationResult::mean_by_generation() const {
  std::vector<double> m(trajectories.front().size(), 0.0);
  for (const auto& t : trajectories) {
    for (std::size_t g = 0; g < t.size(); ++g) m[g] += t[g];
  }
  for (auto& v : m) v /= static_cast<double>(trajectories.size());
  return m;
}

std::string propagation_csv(const std::vector<PropagationResult>& results) {
  std::string out = "trial,generation,regime,bias\n";
  for (const auto& r : results) {
    const std::string regime = to_string(r.spec.regime);
    for (std::size_t i = 0; i < r.trajectories.size(); ++i) {
      for (std::size_t g = 0; g < r.trajectories[i].size(); ++g) {
        out += std::to_string(i) + "," + std::to_string(g) + "," + regime + "," +
               fmt(r.trajectories[i][g]) + "\n";
      }
    }
  }
  return out;
}

std::string propagation_summary_json(const std::vector<PropagationResult>& results) {
  Json regimes = Json::array();
  for (const auto& r : results) {
    const double m = r.final_mean();
    const double ci = r.final_ci95();
    regimes.push_back({{"regime", to_string(r.spec.regime)},
                       {"trials", r.spec.trials},
                       {"generations", r.spec.generations},
                       {"final_mean", m},
                       {"final_std", r.final_std()},
                       {"final_ci95", {m - ci, m + ci}},
                       {"mean_by_generation", r.mean_by_generation()}});
  }
  return Json{{"regimes", regimes}}.dump(2) + "\n";
}

}  // namespace atso
