#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atso/datasets.hpp"
#include "atso/orchestrator.hpp"

namespace atso {

/// Pseudo label vs ground truth for one ledger entry. Foreground is any
/// nonzero class.
struct NoiseRecord {
  std::string sample_id;
  int generation = 0;
  std::string producer_id;
  std::uint32_t num_classes = 0;
  std::vector<std::uint64_t> confusion;  ///< truth-major, K x K pixel counts
  std::uint64_t pixels = 0;
  /// (pseudo count - truth count) / pixels per class.
  std::vector<double> class_error;
  double bias = 0.0;       ///< signed foreground error rate
  double magnitude = 0.0;  ///< mismatched pixels / pixels
};

struct GenerationNoise {
  int generation = 0;
  std::size_t samples = 0;
  double mean_bias = 0.0;
  double mean_magnitude = 0.0;
  /// Mismatches over all pixels of the generation (1 - pixel accuracy).
  double pooled_magnitude = 0.0;
};

struct NoiseEstimate {
  std::vector<NoiseRecord> records;  ///< ledger order
  std::vector<GenerationNoise> generations;
  /// Reference samples the store never labeled.
  std::size_t skipped = 0;

  /// `sample_id,generation,producer_id,bias,magnitude`.
  std::string to_csv() const;
};

/// Reads reference truth under the evaluation phase.
NoiseEstimate estimate_label_bias(const PseudoLabelStore& store, const DatasetBundle& bundle);

/// Per-pixel score vectors, row-major `height x width x channels`.
struct ScoreGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  ScoreGrid() = default;
  ScoreGrid(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}
  bool same_shape(const ScoreGrid& o) const noexcept {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

/// One-hot scores of a label map.
ScoreGrid one_hot(const LabelMap& label);

/// L1 distance over the whole grid.
double l1_distance(const ScoreGrid& a, const ScoreGrid& b);

struct BoundCheck {
  double lhs = 0.0;  ///< | |y - f| - |y* - f| |
  double rhs = 0.0;  ///< |y - y*|
  bool holds = false;
};

/// Distances are L1; holds when lhs <= rhs + 1e-12.
BoundCheck check_estimation_bound(const ScoreGrid& y, const ScoreGrid& y_star, const ScoreGrid& f);

enum class Regime { continual, scratch, cross_subset };

const char* to_string(Regime r) noexcept;
Regime regime_from_string(const std::string& s);

/// Stylized bias dynamics. Per generation a student inherits
/// `persistence * b` of its teacher's bias b and receives fresh noise
/// drawn from N(injection_mean, injection_std). A scratch student keeps only
/// `attenuation` of the inherited part; a cross-subset student inherits from
/// the other subset's chain, scaled further by `cross_transfer`.
struct PropagationSpec {
  Regime regime = Regime::continual;
  int generations = 5;
  double initial_bias = 0.05;
  double injection_mean = 0.04;
  double injection_std = 0.02;
  double persistence = 0.6;
  double attenuation = 0.6;
  double cross_transfer = 0.5;
  std::size_t trials = 500;

  void validate() const;
};

struct PropagationResult {
  PropagationSpec spec;
  std::uint64_t seed = 0;
  /// trials x (generations + 1); entry 0 is the initial bias.
  std::vector<std::vector<double>> trajectories;

  double final_mean() const;
  double final_std() const;
  /// Half-width of the normal 95% interval of the final mean.
  double final_ci95() const;
  std::vector<double> mean_by_generation() const;
};

/// Trial i draws from derive_seed(seed, i), independent of the regime.
PropagationResult simulate_error_propagation(const PropagationSpec& spec, std::uint64_t seed);

/// `trial,generation,regime,bias` over all results.
std::string propagation_csv(const std::vector<PropagationResult>& results);
/// Per-regime final means, stds, CIs and per-generation means.
std::string propagation_summary_json(const std::vector<PropagationResult>& results);

}  // namespace atso
