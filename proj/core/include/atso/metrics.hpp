#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atso/datasets.hpp"
#include "atso/types.hpp"

namespace atso {

/// Integer counts behind a Dice score.
struct DiceCounts {
  std::uint64_t intersection = 0;
  std::uint64_t pred = 0;
  std::uint64_t truth = 0;

  double score() const noexcept;
  DiceCounts& operator+=(const DiceCounts& o) noexcept;
};

/// Foreground is every non-zero pixel, or exactly `foreground_class` when set.
DiceCounts dice_counts(const LabelMap& pred, const LabelMap& truth,
                       std::optional<std::uint32_t> foreground_class = std::nullopt);

/// 2|Y∩Z| / (|Y|+|Z|). Both masks empty gives 1, exactly one empty gives 0.
double dsc(const LabelMap& pred, const LabelMap& truth,
           std::optional<std::uint32_t> foreground_class = std::nullopt);

/// Dice over all cases pooled into one volume.
double global_dsc(std::span<const LabelMap> preds, std::span<const LabelMap> truths,
                  std::optional<std::uint32_t> foreground_class = std::nullopt);

enum class AbsentClassPolicy { exclude, count_as_zero };

/// IoU of one class; nullopt when the class is absent from both maps.
std::optional<double> class_iou(const LabelMap& pred, const LabelMap& truth,
                                std::uint32_t class_id);

double miou(const LabelMap& pred, const LabelMap& truth,
            AbsentClassPolicy policy = AbsentClassPolicy::exclude);

/// K x K confusion counts, `at(truth, pred)`. Accumulates over many maps for
/// dataset-level class IoU.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::uint32_t num_classes);

  void add(const LabelMap& pred, const LabelMap& truth);
  std::uint64_t at(std::uint32_t truth, std::uint32_t pred) const {
    return counts_[truth * k_ + pred];
  }
  std::uint32_t num_classes() const noexcept { return k_; }
  std::optional<double> class_iou(std::uint32_t c) const;
  double miou(AbsentClassPolicy policy = AbsentClassPolicy::exclude) const;
  std::uint64_t total() const noexcept;

 private:
  std::uint32_t k_;
  std::vector<std::uint64_t> counts_;
};

/// Total map from source classes onto target classes.
struct ClassMapping {
  std::uint32_t source_classes = 0;
  std::uint32_t target_classes = 0;
  std::vector<std::uint32_t> table;
  std::vector<std::string> target_names;  ///< optional, for reports

  void validate() const;
  static ClassMapping identity(std::uint32_t k);
  /// `second` after `first`.
  static ClassMapping compose(const ClassMapping& first, const ClassMapping& second);

  bool operator==(const ClassMapping&) const = default;
};

LabelMap reduce_classes(const LabelMap& label, const ClassMapping& mapping);

/// JSON: {"source_classes": K, "target_classes": k, "table": [...],
/// "target_names": [...]}.
ClassMapping load_class_mapping(const std::filesystem::path& path);
void save_class_mapping(const ClassMapping& mapping, const std::filesystem::path& path);

/// Which score "accuracy" means for a task: Dice of the foreground for binary
/// tasks, mean IoU otherwise.
enum class ScoreMetric { dsc, miou };

ScoreMetric default_metric(std::uint32_t num_classes) noexcept;
double score(const LabelMap& pred, const LabelMap& truth, ScoreMetric metric,
             AbsentClassPolicy policy = AbsentClassPolicy::exclude);
const char* to_string(ScoreMetric m) noexcept;

struct MetricReport {
  std::string metric_name;
  std::map<std::string, double> per_item;
  double aggregate = 0.0;
  std::string aggregation = "mean";  ///< "mean" or "global"
  std::size_t item_count = 0;

  /// `sample_id,metric,value` with a header row.
  std::string to_csv() const;
  std::string to_json() const;
};

MetricReport make_mean_report(std::string metric_name, std::map<std::string, double> per_item);

using Predictor = std::function<LabelMap(const Image&)>;

/// Cross-subset evaluation of the two subset models of one generation.
/// `cells[m][s]` is model m+1 scored on subset s+1.
struct CrossEvalMatrix {
  int generation = 0;
  std::array<std::array<double, 2>, 2> cells{};
  /// Score of the merged pseudo-label set: subset 1 labeled by model 2 and
  /// subset 2 by model 1, averaged over all of R.
  double merged_reference_score = 0.0;
  double test_score = 0.0;

  static std::string csv_header();
  /// generation, M1@R1, M2@R1, M1@R2, M2@R2, merged-R, test; scores in %.
  std::string csv_row() const;
};

/// Evaluates both predictors on both subsets (evaluation-scoped truth
/// access), the merged reference score and the mean test score of the two.
CrossEvalMatrix cross_eval_matrix(const Predictor& model1, const Predictor& model2,
                                  const PartitionSpec& partition, const DatasetBundle& bundle,
                                  int generation, ScoreMetric metric);

}  // namespace atso
