#include "atso/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "atso/error.hpp"
#include "json_codec.hpp"

namespace atso {

namespace {

void require_same_shape(const LabelMap& a, const LabelMap& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ValidationError("mask", "dimension mismatch: " + std::to_string(a.height) + "x" +
                                      std::to_string(a.width) + " vs " +
                                      std::to_string(b.height) + "x" + std::to_string(b.width));
  }
  if (a.data.size() != a.height * a.width || b.data.size() != b.height * b.width) {
    throw ValidationError("mask", "data length does not match dims");
  }
}

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double DiceCounts::score() const noexcept {
  const std::uint64_t denom = pred + truth;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(intersection) / static_cast<double>(denom);
}

DiceCounts& DiceCounts::operator+=(const DiceCounts& o) noexcept {
  intersection += o.intersection;
  pred += o.pred;
  truth += o.truth;
  return *this;
}

DiceCounts dice_counts(const LabelMap& pred, const LabelMap& truth,
                       std::optional<std::uint32_t> foreground_class) {
  require_same_shape(pred, truth);
  DiceCounts c;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool y = foreground_class ? pred.data[i] == *foreground_class : pred.data[i] != 0;
    const bool z = foreground_class ? truth.data[i] == *foreground_class : truth.data[i] != 0;
    c.pred += y;
    c.truth += z;
    c.intersection += (y && z);
  }
  return c;
}

double dsc(const LabelMap& pred, const LabelMap& truth,
           std::optional<std::uint32_t> foreground_class) {
  return dice_counts(pred, truth, foreground_class).score();
}

double global_dsc(std::span<const LabelMap> preds, std::span<const LabelMap> truths,
                  std::optional<std::uint32_t> foreground_class) {
  if (preds.size() != truths.size()) {
    throw ValidationError("global_dsc", "got " + std::to_string(preds.size()) +
                                            " predictions and " + std::to_string(truths.size()) +
                                            " truths");
  }
  DiceCounts total;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    total += dice_counts(preds[i], truths[i], foreground_class);
  }
  return total.score();
}

std::optional<double> class_iou(const LabelMap& pred, const LabelMap& truth,
                                std::uint32_t class_id) {
  require_same_shape(pred, truth);
  if (class_id >= pred.num_classes || class_id >= truth.num_classes) {
    throw ValidationError("class_id", std::to_string(class_id) + " >= num_classes " +
                                          std::to_string(pred.num_classes));
  }
  std::uint64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] == class_id;
    const bool t = truth.data[i] == class_id;
    inter += (p && t);
    uni += (p || t);
  }
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double miou(const LabelMap& pred, const LabelMap& truth, AbsentClassPolicy policy) {
  require_same_shape(pred, truth);
  if (pred.num_classes != truth.num_classes) {
    throw ValidationError("num_classes", "pred has " + std::to_string(pred.num_classes) +
                                             ", truth has " + std::to_string(truth.num_classes));
  }
  ConfusionMatrix cm(pred.num_classes);
  cm.add(pred, truth);
  return cm.miou(policy);
}

ConfusionMatrix::ConfusionMatrix(std::uint32_t num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  if (num_classes < 2 || num_classes > 256) {
    throw ValidationError("num_classes", "must be in [2, 256]");
  }
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& truth) {
  require_same_shape(pred, truth);
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const std::uint32_t t = truth.data[i];
    const std::uint32_t p = pred.data[i];
    if (t >= k_ || p >= k_) throw ValidationError("mask", "class index out of range");
    ++counts_[t * k_ + p];
  }
}

std::optional<double> ConfusionMatrix::class_iou(std::uint32_t c) const {
  if (c >= k_) throw ValidationError("class_id", std::to_string(c) + " >= num_classes");
  const std::uint64_t inter = at(c, c);
  std::uint64_t row = 0, col = 0;
  for (std::uint32_t j = 0; j < k_; ++j) {
    row += at(c, j);
    col += at(j, c);
  }
  const std::uint64_t uni = row + col - inter;
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double ConfusionMatrix::miou(AbsentClassPolicy policy) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::uint32_t c = 0; c < k_; ++c) {
    const auto iou = class_iou(c);
    if (iou) {
      sum += *iou;
      ++n;
    } else if (policy == AbsentClassPolicy::count_as_zero) {
      ++n;
    }
  }
  // Only reachable for empty maps; nothing was mispredicted.
  if (n == 0) return 1.0;
  return sum / static_cast<double>(n);
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

// ---------------------------------------------------------------------------

void ClassMapping::validate() const {
  if (source_classes < 2 || source_classes > 256) {
    throw ValidationError("class_mapping.source_classes", "must be in [2, 256]");
  }
  if (target_classes < 2 || target_classes > 256) {
    throw ValidationError("class_mapping.target_classes", "must be in [2, 256]");
  }
  if (table.size() != source_classes) {
    throw ValidationError("class_mapping.table", "length " + std::to_string(table.size()) +
                                                     " != source_classes " +
                                                     std::to_string(source_classes));
  }
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i] >= target_classes) {
      throw ValidationError("class_mapping.table", "entry " + std::to_string(i) + " = " +
                                                       std::to_string(table[i]) +
                                                       " >= target_classes");
    }
  }
  if (!target_names.empty() && target_names.size() != target_classes) {
    throw ValidationError("class_mapping.target_names", "length must equal target_classes");
  }
}

ClassMapping ClassMapping::identity(std::uint32_t k) {
  ClassMapping m;
  m.source_classes = k;
  m.target_classes = k;
  m.table.resize(k);
  for (std::uint32_t i = 0; i < k; ++i) m.table[i] = i;
  return m;
}

ClassMapping ClassMapping::compose(const ClassMapping& first, const ClassMapping& second) {
  first.validate();
  second.validate();
  if (first.target_classes != second.source_classes) {
    throw ValidationError("class_mapping", "cannot compose: " +
                                               std::to_string(first.target_classes) + " != " +
                                               std::to_string(second.source_classes));
  }
  ClassMapping m;
  m.source_classes = first.source_classes;
  m.target_classes = second.target_classes;
  m.target_names = second.target_names;
  for (auto t : first.table) m.table.push_back(second.table[t]);
  return m;
}

LabelMap reduce_classes(const LabelMap& label, const ClassMapping& mapping) {
  mapping.validate();
  if (label.num_classes != mapping.source_classes) {
    throw ValidationError("class_mapping.source_classes",
                          "label has " + std::to_string(label.num_classes) +
                              " classes, mapping expects " +
                              std::to_string(mapping.source_classes));
  }
  LabelMap out(label.height, label.width, mapping.target_classes);
  for (std::size_t i = 0; i < label.data.size(); ++i) {
    out.data[i] = static_cast<std::uint8_t>(mapping.table[label.data[i]]);
  }
  return out;
}

ClassMapping load_class_mapping(const std::filesystem::path& path) {
  const auto j = detail::read_json_file(path.string(), "class_mapping");
  detail::StrictObject o(j, "class_mapping");
  ClassMapping m;
  m.source_classes = o.require<std::uint32_t>("source_classes");
  m.target_classes = o.require<std::uint32_t>("target_classes");
  const auto& table = o.raw("table");
  if (!table.is_array()) throw ValidationError("class_mapping.table", "expected an array");
  for (const auto& v : table) {
    if (!v.is_number_unsigned()) {
      throw ValidationError("class_mapping.table", "entries must be non-negative integers");
    }
    m.table.push_back(v.get<std::uint32_t>());
  }
  if (o.has("target_names")) {
    const auto& names = o.raw("target_names");
    if (!names.is_array()) {
      throw ValidationError("class_mapping.target_names", "expected an array");
    }
    for (const auto& v : names) m.target_names.push_back(v.get<std::string>());
  }
  o.finish();
  m.validate();
  return m;
}

void save_class_mapping(const ClassMapping& mapping, const std::filesystem::path& path) {
  mapping.validate();
  detail::Json j{{"source_classes", mapping.source_classes},
                 {"target_classes", mapping.target_classes},
                 {"table", mapping.table}};
  if (!mapping.target_names.empty()) j["target_names"] = mapping.target_names;
  detail::write_file_atomic(path.string(), j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

ScoreMetric default_metric(std::uint32_t num_classes) noexcept {
  return num_classes == 2 ? ScoreMetric::dsc : ScoreMetric::miou;
}

double score(const LabelMap& pred, const LabelMap& truth, ScoreMetric metric,
             AbsentClassPolicy policy) {
  return metric == ScoreMetric::dsc ? dsc(pred, truth) : miou(pred, truth, policy);
}

const char* to_string(ScoreMetric m) noexcept { return m == ScoreMetric::dsc ? "dsc" : "miou"; }

std::string MetricReport::to_csv() const {
  std::string out = "sample_id,metric,value\n";
  for (const auto& [id, v] : per_item) out += id + "," + metric_name + "," + fmt_exact(v) + "\n";
  return out;
}

std::string MetricReport::to_json() const {
  detail::Json j{{"metric_name", metric_name},
                 {"aggregate", aggregate},
                 {"aggregation", aggregation},
                 {"item_count", item_count},
                 {"per_item", per_item}};
  return j.dump(2) + "\n";
}

MetricReport make_mean_report(std::string metric_name, std::map<std::string, double> per_item) {
  MetricReport r;
  r.metric_name = std::move(metric_name);
  double sum = 0.0;
  for (const auto& [id, v] : per_item) sum += v;
  r.item_count = per_item.size();
  r.aggregate = per_item.empty() ? 0.0 : sum / static_cast<double>(per_item.size());
  r.per_item = std::move(per_item);
  return r;
}

std::string CrossEvalMatrix::csv_header() {
  return "generation,M1@R1,M2@R1,M1@R2,M2@R2,merged_R,test";
}

std::string CrossEvalMatrix::csv_row() const {
  return "G" + std::to_string(generation) + "," + fmt2(100 * cells[0][0]) + "," +
         fmt2(100 * cells[1][0]) + "," + fmt2(100 * cells[0][1]) + "," +
         fmt2(100 * cells[1][1]) + "," + fmt2(100 * merged_reference_score) + "," +
         fmt2(100 * test_score);
}

CrossEvalMatrix cross_eval_matrix(const Predictor& model1, const Predictor& model2,
                                  const PartitionSpec& partition, const DatasetBundle& bundle,
                                  int generation, ScoreMetric metric) {
  const std::string g = "generation " + std::to_string(generation);
  if (!model1) throw ValidationError("cross_eval.model1", "missing subset-1 model for " + g);
  if (!model2) throw ValidationError("cross_eval.model2", "missing subset-2 model for " + g);
  const Predictor* models[2] = {&model1, &model2};

  CrossEvalMatrix m;
  m.generation = generation;
  double merged_sum = 0.0;
  std::size_t merged_n = 0;
  ScopedAccessPhase phase(AccessPhase::evaluation);
  for (int s = 0; s < 2; ++s) {
    const auto& ids = partition.subset(s + 1);
    if (ids.empty()) throw ValidationError("partition", "subset " + std::to_string(s + 1) + " empty");
    double sums[2] = {0.0, 0.0};
    for (const auto& id : ids) {
      const Sample* sample = bundle.find(id);
      if (!sample) throw ValidationError("partition", "unknown reference id '" + id + "'");
      const LabelMap& truth = bundle.reference_truth(id);
      double cell[2];
      for (int mi = 0; mi < 2; ++mi) {
        cell[mi] = score((*models[mi])(sample->image), truth, metric);
        sums[mi] += cell[mi];
      }
      // Subset s is labeled by the other subset's model.
      merged_sum += cell[1 - s];
      ++merged_n;
    }
    for (int mi = 0; mi < 2; ++mi) m.cells[mi][s] = sums[mi] / static_cast<double>(ids.size());
  }
  m.merged_reference_score = merged_sum / static_cast<double>(merged_n);
  double test_sum = 0.0;
  for (const auto& sample : bundle.test()) {
    for (int mi = 0; mi < 2; ++mi) test_sum += score((*models[mi])(sample.image), *sample.label, metric);
  }
  m.test_score = test_sum / (2.0 * static_cast<double>(bundle.test().size()));
  return m;
}

}  // namespace atso
