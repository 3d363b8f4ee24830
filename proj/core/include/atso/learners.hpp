#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atso/metrics.hpp"
#include "atso/types.hpp"

namespace atso {

// ---------------------------------------------------------------------------
// Fixed per-pixel features

/// Per channel: box means at each radius (radius 0 is the raw value) and,
/// optionally, the image-wide mean and standard deviation. Optionally the
/// normalized pixel position (y, x) in [-0.5, 0.5).
struct FeatureSpec {
  std::vector<int> radii{0, 1, 3};
  bool global_mean = true;
  bool global_std = true;
  bool position = true;

  std::size_t dim(std::size_t channels) const noexcept;
  void validate() const;
  bool operator==(const FeatureSpec&) const = default;
};

/// Row-major `pixels x dim` matrix.
std::vector<double> compute_features(const Image& image, const FeatureSpec& spec);

/// Per-feature standardization fitted on a training set.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> scale;  ///< 1 / (std + 1e-8)

  void apply(std::span<double> features, std::size_t dim) const;
  bool operator==(const Normalizer&) const = default;
};

// ---------------------------------------------------------------------------
// Model

/// Feature map followed by a tanh hidden layer (absent when hidden == 0) and
/// a softmax output layer.
struct ArchSpec {
  FeatureSpec features;
  std::size_t input_channels = 1;
  std::size_t hidden = 32;
  std::uint32_t num_classes = 2;

  std::size_t input_dim() const noexcept { return features.dim(input_channels); }
  std::size_t layer_count() const noexcept { return hidden == 0 ? 1 : 2; }
  std::size_t param_count() const noexcept;
  void validate() const;
  bool operator==(const ArchSpec&) const = default;
};

struct Provenance {
  std::uint64_t seed = 0;
  /// "fresh", "continued_from:<id>" or "partial_from:<id>:<layers reinitialized>".
  std::string init_policy = "fresh";
  std::string parent_id;
  /// Hash over the sorted training sample ids.
  std::uint64_t dataset_fingerprint = 0;
  std::vector<std::string> train_ids;  ///< sorted
  std::size_t ground_truth_items = 0;
  std::size_t pseudo_items = 0;
  std::size_t epochs = 0;
  std::vector<double> loss_history;  ///< mean cross-entropy per epoch

  bool operator==(const Provenance&) const = default;
};

/// Immutable once trained; safe to share across threads.
struct Model {
  std::string model_id;
  ArchSpec arch;
  Normalizer normalizer;
  std::vector<double> weights;  ///< W1 (d x h), b1, W2 (h x K), b2
  Provenance provenance;

  void validate() const;
  bool operator==(const Model&) const = default;
};

using ModelPtr = std::shared_ptr<const Model>;

/// Hash over sorted ids, as stored in Provenance::dataset_fingerprint.
std::uint64_t fingerprint_ids(std::vector<std::string> ids);

// ---------------------------------------------------------------------------
// Training data

enum class LabelSource { ground_truth, pseudo };

const char* to_string(LabelSource s) noexcept;

struct TrainItem {
  const Sample* sample = nullptr;  ///< not owned; must outlive training
  LabelMap label;
  LabelSource source = LabelSource::ground_truth;
};

/// When `loss_class_mapping` is set, pseudo items carry labels in the
/// mapping's target space and their loss is computed on class scores summed
/// within each target group. Ground-truth items keep the full-class loss.
struct TrainSet {
  std::vector<TrainItem> items;
  std::optional<ClassMapping> loss_class_mapping;

  std::vector<std::string> ids() const;
  std::uint64_t fingerprint() const;
};

enum class LrSchedule { constant, linear };

struct TrainHyper {
  std::size_t epochs = 6;
  double learning_rate = 0.2;
  std::size_t batch_size = 64;
  double weight_decay = 1e-4;
  LrSchedule schedule = LrSchedule::linear;

  void validate() const;
  bool operator==(const TrainHyper&) const = default;
};

/// Fresh: every layer initialized from the seed. Continued: start from the
/// parent's weights, with the top `reinit_layers` layers re-initialized
/// (0 keeps everything, layer_count() is equivalent to fresh).
struct InitPolicy {
  ModelPtr parent;
  std::size_t reinit_layers = 0;

  static InitPolicy fresh() { return {}; }
  static InitPolicy continued(ModelPtr parent) { return {std::move(parent), 0}; }
  static InitPolicy partial(ModelPtr parent, std::size_t layers) {
    return {std::move(parent), layers};
  }
};

struct Prediction {
  LabelMap label;
  std::vector<double> scores;  ///< pixels x K, rows sum to 1
};

/// The learner contract used by the orchestrator.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string name() const = 0;
  /// Deterministic in all arguments. Throws ValidationError on bad inputs and
  /// TrainingError when the loss stops being finite.
  virtual Model train(const ArchSpec& arch, const TrainSet& data, const InitPolicy& init,
                      const TrainHyper& hyper, std::uint64_t seed,
                      std::string model_id) const = 0;
  virtual Prediction predict(const Model& model, const Image& image) const = 0;
};

/// Per-pixel MLP trained by mini-batch SGD with seed-derived shuffling.
class MlpLearner final : public Learner {
 public:
  std::string name() const override { return "mlp"; }
  Model train(const ArchSpec& arch, const TrainSet& data, const InitPolicy& init,
              const TrainHyper& hyper, std::uint64_t seed, std::string model_id) const override;
  Prediction predict(const Model& model, const Image& image) const override;
};

const Learner& default_learner();

Model train(const ArchSpec& arch, const TrainSet& data, const InitPolicy& init,
            const TrainHyper& hyper, std::uint64_t seed, std::string model_id = {});
Prediction predict(const Model& model, const Image& image);

/// Weights drawn the way a fresh model starts.
std::vector<double> init_weights(const ArchSpec& arch, std::uint64_t seed);

/// Class scores summed within each target group of the mapping.
std::vector<double> reduce_scores(std::span<const double> scores, std::uint32_t num_classes,
                                  const ClassMapping& mapping);

/// Argmax per pixel, lowest index on ties.
LabelMap argmax_labels(std::span<const double> scores, std::size_t height, std::size_t width,
                       std::uint32_t num_classes);

/// Normalized features with per-row targets. `reduced[i]` marks rows whose
/// target lives in the mapping's target space.
struct Batch {
  std::vector<double> x;  ///< rows x input_dim
  std::vector<std::uint32_t> y;
  std::vector<std::uint8_t> reduced;
  std::size_t rows() const noexcept { return y.size(); }
};

struct LossGradient {
  double loss = 0.0;  ///< mean cross-entropy + 0.5 * weight_decay * |W|^2
  std::vector<double> gradient;
};

LossGradient loss_and_gradient(const ArchSpec& arch, std::span<const double> weights,
                               const Batch& batch, const ClassMapping* mapping,
                               double weight_decay);

// ---------------------------------------------------------------------------
// Views

enum class ViewTransform { identity, transpose, flip_rows, flip_cols, rotate180 };

/// A grid transform and its inverse. Every transform here is an involution.
struct ViewSpec {
  std::string view_id;
  ViewTransform transform = ViewTransform::identity;

  Image apply(const Image& image) const;
  LabelMap apply(const LabelMap& label) const;
  LabelMap invert(const LabelMap& label) const;
};

/// identity, transpose and rotate180.
std::vector<ViewSpec> default_views();

/// Per-pixel modal class; ties go to the lowest class index.
LabelMap fuse_majority(std::span<const LabelMap> predictions);

LabelMap predict_multiview(const std::map<std::string, ModelPtr>& models,
                           std::span<const ViewSpec> views, const Image& image,
                           const Learner& learner = default_learner());

// ---------------------------------------------------------------------------
// Serialization: one JSON header line, then little-endian f64 normalizer
// means, scales and weights.

std::vector<unsigned char> encode_model(const Model& model);
Model decode_model(std::span<const unsigned char> bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace atso
