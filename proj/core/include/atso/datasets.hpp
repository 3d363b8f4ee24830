#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "atso/rng.hpp"
#include "atso/types.hpp"

namespace atso {

/// Parameters of the synthetic segmentation task family: soft-edged blobs per
/// class over a textured, noisy background, with per-case offset and contrast
/// variation. Lengths are in pixels.
struct GeneratorSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::uint32_t num_classes = 2;

  std::size_t labeled = 6;
  std::size_t reference = 56;
  std::size_t test = 20;

  // Objects. In binary tasks every sample gets [objects_min, objects_max]
  // blobs of class 1. In many-class tasks each foreground class is present
  // with probability class_presence (rare_presence for the last rare_classes).
  std::size_t objects_min = 1;
  std::size_t objects_max = 2;
  double radius_min = 3.0;
  double radius_max = 7.0;
  double margin = 6.0;
  double edge_sharpness = 3.0;
  double class_presence = 1.0;
  std::size_t rare_classes = 0;
  double rare_presence = 0.15;
  double rare_radius_scale = 0.6;

  // Background look-alikes rendered with a foreground appearance.
  std::size_t distractors_max = 3;
  double distractor_amplitude = 0.85;
  double distractor_radius_min = 2.0;
  double distractor_radius_max = 4.0;

  // Appearance and nuisance.
  double offset_std = 0.3;
  double contrast_log_std = 0.3;
  double texture = 0.3;
  double texture_sigma = 1.5;
  double noise = 0.3;
  std::uint64_t appearance_seed = 0;

  // Allowed fraction of non-background pixels per sample.
  double foreground_min = 0.0;
  double foreground_max = 1.0;

  /// Throws ValidationError naming the first bad field.
  void validate() const;

  bool operator==(const GeneratorSpec&) const = default;
};

/// Parametric distribution shift applied to an existing bundle.
struct ShiftSpec {
  double intensity_scale = 1.0;    ///< [0.25, 4]
  double contrast_warp = 1.0;      ///< [0.25, 4], about each image's mean
  double radius_scale = 1.0;       ///< [0.5, 2], shape-statistics drift
  double anomaly_rate = 0.0;       ///< [0, 1]
  double anomaly_intensity = -0.6; ///< [-2, 2], in units of the case contrast

  void validate() const;
  bool is_identity() const noexcept;

  bool operator==(const ShiftSpec&) const = default;
};

struct PartitionSpec {
  std::vector<std::string> subset1_ids;
  std::vector<std::string> subset2_ids;
  std::uint64_t seed = 0;

  const std::vector<std::string>& subset(int index) const {
    return index == 1 ? subset1_ids : subset2_ids;
  }
  bool operator==(const PartitionSpec&) const = default;
};

/// Who is reading reference-set ground truth. Set per thread with
/// ScopedAccessPhase; the bundle's audit counts reads per phase.
enum class AccessPhase { unscoped = 0, training = 1, evaluation = 2 };

class ScopedAccessPhase {
 public:
  explicit ScopedAccessPhase(AccessPhase phase) noexcept;
  ~ScopedAccessPhase();
  ScopedAccessPhase(const ScopedAccessPhase&) = delete;
  ScopedAccessPhase& operator=(const ScopedAccessPhase&) = delete;

  static AccessPhase current() noexcept;

 private:
  AccessPhase previous_;
};

class AccessAudit {
 public:
  void record(AccessPhase phase) noexcept {
    counts_[static_cast<std::size_t>(phase)].fetch_add(1, std::memory_order_relaxed);
  }
  std::size_t reads(AccessPhase phase) const noexcept {
    return counts_[static_cast<std::size_t>(phase)].load(std::memory_order_relaxed);
  }
  void reset() noexcept {
    for (auto& c : counts_) c.store(0);
  }

 private:
  std::atomic<std::size_t> counts_[3] = {};
};

/// Labeled set S, reference set R and test set E of one task.
///
/// Reference ground truth is kept out of `reference()` and is reachable only
/// through `reference_truth()`, which records every read in `audit()`.
class DatasetBundle {
 public:
  DatasetBundle() = default;
  /// Reference samples may carry labels; they are moved into the hidden
  /// store. Throws ValidationError on duplicate ids or shape mismatches.
  DatasetBundle(std::vector<Sample> labeled, std::vector<Sample> reference,
                std::vector<Sample> test, std::uint32_t num_classes, GeneratorSpec spec,
                std::uint64_t seed);

  std::span<const Sample> labeled() const noexcept { return labeled_; }
  std::span<const Sample> reference() const noexcept { return reference_; }
  std::span<const Sample> test() const noexcept { return test_; }
  std::uint32_t num_classes() const noexcept { return num_classes_; }
  const GeneratorSpec& gen_spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Optional record of the shift that produced this bundle.
  const std::optional<ShiftSpec>& shift() const noexcept { return shift_; }
  void set_shift(ShiftSpec s) { shift_ = s; }

  bool has_reference_truth() const noexcept { return !reference_truth_.empty(); }
  /// Evaluation-scoped access to reference ground truth.
  const LabelMap& reference_truth(std::string_view id) const;
  const AccessAudit& audit() const noexcept { return *audit_; }
  void reset_audit() const noexcept { audit_->reset(); }

  const Sample* find(std::string_view id) const noexcept;

  /// Hash over every sample id, pixel, label and the generator settings.
  std::uint64_t fingerprint() const;

 private:
  std::vector<Sample> labeled_;
  std::vector<Sample> reference_;
  std::vector<Sample> test_;
  std::map<std::string, LabelMap, std::less<>> reference_truth_;
  std::uint32_t num_classes_ = 2;
  GeneratorSpec spec_;
  std::uint64_t seed_ = 0;
  std::optional<ShiftSpec> shift_;
  std::shared_ptr<AccessAudit> audit_ = std::make_shared<AccessAudit>();
};

/// Per-class appearance vectors, `[class][channel]`; class 0 is all zeros.
std::vector<std::vector<double>> class_appearance(const GeneratorSpec& spec);

/// Renders a scene to an image and its ground truth.
std::pair<Image, LabelMap> render_scene(const Scene& scene, const GeneratorSpec& spec);

/// Samples a scene inside the generator's foreground band.
Scene sample_scene(const GeneratorSpec& spec, Rng& rng);

/// Deterministic function of (spec, seed).
DatasetBundle gen_synthetic_task(const GeneratorSpec& spec, std::uint64_t seed);

/// New bundle with the same ids and roles, re-rendered under the shift and
/// tagged as target domain.
DatasetBundle apply_domain_shift(const DatasetBundle& bundle, const ShiftSpec& shift,
                                 std::uint64_t seed);

/// Balanced random bipartition of R; subset 1 gets the extra sample when |R|
/// is odd. Throws ValidationError when |R| < 2.
PartitionSpec partition_reference(const DatasetBundle& bundle, std::uint64_t seed);

/// Balanced k-way split of arbitrary ids (sizes differ by at most one).
std::vector<std::vector<std::string>> partition_ids(std::vector<std::string> ids, std::size_t k,
                                                    std::uint64_t seed);

}  // namespace atso
