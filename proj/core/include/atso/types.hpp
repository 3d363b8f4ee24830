#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace atso {

/// Real-valued feature grid, row-major with interleaved channels:
/// `data[(row * width + col) * channels + ch]`.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  std::size_t pixel_count() const noexcept { return height * width; }
  double& at(std::size_t r, std::size_t c, std::size_t ch = 0) {
    return data[(r * width + c) * channels + ch];
  }
  double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return data[(r * width + c) * channels + ch];
  }

  /// Throws ValidationError when sizes disagree or a value is not finite.
  void validate() const;

  bool operator==(const Image&) const = default;
};

/// Per-pixel class indices in [0, num_classes).
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint32_t num_classes = 2;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint32_t k, std::uint8_t fill = 0)
      : height(h), width(w), num_classes(k), data(h * w, fill) {}

  std::size_t pixel_count() const noexcept { return height * width; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return data[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return data[r * width + c]; }
  bool same_shape(const LabelMap& o) const noexcept {
    return height == o.height && width == o.width;
  }

  void validate() const;

  bool operator==(const LabelMap&) const = default;
};

/// Soft-edged ellipse in pixel coordinates.
struct Blob {
  std::uint32_t class_id = 1;
  double cy = 0, cx = 0;
  double ry = 1, rx = 1;
  double angle = 0;
  double sharpness = 3;

  bool operator==(const Blob&) const = default;
};

/// Latent description of one synthetic sample. Rendering a scene is a pure
/// function, which is what lets a domain shift regenerate ground truth after
/// drifting the shapes.
struct Scene {
  std::vector<Blob> objects;      ///< label-bearing shapes
  std::vector<Blob> distractors;  ///< background look-alikes
  std::vector<Blob> anomalies;    ///< intensity-altered regions, label unchanged
  double offset = 0.0;
  double contrast = 1.0;
  std::uint64_t texture_seed = 0;
  std::uint64_t noise_seed = 0;
  // Domain-shift state; identity values for source-domain scenes.
  double radius_scale = 1.0;
  double intensity_scale = 1.0;
  double contrast_warp = 1.0;
  double anomaly_intensity = 0.0;

  bool operator==(const Scene&) const = default;
};

enum class Domain { source, target };

const char* to_string(Domain d) noexcept;
Domain domain_from_string(const std::string& s);

struct Sample {
  std::string id;
  Image image;
  std::optional<LabelMap> label;
  Domain domain = Domain::source;
  std::optional<Scene> scene;

  bool operator==(const Sample&) const = default;
};

}  // namespace atso
