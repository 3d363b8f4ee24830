#include <algorithm>
#include <cmath>

#include "atso/error.hpp"
#include "atso/learners.hpp"

namespace atso {

namespace {

// Box mean of one channel with edge-replicating borders.
void box_mean(const std::vector<double>& src, std::size_t h, std::size_t w, int radius,
              std::vector<double>& tmp, std::vector<double>& out) {
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  const double inv = 1.0 / static_cast<double>(2 * radius + 1);
  tmp.assign(h * w, 0.0);
  out.assign(h * w, 0.0);
  for (std::ptrdiff_t r = 0; r < H; ++r) {
    for (std::ptrdiff_t c = 0; c < W; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        acc += src[static_cast<std::size_t>(r * W + std::clamp<std::ptrdiff_t>(c + k, 0, W - 1))];
      }
      tmp[static_cast<std::size_t>(r * W + c)] = acc * inv;
    }
  }
  for (std::ptrdiff_t r = 0; r < H; ++r) {
    for (std::ptrdiff_t c = 0; c < W; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        acc += tmp[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(r + k, 0, H - 1) * W + c)];
      }
      out[static_cast<std::size_t>(r * W + c)] = acc * inv;
    }
  }
}

}  // namespace

std::size_t FeatureSpec::dim(std::size_t channels) const noexcept {
  const std::size_t per_channel = radii.size() + (global_mean ? 1 : 0) + (global_std ? 1 : 0);
  return channels * per_channel + (position ? 2 : 0);
}

void FeatureSpec::validate() const {
  for (int r : radii) {
    if (r < 0 || r > 32) throw ValidationError("features.radii", "each radius must be in [0, 32]");
  }
  if (dim(1) == 0) throw ValidationError("features", "feature map is empty");
}

std::vector<double> compute_features(const Image& image, const FeatureSpec& spec) {
  const std::size_t n = image.pixel_count();
  const std::size_t C = image.channels;
  const std::size_t d = spec.dim(C);
  std::vector<double> out(n * d, 0.0);
  std::vector<double> plane(n), tmp, smooth;
  std::size_t col = 0;
  for (std::size_t ch = 0; ch < C; ++ch) {
    for (std::size_t p = 0; p < n; ++p) plane[p] = image.data[p * C + ch];
    for (int r : spec.radii) {
      if (r == 0) {
        for (std::size_t p = 0; p < n; ++p) out[p * d + col] = plane[p];
      } else {
        box_mean(plane, image.height, image.width, r, tmp, smooth);
        for (std::size_t p = 0; p < n; ++p) out[p * d + col] = smooth[p];
      }
      ++col;
    }
    double mean = 0.0;
    for (double v : plane) mean += v;
    mean /= static_cast<double>(n);
    if (spec.global_mean) {
      for (std::size_t p = 0; p < n; ++p) out[p * d + col] = mean;
      ++col;
    }
    if (spec.global_std) {
      double var = 0.0;
      for (double v : plane) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(n));
      for (std::size_t p = 0; p < n; ++p) out[p * d + col] = sd;
      ++col;
    }
  }
  if (spec.position) {
    const double fh = static_cast<double>(image.height);
    const double fw = static_cast<double>(image.width);
    for (std::size_t r = 0; r < image.height; ++r) {
      for (std::size_t c = 0; c < image.width; ++c) {
        const std::size_t p = r * image.width + c;
        out[p * d + col] = static_cast<double>(r) / fh - 0.5;
        out[p * d + col + 1] = static_cast<double>(c) / fw - 0.5;
      }
    }
  }
  return out;
}

void Normalizer::apply(std::span<double> features, std::size_t dim) const {
  if (mean.size() != dim || scale.size() != dim) {
    throw ValidationError("normalizer", "dimension mismatch");
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::size_t j = i % dim;
    features[i] = (features[i] - mean[j]) * scale[j];
  }
}

}  // namespace atso
