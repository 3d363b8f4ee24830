#include <algorithm>

#include "atso/error.hpp"
#include "atso/learners.hpp"

namespace atso {

namespace {

// Source coordinate (in the input grid) for output coordinate (r, c).
struct Geometry {
  std::size_t out_h, out_w;
};

Geometry geometry(ViewTransform t, std::size_t h, std::size_t w) {
  return t == ViewTransform::transpose ? Geometry{w, h} : Geometry{h, w};
}

std::pair<std::size_t, std::size_t> source_of(ViewTransform t, std::size_t r, std::size_t c,
                                              std::size_t h, std::size_t w) {
  switch (t) {
    case ViewTransform::identity:
      return {r, c};
    case ViewTransform::transpose:
      return {c, r};
    case ViewTransform::flip_rows:
      return {h - 1 - r, c};
    case ViewTransform::flip_cols:
      return {r, w - 1 - c};
    case ViewTransform::rotate180:
      return {h - 1 - r, w - 1 - c};
  }
  return {r, c};
}

template <typename Grid, typename Make>
Grid remap(const Grid& in, std::size_t channels, ViewTransform t, Make make) {
  const auto g = geometry(t, in.height, in.width);
  Grid out = make(g.out_h, g.out_w);
  for (std::size_t r = 0; r < g.out_h; ++r) {
    for (std::size_t c = 0; c < g.out_w; ++c) {
      const auto [sr, sc] = source_of(t, r, c, in.height, in.width);
      for (std::size_t ch = 0; ch < channels; ++ch) {
        out.data[(r * g.out_w + c) * channels + ch] = in.data[(sr * in.width + sc) * channels + ch];
      }
    }
  }
  return out;
}

}  // namespace

Image ViewSpec::apply(const Image& image) const {
  return remap(image, image.channels, transform, [&](std::size_t h, std::size_t w) {
    return Image(h, w, image.channels);
  });
}

LabelMap ViewSpec::apply(const LabelMap& label) const {
  return remap(label, 1, transform, [&](std::size_t h, std::size_t w) {
    return LabelMap(h, w, label.num_classes);
  });
}

LabelMap ViewSpec::invert(const LabelMap& label) const {
  // Every supported transform is its own inverse.
  return apply(label);
}

std::vector<ViewSpec> default_views() {
  return {{"identity", ViewTransform::identity},
          {"transpose", ViewTransform::transpose},
          {"rotate180", ViewTransform::rotate180}};
}

LabelMap fuse_majority(std::span<const LabelMap> predictions) {
  if (predictions.empty()) throw ValidationError("predictions", "need at least one map");
  const LabelMap& first = predictions.front();
  for (const auto& p : predictions) {
    if (!p.same_shape(first) || p.num_classes != first.num_classes) {
      throw ValidationError("predictions", "dims or num_classes differ between maps");
    }
  }
  LabelMap out(first.height, first.width, first.num_classes);
  std::vector<std::uint32_t> votes(first.num_classes);
  for (std::size_t i = 0; i < first.data.size(); ++i) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const auto& p : predictions) ++votes[p.data[i]];
    out.data[i] = static_cast<std::uint8_t>(
        std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

LabelMap predict_multiview(const std::map<std::string, ModelPtr>& models,
                           std::span<const ViewSpec> views, const Image& image,
                           const Learner& learner) {
  if (views.empty()) throw ValidationError("views", "need at least one view");
  std::vector<LabelMap> preds;
  preds.reserve(views.size());
  for (const auto& v : views) {
    auto it = models.find(v.view_id);
    if (it == models.end() || !it->second) {
      throw ValidationError("models", "no model for view '" + v.view_id + "'");
    }
    preds.push_back(v.invert(learner.predict(*it->second, v.apply(image)).label));
  }
  return fuse_majority(preds);
}

}  // namespace atso
