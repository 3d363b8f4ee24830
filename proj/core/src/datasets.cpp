#include "atso/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <set>

#include "atso/error.hpp"

namespace atso {

namespace {

thread_local AccessPhase g_phase = AccessPhase::unscoped;

void require(bool ok, const char* field, const std::string& message) {
  if (!ok) throw ValidationError(field, message);
}

bool finite_all(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string make_id(char role, std::size_t index, std::size_t count) {
  const std::size_t digits = std::max<std::size_t>(3, std::to_string(count).size());
  std::string n = std::to_string(index);
  return std::string(1, role) + std::string(digits - n.size(), '0') + n;
}

double blob_soft(const Blob& b, double radius_scale, double r, double c) {
  const double dy = r - b.cy;
  const double dx = c - b.cx;
  const double cs = std::cos(b.angle);
  const double sn = std::sin(b.angle);
  const double u = (dy * cs + dx * sn) / (b.ry * radius_scale);
  const double v = (-dy * sn + dx * cs) / (b.rx * radius_scale);
  const double d = std::sqrt(u * u + v * v);
  return 1.0 / (1.0 + std::exp((d - 1.0) * b.sharpness));
}

// Separable Gaussian blur with reflected borders, kernel truncated at 4 sigma.
std::vector<double> gaussian_blur(const std::vector<double>& src, std::size_t h, std::size_t w,
                                  double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : kernel) v /= sum;

  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  };

  const int H = static_cast<int>(h);
  const int W = static_cast<int>(w);
  std::vector<double> tmp(src.size(), 0.0);
  std::vector<double> out(src.size(), 0.0);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               src[static_cast<std::size_t>(r * W + reflect(c + k, W))];
      }
      tmp[static_cast<std::size_t>(r * W + c)] = acc;
    }
  }
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               tmp[static_cast<std::size_t>(reflect(r + k, H) * W + c)];
      }
      out[static_cast<std::size_t>(r * W + c)] = acc;
    }
  }
  return out;
}

Blob random_blob(Rng& rng, const GeneratorSpec& spec, std::uint32_t class_id, double rmin,
                 double rmax, double margin, double sharpness, bool isotropic) {
  Blob b;
  b.class_id = class_id;
  const double hi_y = std::max(margin, static_cast<double>(spec.height) - margin);
  const double hi_x = std::max(margin, static_cast<double>(spec.width) - margin);
  b.cy = rng.uniform(margin, hi_y);
  b.cx = rng.uniform(margin, hi_x);
  b.ry = rng.uniform(rmin, rmax);
  b.rx = isotropic ? b.ry : rng.uniform(rmin, rmax);
  b.angle = isotropic ? 0.0 : rng.uniform(0.0, std::numbers::pi);
  b.sharpness = sharpness;
  return b;
}

double foreground_fraction(const LabelMap& label) {
  if (label.data.empty()) return 0.0;
  const auto fg = std::count_if(label.data.begin(), label.data.end(),
                                [](std::uint8_t v) { return v != 0; });
  return static_cast<double>(fg) / static_cast<double>(label.data.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs

void GeneratorSpec::validate() const {
  require(height >= 4 && width >= 4, "generator.height", "image must be at least 4x4");
  require(height <= 4096 && width <= 4096, "generator.height", "image larger than 4096");
  require(channels >= 1 && channels <= 3, "generator.channels", "must be in [1, 3]");
  require(num_classes >= 2, "generator.num_classes", "K must be >= 2");
  require(num_classes <= 256, "generator.num_classes", "K must be <= 256");
  require(labeled >= 1, "generator.labeled", "labeled set must be non-empty");
  require(reference >= 1, "generator.reference", "reference set must be non-empty");
  require(test >= 1, "generator.test", "test set must be non-empty");
  require(finite_all({radius_min, radius_max, margin, edge_sharpness, class_presence, rare_presence,
                      rare_radius_scale, distractor_amplitude, distractor_radius_min,
                      distractor_radius_max, offset_std, contrast_log_std, texture, texture_sigma,
                      noise, foreground_min, foreground_max}),
          "generator", "all values must be finite");
  require(objects_min <= objects_max, "generator.objects_min", "must be <= objects_max");
  require(radius_min > 0 && radius_min <= radius_max, "generator.radius_min",
          "need 0 < radius_min <= radius_max");
  require(margin >= 0, "generator.margin", "must be >= 0");
  require(edge_sharpness > 0, "generator.edge_sharpness", "must be > 0");
  require(class_presence >= 0 && class_presence <= 1, "generator.class_presence",
          "must be in [0, 1]");
  require(rare_presence >= 0 && rare_presence <= 1, "generator.rare_presence", "must be in [0, 1]");
  require(rare_classes < num_classes, "generator.rare_classes", "must be < num_classes");
  require(rare_radius_scale > 0, "generator.rare_radius_scale", "must be > 0");
  require(distractor_radius_min > 0 && distractor_radius_min <= distractor_radius_max,
          "generator.distractor_radius_min", "need 0 < min <= max");
  require(offset_std >= 0, "generator.offset_std", "must be >= 0");
  require(contrast_log_std >= 0, "generator.contrast_log_std", "must be >= 0");
  require(texture >= 0, "generator.texture", "must be >= 0");
  require(texture_sigma >= 0, "generator.texture_sigma", "must be >= 0");
  require(noise >= 0, "generator.noise", "must be >= 0");
  require(foreground_min >= 0 && foreground_min <= foreground_max && foreground_max <= 1,
          "generator.foreground_min", "need 0 <= foreground_min <= foreground_max <= 1");
}

void ShiftSpec::validate() const {
  require(finite_all({intensity_scale, contrast_warp, radius_scale, anomaly_rate,
                      anomaly_intensity}),
          "shift", "all values must be finite");
  require(intensity_scale >= 0.25 && intensity_scale <= 4.0, "shift.intensity_scale",
          "must be in [0.25, 4]");
  require(contrast_warp >= 0.25 && contrast_warp <= 4.0, "shift.contrast_warp",
          "must be in [0.25, 4]");
  require(radius_scale >= 0.5 && radius_scale <= 2.0, "shift.radius_scale", "must be in [0.5, 2]");
  require(anomaly_rate >= 0.0 && anomaly_rate <= 1.0, "shift.anomaly_rate", "must be in [0, 1]");
  require(anomaly_intensity >= -2.0 && anomaly_intensity <= 2.0, "shift.anomaly_intensity",
          "must be in [-2, 2]");
}

bool ShiftSpec::is_identity() const noexcept {
  return intensity_scale == 1.0 && contrast_warp == 1.0 && radius_scale == 1.0 &&
         anomaly_rate == 0.0;
}

// ---------------------------------------------------------------------------
// Access scoping

ScopedAccessPhase::ScopedAccessPhase(AccessPhase phase) noexcept : previous_(g_phase) {
  g_phase = phase;
}

ScopedAccessPhase::~ScopedAccessPhase() { g_phase = previous_; }

AccessPhase ScopedAccessPhase::current() noexcept { return g_phase; }

// ---------------------------------------------------------------------------
// Bundle

DatasetBundle::DatasetBundle(std::vector<Sample> labeled, std::vector<Sample> reference,
                             std::vector<Sample> test, std::uint32_t num_classes,
                             GeneratorSpec spec, std::uint64_t seed)
    : labeled_(std::move(labeled)),
      reference_(std::move(reference)),
      test_(std::move(test)),
      num_classes_(num_classes),
      spec_(std::move(spec)),
      seed_(seed) {
  std::set<std::string, std::less<>> ids;
  auto check = [&](Sample& s, const char* role) {
    if (!ids.insert(s.id).second) {
      throw ValidationError("bundle." + std::string(role), "duplicate sample id '" + s.id + "'");
    }
    s.image.validate();
    if (s.label) {
      if (s.label->height != s.image.height || s.label->width != s.image.width) {
        throw ValidationError("bundle." + std::string(role),
                              "label dims do not match image for '" + s.id + "'");
      }
      if (s.label->num_classes != num_classes_) {
        throw ValidationError("bundle." + std::string(role),
                              "label num_classes mismatch for '" + s.id + "'");
      }
      s.label->validate();
    }
  };
  for (auto& s : labeled_) {
    check(s, "labeled");
    if (!s.label) throw ValidationError("bundle.labeled", "sample '" + s.id + "' has no label");
  }
  for (auto& s : reference_) {
    check(s, "reference");
    if (s.label) {
      reference_truth_.emplace(s.id, std::move(*s.label));
      s.label.reset();
    }
  }
  for (auto& s : test_) {
    check(s, "test");
    if (!s.label) throw ValidationError("bundle.test", "sample '" + s.id + "' has no label");
  }
}

const LabelMap& DatasetBundle::reference_truth(std::string_view id) const {
  auto it = reference_truth_.find(id);
  if (it == reference_truth_.end()) {
    throw ValidationError("bundle.reference", "no ground truth for '" + std::string(id) + "'");
  }
  audit_->record(ScopedAccessPhase::current());
  return it->second;
}

const Sample* DatasetBundle::find(std::string_view id) const noexcept {
  for (auto set : {labeled(), reference(), test()}) {
    for (const auto& s : set) {
      if (s.id == id) return &s;
    }
  }
  return nullptr;
}

std::uint64_t DatasetBundle::fingerprint() const {
  std::uint64_t h = fnv1a(std::string_view("atso-bundle"));
  auto bytes = [&](const void* p, std::size_t n) {
    h = fnv1a(std::span(static_cast<const unsigned char*>(p), n), h);
  };
  auto sample = [&](const Sample& s) {
    h = fnv1a(s.id, h);
    bytes(s.image.data.data(), s.image.data.size() * sizeof(double));
    if (s.label) bytes(s.label->data.data(), s.label->data.size());
  };
  for (const auto& s : labeled_) sample(s);
  for (const auto& s : reference_) sample(s);
  for (const auto& s : test_) sample(s);
  for (const auto& [id, label] : reference_truth_) {
    h = fnv1a(id, h);
    bytes(label.data.data(), label.data.size());
  }
  bytes(&num_classes_, sizeof num_classes_);
  bytes(&seed_, sizeof seed_);
  return h;
}

// ---------------------------------------------------------------------------
// Rendering

std::vector<std::vector<double>> class_appearance(const GeneratorSpec& spec) {
  std::vector<std::vector<double>> a(spec.num_classes, std::vector<double>(spec.channels, 0.0));
  for (std::uint32_t c = 1; c < spec.num_classes; ++c) {
    Rng rng(derive_seed(derive_seed(spec.appearance_seed, "appearance"), c));
    for (std::size_t ch = 0; ch < spec.channels; ++ch) {
      a[c][ch] = rng.uniform(0.4, 1.6);
    }
  }
  // Binary tasks: the object is a unit-contrast bright region in channel 0.
  if (spec.num_classes == 2) a[1][0] = 1.0;
  return a;
}

std::pair<Image, LabelMap> render_scene(const Scene& scene, const GeneratorSpec& spec) {
  const std::size_t H = spec.height;
  const std::size_t W = spec.width;
  const std::size_t C = spec.channels;
  const std::uint32_t K = spec.num_classes;
  const auto appearance = class_appearance(spec);

  std::vector<double> soft(H * W * K, 0.0);  // per-class max soft membership
  LabelMap label(H, W, K, 0);
  for (const Blob& b : scene.objects) {
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        const double v = blob_soft(b, scene.radius_scale, static_cast<double>(r),
                                   static_cast<double>(c));
        double& slot = soft[(r * W + c) * K + b.class_id];
        slot = std::max(slot, v);
      }
    }
  }
  for (std::size_t p = 0; p < H * W; ++p) {
    std::uint32_t best = 0;
    double best_v = 0.5;
    for (std::uint32_t k = 1; k < K; ++k) {
      if (soft[p * K + k] > best_v) {
        best_v = soft[p * K + k];
        best = k;
      }
    }
    label.data[p] = static_cast<std::uint8_t>(best);
  }

  Image image(H, W, C, 0.0);
  for (std::size_t p = 0; p < H * W; ++p) {
    for (std::size_t ch = 0; ch < C; ++ch) {
      double v = 0.0;
      for (std::uint32_t k = 1; k < K; ++k) v += appearance[k][ch] * soft[p * K + k];
      image.data[p * C + ch] = v;
    }
  }
  for (const Blob& b : scene.distractors) {
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        const std::size_t p = r * W + c;
        if (label.data[p] != 0) continue;
        const double v = spec.distractor_amplitude *
                         blob_soft(b, 1.0, static_cast<double>(r), static_cast<double>(c));
        for (std::size_t ch = 0; ch < C; ++ch) {
          image.data[p * C + ch] += v * appearance[b.class_id][ch];
        }
      }
    }
  }
  for (const Blob& b : scene.anomalies) {
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        const std::size_t p = r * W + c;
        const double v = scene.anomaly_intensity *
                         blob_soft(b, scene.radius_scale, static_cast<double>(r),
                                   static_cast<double>(c));
        for (std::size_t ch = 0; ch < C; ++ch) {
          image.data[p * C + ch] += v * appearance[b.class_id][ch];
        }
      }
    }
  }

  Rng tex_rng(scene.texture_seed);
  Rng noise_rng(scene.noise_seed);
  for (std::size_t ch = 0; ch < C; ++ch) {
    std::vector<double> white(H * W);
    for (double& v : white) v = tex_rng.normal();
    const auto tex = gaussian_blur(white, H, W, spec.texture_sigma);
    for (std::size_t p = 0; p < H * W; ++p) {
      double& px = image.data[p * C + ch];
      px = scene.offset + scene.contrast * px + spec.texture * tex[p];
    }
  }
  for (std::size_t p = 0; p < H * W; ++p) {
    for (std::size_t ch = 0; ch < C; ++ch) {
      image.data[p * C + ch] += noise_rng.normal(0.0, spec.noise);
    }
  }

  if (scene.contrast_warp != 1.0) {
    for (std::size_t ch = 0; ch < C; ++ch) {
      double mean = 0.0;
      for (std::size_t p = 0; p < H * W; ++p) mean += image.data[p * C + ch];
      mean /= static_cast<double>(H * W);
      for (std::size_t p = 0; p < H * W; ++p) {
        double& px = image.data[p * C + ch];
        px = mean + scene.contrast_warp * (px - mean);
      }
    }
  }
  if (scene.intensity_scale != 1.0) {
    for (double& px : image.data) px *= scene.intensity_scale;
  }
  return {std::move(image), std::move(label)};
}

Scene sample_scene(const GeneratorSpec& spec, Rng& rng) {
  constexpr int kMaxAttempts = 200;
  const std::uint32_t K = spec.num_classes;
  const std::uint32_t first_rare = K - static_cast<std::uint32_t>(spec.rare_classes);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Scene scene;
    if (K == 2) {
      const auto n = rng.integer(static_cast<std::int64_t>(spec.objects_min),
                                 static_cast<std::int64_t>(spec.objects_max));
      for (std::int64_t i = 0; i < n; ++i) {
        scene.objects.push_back(random_blob(rng, spec, 1, spec.radius_min, spec.radius_max,
                                            spec.margin, spec.edge_sharpness, false));
      }
    } else if (spec.objects_max > 0) {
      for (std::uint32_t k = 1; k < K; ++k) {
        const bool rare = k >= first_rare;
        if (!rng.bernoulli(rare ? spec.rare_presence : spec.class_presence)) continue;
        const auto n = rng.integer(static_cast<std::int64_t>(std::max<std::size_t>(1, spec.objects_min)),
                                   static_cast<std::int64_t>(spec.objects_max));
        const double scale = rare ? spec.rare_radius_scale : 1.0;
        for (std::int64_t i = 0; i < n; ++i) {
          scene.objects.push_back(random_blob(rng, spec, k, spec.radius_min * scale,
                                              spec.radius_max * scale, spec.margin,
                                              spec.edge_sharpness, false));
        }
      }
    }
    const auto nd = rng.integer(0, static_cast<std::int64_t>(spec.distractors_max));
    for (std::int64_t i = 0; i < nd; ++i) {
      const auto cls = static_cast<std::uint32_t>(rng.integer(1, K - 1));
      scene.distractors.push_back(random_blob(rng, spec, cls, spec.distractor_radius_min,
                                              spec.distractor_radius_max, spec.margin * 2.0 / 3.0,
                                              4.0, true));
    }
    scene.offset = rng.normal(0.0, spec.offset_std);
    scene.contrast = std::exp(rng.normal(0.0, spec.contrast_log_std));
    scene.texture_seed = rng.next_u64();
    scene.noise_seed = rng.next_u64();

    // The band is checked on the label alone; no need to render the image.
    LabelMap label(spec.height, spec.width, K, 0);
    {
      std::vector<double> best(spec.height * spec.width, 0.5);
      for (const Blob& b : scene.objects) {
        for (std::size_t r = 0; r < spec.height; ++r) {
          for (std::size_t c = 0; c < spec.width; ++c) {
            const std::size_t p = r * spec.width + c;
            const double v = blob_soft(b, 1.0, static_cast<double>(r), static_cast<double>(c));
            if (v > best[p] || (v == best[p] && label.data[p] != 0 && b.class_id < label.data[p])) {
              best[p] = v;
              label.data[p] = static_cast<std::uint8_t>(b.class_id);
            }
          }
        }
      }
    }
    const double fg = foreground_fraction(label);
    if (fg >= spec.foreground_min && fg <= spec.foreground_max) return scene;
  }
  throw ValidationError("generator.foreground_min",
                        "could not sample a scene inside the foreground band");
}

DatasetBundle gen_synthetic_task(const GeneratorSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::uint64_t scene_root = derive_seed(seed, "scene");
  auto make = [&](char role, std::size_t count) {
    std::vector<Sample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      Sample s;
      s.id = make_id(role, i, count);
      Rng rng(derive_seed(scene_root, s.id));
      s.scene = sample_scene(spec, rng);
      auto [image, label] = render_scene(*s.scene, spec);
      s.image = std::move(image);
      s.label = std::move(label);
      s.domain = Domain::source;
      out.push_back(std::move(s));
    }
    return out;
  };
  auto labeled = make('S', spec.labeled);
  auto reference = make('R', spec.reference);
  auto test = make('E', spec.test);
  return DatasetBundle(std::move(labeled), std::move(reference), std::move(test), spec.num_classes,
                       spec, seed);
}

DatasetBundle apply_domain_shift(const DatasetBundle& bundle, const ShiftSpec& shift,
                                 std::uint64_t seed) {
  shift.validate();
  const GeneratorSpec& spec = bundle.gen_spec();
  const std::uint64_t root = derive_seed(seed, "shift");

  auto shift_one = [&](const Sample& in, const LabelMap* truth) {
    Sample out;
    out.id = in.id;
    out.domain = Domain::target;
    if (!in.scene) {
      if (shift.radius_scale != 1.0 || shift.anomaly_rate > 0.0) {
        throw ValidationError("shift", "sample '" + in.id +
                                           "' has no scene; only intensity shifts are possible");
      }
      out.image = in.image;
      // Intensity-only shift on raw pixels.
      if (shift.contrast_warp != 1.0) {
        for (std::size_t ch = 0; ch < out.image.channels; ++ch) {
          double mean = 0.0;
          for (std::size_t p = 0; p < out.image.pixel_count(); ++p)
            mean += out.image.data[p * out.image.channels + ch];
          mean /= static_cast<double>(out.image.pixel_count());
          for (std::size_t p = 0; p < out.image.pixel_count(); ++p) {
            double& px = out.image.data[p * out.image.channels + ch];
            px = mean + shift.contrast_warp * (px - mean);
          }
        }
      }
      if (shift.intensity_scale != 1.0) {
        for (double& px : out.image.data) px *= shift.intensity_scale;
      }
      if (truth) out.label = *truth;
      return out;
    }
    Scene scene = *in.scene;
    scene.radius_scale *= shift.radius_scale;
    scene.intensity_scale *= shift.intensity_scale;
    scene.contrast_warp *= shift.contrast_warp;
    Rng rng(derive_seed(root, in.id));
    if (rng.bernoulli(shift.anomaly_rate)) {
      scene.anomaly_intensity = shift.anomaly_intensity;
      Blob a;
      if (!scene.objects.empty()) {
        const Blob& host = scene.objects[rng.below(scene.objects.size())];
        const double r = 0.5 * std::min(host.ry, host.rx);
        a.class_id = host.class_id;
        a.cy = host.cy + rng.uniform(-0.4, 0.4) * host.ry;
        a.cx = host.cx + rng.uniform(-0.4, 0.4) * host.rx;
        a.ry = a.rx = std::max(1.0, r);
      } else {
        a.class_id = 1;
        a.cy = rng.uniform(0.0, static_cast<double>(spec.height));
        a.cx = rng.uniform(0.0, static_cast<double>(spec.width));
        a.ry = a.rx = std::max(1.0, spec.radius_min * 0.5);
      }
      a.sharpness = 3.0;
      scene.anomalies.push_back(a);
    }
    auto [image, label] = render_scene(scene, spec);
    out.image = std::move(image);
    out.label = std::move(label);
    out.scene = std::move(scene);
    return out;
  };

  std::vector<Sample> labeled, reference, test;
  for (const auto& s : bundle.labeled()) labeled.push_back(shift_one(s, &*s.label));
  {
    ScopedAccessPhase phase(AccessPhase::evaluation);
    for (const auto& s : bundle.reference()) {
      const LabelMap* truth = bundle.has_reference_truth() ? &bundle.reference_truth(s.id) : nullptr;
      reference.push_back(shift_one(s, truth));
    }
  }
  for (const auto& s : bundle.test()) test.push_back(shift_one(s, &*s.label));
  DatasetBundle out(std::move(labeled), std::move(reference), std::move(test),
                    bundle.num_classes(), spec, bundle.seed());
  out.set_shift(shift);
  return out;
}

PartitionSpec partition_reference(const DatasetBundle& bundle, std::uint64_t seed) {
  if (bundle.reference().size() < 2) {
    throw ValidationError("reference", "need at least 2 reference samples to partition, got " +
                                           std::to_string(bundle.reference().size()));
  }
  std::vector<std::string> ids;
  for (const auto& s : bundle.reference()) ids.push_back(s.id);
  auto parts = partition_ids(std::move(ids), 2, seed);
  PartitionSpec spec;
  spec.subset1_ids = std::move(parts[0]);
  spec.subset2_ids = std::move(parts[1]);
  spec.seed = seed;
  return spec;
}

std::vector<std::vector<std::string>> partition_ids(std::vector<std::string> ids, std::size_t k,
                                                    std::uint64_t seed) {
  if (k < 1) throw ValidationError("partition.k", "must be >= 1");
  if (ids.size() < k) {
    throw ValidationError("partition", "cannot split " + std::to_string(ids.size()) +
                                           " ids into " + std::to_string(k) + " subsets");
  }
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "partition"));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> slots(k);
  const std::size_t base = ids.size() / k;
  const std::size_t extra = ids.size() % k;
  std::size_t pos = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t n = base + (j < extra ? 1 : 0);
    slots[j].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + n));
    std::sort(slots[j].begin(), slots[j].end());
    pos += n;
  }
  std::vector<std::vector<std::string>> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i : slots[j]) out[j].push_back(ids[i]);
  }
  return out;
}

}  // namespace atso
