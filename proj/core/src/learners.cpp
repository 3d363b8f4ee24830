#include "atso/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "atso/error.hpp"
#include "atso/rng.hpp"

namespace atso {

namespace {

struct Layout {
  std::size_t d = 0, h = 0, k = 0;
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, total = 0;

  explicit Layout(const ArchSpec& arch)
      : d(arch.input_dim()), h(arch.hidden), k(arch.num_classes) {
    if (h == 0) {
      w2 = 0;
      b2 = d * k;
      total = b2 + k;
    } else {
      w1 = 0;
      b1 = d * h;
      w2 = b1 + h;
      b2 = w2 + h * k;
      total = b2 + k;
    }
  }
  /// Index range of the top `layers` layers (counted from the output).
  std::size_t top_begin(std::size_t layers) const {
    if (h == 0 || layers >= 2) return 0;
    return layers == 0 ? total : w2;
  }
};

struct Workspace {
  std::vector<double> a, z, p, dz, da;
  explicit Workspace(const Layout& L) : a(L.h), z(L.k), p(L.k), dz(L.k), da(L.h) {}
};

// Logits for one row; fills ws.a (hidden activations) and ws.z.
void forward_row(const Layout& L, const double* w, const double* x, Workspace& ws) {
  const double* in = x;
  std::size_t in_dim = L.d;
  if (L.h > 0) {
    for (std::size_t j = 0; j < L.h; ++j) ws.a[j] = w[L.b1 + j];
    for (std::size_t i = 0; i < L.d; ++i) {
      const double xi = x[i];
      const double* row = w + L.w1 + i * L.h;
      for (std::size_t j = 0; j < L.h; ++j) ws.a[j] += xi * row[j];
    }
    for (std::size_t j = 0; j < L.h; ++j) ws.a[j] = std::tanh(ws.a[j]);
    in = ws.a.data();
    in_dim = L.h;
  }
  for (std::size_t c = 0; c < L.k; ++c) ws.z[c] = w[L.b2 + c];
  for (std::size_t j = 0; j < in_dim; ++j) {
    const double aj = in[j];
    const double* row = w + L.w2 + j * L.k;
    for (std::size_t c = 0; c < L.k; ++c) ws.z[c] += aj * row[c];
  }
}

// Softmax into ws.p; returns log-sum-exp of the logits.
double softmax(const Layout& L, Workspace& ws) {
  const double zmax = *std::max_element(ws.z.begin(), ws.z.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < L.k; ++c) {
    ws.p[c] = std::exp(ws.z[c] - zmax);
    sum += ws.p[c];
  }
  for (std::size_t c = 0; c < L.k; ++c) ws.p[c] /= sum;
  return zmax + std::log(sum);
}

// Mean cross-entropy over the selected rows (without the decay term);
// gradient of the full objective written to g.
double batch_gradient(const Layout& L, const double* w, const double* X, const std::uint32_t* y,
                      const std::uint8_t* reduced, const std::size_t* idx, std::size_t m,
                      const ClassMapping* mapping, double wd, std::vector<double>& g,
                      Workspace& ws) {
  std::fill(g.begin(), g.end(), 0.0);
  const double inv_m = 1.0 / static_cast<double>(m);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t row = idx ? idx[r] : r;
    const double* x = X + row * L.d;
    forward_row(L, w, x, ws);
    const double lse = softmax(L, ws);
    const std::uint32_t target = y[row];
    if (mapping && reduced[row]) {
      // -log of the summed probability of the target group.
      double gmax = -INFINITY;
      for (std::size_t c = 0; c < L.k; ++c) {
        if (mapping->table[c] == target) gmax = std::max(gmax, ws.z[c]);
      }
      double gsum = 0.0;
      for (std::size_t c = 0; c < L.k; ++c) {
        if (mapping->table[c] == target) gsum += std::exp(ws.z[c] - gmax);
      }
      const double glse = gmax + std::log(gsum);
      loss += lse - glse;
      for (std::size_t c = 0; c < L.k; ++c) {
        const bool in_group = mapping->table[c] == target;
        ws.dz[c] = (ws.p[c] - (in_group ? std::exp(ws.z[c] - glse) : 0.0)) * inv_m;
      }
    } else {
      loss += lse - ws.z[target];
      for (std::size_t c = 0; c < L.k; ++c) {
        ws.dz[c] = (ws.p[c] - (c == target ? 1.0 : 0.0)) * inv_m;
      }
    }
    const double* in = L.h > 0 ? ws.a.data() : x;
    const std::size_t in_dim = L.h > 0 ? L.h : L.d;
    for (std::size_t j = 0; j < in_dim; ++j) {
      const double aj = in[j];
      double* grow = g.data() + L.w2 + j * L.k;
      for (std::size_t c = 0; c < L.k; ++c) grow[c] += aj * ws.dz[c];
    }
    for (std::size_t c = 0; c < L.k; ++c) g[L.b2 + c] += ws.dz[c];
    if (L.h > 0) {
      for (std::size_t j = 0; j < L.h; ++j) {
        const double* wrow = w + L.w2 + j * L.k;
        double s = 0.0;
        for (std::size_t c = 0; c < L.k; ++c) s += wrow[c] * ws.dz[c];
        ws.da[j] = s * (1.0 - ws.a[j] * ws.a[j]);
      }
      for (std::size_t i = 0; i < L.d; ++i) {
        const double xi = x[i];
        double* grow = g.data() + L.w1 + i * L.h;
        for (std::size_t j = 0; j < L.h; ++j) grow[j] += xi * ws.da[j];
      }
      for (std::size_t j = 0; j < L.h; ++j) g[L.b1 + j] += ws.da[j];
    }
  }
  if (wd != 0.0) {
    if (L.h > 0) {
      for (std::size_t i = L.w1; i < L.b1; ++i) g[i] += wd * w[i];
    }
    for (std::size_t i = L.w2; i < L.b2; ++i) g[i] += wd * w[i];
  }
  return loss * inv_m;
}

double decay_term(const Layout& L, std::span<const double> w, double wd) {
  if (wd == 0.0) return 0.0;
  double s = 0.0;
  if (L.h > 0) {
    for (std::size_t i = L.w1; i < L.b1; ++i) s += w[i] * w[i];
  }
  for (std::size_t i = L.w2; i < L.b2; ++i) s += w[i] * w[i];
  return 0.5 * wd * s;
}

Normalizer fit_normalizer(const std::vector<double>& X, std::size_t d) {
  Normalizer nz;
  nz.mean.assign(d, 0.0);
  nz.scale.assign(d, 0.0);
  const std::size_t n = X.size() / d;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) nz.mean[j] += X[r * d + j];
  }
  for (double& m : nz.mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double e = X[r * d + j] - nz.mean[j];
      var[j] += e * e;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    nz.scale[j] = 1.0 / (std::sqrt(var[j] / static_cast<double>(n)) + 1e-8);
  }
  return nz;
}

void check_item(const TrainItem& item, const ArchSpec& arch, const TrainSet& data,
                std::size_t index) {
  const std::string where = "train_set.items[" + std::to_string(index) + "]";
  if (!item.sample) throw ValidationError(where, "missing sample");
  const Image& img = item.sample->image;
  if (img.channels != arch.input_channels) {
    throw ValidationError(where, "image has " + std::to_string(img.channels) +
                                     " channels, model expects " +
                                     std::to_string(arch.input_channels));
  }
  if (item.label.height != img.height || item.label.width != img.width) {
    throw ValidationError(where, "label dims do not match image for '" + item.sample->id + "'");
  }
  const bool reduced = data.loss_class_mapping && item.source == LabelSource::pseudo;
  const std::uint32_t want = reduced ? data.loss_class_mapping->target_classes : arch.num_classes;
  if (item.label.num_classes != want) {
    throw ValidationError(where, "label has " + std::to_string(item.label.num_classes) +
                                     " classes, expected " + std::to_string(want));
  }
  item.label.validate();
}

std::string init_label(const InitPolicy& init, const ArchSpec& arch) {
  if (!init.parent || init.reinit_layers >= arch.layer_count()) return "fresh";
  if (init.reinit_layers == 0) return "continued_from:" + init.parent->model_id;
  return "partial_from:" + init.parent->model_id + ":" + std::to_string(init.reinit_layers);
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t ArchSpec::param_count() const noexcept { return Layout(*this).total; }

void ArchSpec::validate() const {
  features.validate();
  if (input_channels < 1) throw ValidationError("arch.input_channels", "must be >= 1");
  if (num_classes < 2 || num_classes > 256) {
    throw ValidationError("arch.num_classes", "must be in [2, 256]");
  }
  if (hidden > 4096) throw ValidationError("arch.hidden", "must be <= 4096");
}

void Model::validate() const {
  arch.validate();
  if (weights.size() != arch.param_count()) {
    throw ValidationError("model.weights", "expected " + std::to_string(arch.param_count()) +
                                               " weights, got " + std::to_string(weights.size()));
  }
  for (double v : weights) {
    if (!std::isfinite(v)) throw ValidationError("model.weights", "non-finite weight");
  }
  const std::size_t d = arch.input_dim();
  if (normalizer.mean.size() != d || normalizer.scale.size() != d) {
    throw ValidationError("model.normalizer", "dimension mismatch");
  }
  if (model_id.empty()) throw ValidationError("model.model_id", "empty");
}

std::uint64_t fingerprint_ids(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::uint64_t h = fnv1a(std::string_view("atso-ids"));
  for (const auto& id : ids) {
    h = fnv1a(id, h);
    h = fnv1a(std::string_view("\n"), h);
  }
  return h;
}

const char* to_string(LabelSource s) noexcept {
  return s == LabelSource::ground_truth ? "ground_truth" : "pseudo";
}

std::vector<std::string> TrainSet::ids() const {
  std::vector<std::string> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(it.sample ? it.sample->id : std::string());
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t TrainSet::fingerprint() const { return fingerprint_ids(ids()); }

void TrainHyper::validate() const {
  if (epochs > 100000) throw ValidationError("hyper.epochs", "must be <= 100000");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("hyper.learning_rate", "must be a positive finite number");
  }
  if (batch_size < 1) throw ValidationError("hyper.batch_size", "must be >= 1");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ValidationError("hyper.weight_decay", "must be a finite number >= 0");
  }
}

std::vector<double> init_weights(const ArchSpec& arch, std::uint64_t seed) {
  const Layout L(arch);
  std::vector<double> w(L.total, 0.0);
  Rng rng(seed);
  if (L.h > 0) {
    const double s1 = 1.0 / std::sqrt(static_cast<double>(L.d));
    for (std::size_t i = L.w1; i < L.b1; ++i) w[i] = rng.normal(0.0, s1);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(L.h));
    for (std::size_t i = L.w2; i < L.b2; ++i) w[i] = rng.normal(0.0, s2);
  } else {
    const double s = 1.0 / std::sqrt(static_cast<double>(L.d));
    for (std::size_t i = L.w2; i < L.b2; ++i) w[i] = rng.normal(0.0, s);
  }
  return w;
}

LossGradient loss_and_gradient(const ArchSpec& arch, std::span<const double> weights,
                               const Batch& batch, const ClassMapping* mapping,
                               double weight_decay) {
  arch.validate();
  const Layout L(arch);
  if (weights.size() != L.total) throw ValidationError("weights", "size mismatch");
  if (batch.x.size() != batch.rows() * L.d) throw ValidationError("batch.x", "size mismatch");
  if (batch.rows() == 0) throw ValidationError("batch", "empty");
  if (mapping && mapping->source_classes != arch.num_classes) {
    throw ValidationError("class_mapping.source_classes", "does not match model classes");
  }
  std::vector<std::uint8_t> reduced = batch.reduced;
  reduced.resize(batch.rows(), 0);
  Workspace ws(L);
  LossGradient out;
  out.gradient.assign(L.total, 0.0);
  out.loss = batch_gradient(L, weights.data(), batch.x.data(), batch.y.data(), reduced.data(),
                            nullptr, batch.rows(), mapping, weight_decay, out.gradient, ws) +
             decay_term(L, weights, weight_decay);
  return out;
}

std::vector<double> reduce_scores(std::span<const double> scores, std::uint32_t num_classes,
                                  const ClassMapping& mapping) {
  mapping.validate();
  if (mapping.source_classes != num_classes) {
    throw ValidationError("class_mapping.source_classes", "does not match score classes");
  }
  const std::size_t n = scores.size() / num_classes;
  std::vector<double> out(n * mapping.target_classes, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::uint32_t c = 0; c < num_classes; ++c) {
      out[p * mapping.target_classes + mapping.table[c]] += scores[p * num_classes + c];
    }
  }
  return out;
}

LabelMap argmax_labels(std::span<const double> scores, std::size_t height, std::size_t width,
                       std::uint32_t num_classes) {
  if (scores.size() != height * width * num_classes) {
    throw ValidationError("scores", "size does not match dims");
  }
  LabelMap out(height, width, num_classes);
  for (std::size_t p = 0; p < height * width; ++p) {
    const double* row = scores.data() + p * num_classes;
    std::uint32_t best = 0;
    for (std::uint32_t c = 1; c < num_classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out.data[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

// ---------------------------------------------------------------------------

Model MlpLearner::train(const ArchSpec& arch, const TrainSet& data, const InitPolicy& init,
                        const TrainHyper& hyper, std::uint64_t seed, std::string model_id) const {
  arch.validate();
  hyper.validate();
  if (data.items.empty()) throw ValidationError("train_set", "empty training set");
  if (data.loss_class_mapping) {
    data.loss_class_mapping->validate();
    if (data.loss_class_mapping->source_classes != arch.num_classes) {
      throw ValidationError("train_set.loss_class_mapping",
                            "source_classes " +
                                std::to_string(data.loss_class_mapping->source_classes) +
                                " != model classes " + std::to_string(arch.num_classes));
    }
  }
  for (std::size_t i = 0; i < data.items.size(); ++i) check_item(data.items[i], arch, data, i);
  if (init.parent && !(init.parent->arch == arch)) {
    throw ValidationError("init", "parent '" + init.parent->model_id +
                                      "' has a different architecture");
  }

  const Layout L(arch);
  const bool fresh = !init.parent || init.reinit_layers >= arch.layer_count();

  // Feature matrix over every pixel of every item.
  std::size_t rows = 0;
  for (const auto& it : data.items) rows += it.sample->image.pixel_count();
  std::vector<double> X;
  X.reserve(rows * L.d);
  std::vector<std::uint32_t> y;
  y.reserve(rows);
  std::vector<std::uint8_t> reduced;
  reduced.reserve(rows);
  std::size_t gt_rows = 0;
  for (const auto& it : data.items) {
    auto f = compute_features(it.sample->image, arch.features);
    X.insert(X.end(), f.begin(), f.end());
    const bool red = data.loss_class_mapping && it.source == LabelSource::pseudo;
    for (auto v : it.label.data) {
      y.push_back(v);
      reduced.push_back(red ? 1 : 0);
    }
    if (it.source == LabelSource::ground_truth) gt_rows += it.sample->image.pixel_count();
  }

  Model model;
  model.arch = arch;
  if (fresh) {
    // Standardize on ground-truth items when there are any.
    if (gt_rows > 0) {
      std::vector<double> gtX;
      gtX.reserve(gt_rows * L.d);
      std::size_t offset = 0;
      for (const auto& it : data.items) {
        const std::size_t n = it.sample->image.pixel_count() * L.d;
        if (it.source == LabelSource::ground_truth) {
          gtX.insert(gtX.end(), X.begin() + static_cast<std::ptrdiff_t>(offset),
                     X.begin() + static_cast<std::ptrdiff_t>(offset + n));
        }
        offset += n;
      }
      model.normalizer = fit_normalizer(gtX, L.d);
    } else {
      model.normalizer = fit_normalizer(X, L.d);
    }
    model.weights = init_weights(arch, derive_seed(seed, "init"));
  } else {
    model.normalizer = init.parent->normalizer;
    model.weights = init.parent->weights;
    if (init.reinit_layers > 0) {
      const auto fresh_w = init_weights(arch, derive_seed(seed, "init"));
      for (std::size_t i = L.top_begin(init.reinit_layers); i < L.total; ++i) {
        model.weights[i] = fresh_w[i];
      }
    }
  }
  model.normalizer.apply(X, L.d);

  Rng shuffle_rng(derive_seed(seed, "shuffle"));
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = std::min(hyper.batch_size, rows);
  const std::size_t steps_per_epoch = (rows + bs - 1) / bs;
  const double total_steps = static_cast<double>(hyper.epochs * steps_per_epoch);
  std::vector<double> g(L.total, 0.0);
  Workspace ws(L);
  const ClassMapping* mapping = data.loss_class_mapping ? &*data.loss_class_mapping : nullptr;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < rows; start += bs) {
      const std::size_t m = std::min(bs, rows - start);
      const double lr = hyper.schedule == LrSchedule::linear
                            ? hyper.learning_rate * (1.0 - static_cast<double>(step) / total_steps)
                            : hyper.learning_rate;
      ++step;
      const double loss = batch_gradient(L, model.weights.data(), X.data(), y.data(),
                                         reduced.data(), order.data() + start, m, mapping,
                                         hyper.weight_decay, g, ws);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", step " << step << " (lr " << lr
            << ", batch " << m << " rows) while training '" << model_id << "'";
        throw TrainingError(msg.str());
      }
      epoch_loss += loss * static_cast<double>(m);
      for (std::size_t i = 0; i < L.total; ++i) model.weights[i] -= lr * g[i];
    }
    model.provenance.loss_history.push_back(epoch_loss / static_cast<double>(rows));
  }
  for (double v : model.weights) {
    if (!std::isfinite(v)) {
      throw TrainingError("non-finite weight after training '" + model_id + "'");
    }
  }

  Provenance& pv = model.provenance;
  pv.seed = seed;
  pv.init_policy = init_label(init, arch);
  pv.parent_id = init.parent ? init.parent->model_id : std::string();
  pv.train_ids = data.ids();
  pv.dataset_fingerprint = fingerprint_ids(pv.train_ids);
  pv.epochs = hyper.epochs;
  for (const auto& it : data.items) {
    (it.source == LabelSource::ground_truth ? pv.ground_truth_items : pv.pseudo_items) += 1;
  }
  if (model_id.empty()) {
    std::uint64_t h = derive_seed(seed, pv.dataset_fingerprint);
    h = fnv1a(pv.init_policy, h);
    model_id = "model-" + hex64(h);
  }
  model.model_id = std::move(model_id);
  return model;
}

Prediction MlpLearner::predict(const Model& model, const Image& image) const {
  if (image.channels != model.arch.input_channels) {
    throw ValidationError("image.channels", "got " + std::to_string(image.channels) +
                                                ", model expects " +
                                                std::to_string(model.arch.input_channels));
  }
  if (image.data.size() != image.pixel_count() * image.channels) {
    throw ValidationError("image.data", "length does not match dims");
  }
  const Layout L(model.arch);
  if (model.weights.size() != L.total) throw ValidationError("model.weights", "size mismatch");
  auto X = compute_features(image, model.arch.features);
  model.normalizer.apply(X, L.d);
  const std::size_t n = image.pixel_count();
  Prediction out;
  out.scores.resize(n * L.k);
  Workspace ws(L);
  for (std::size_t p = 0; p < n; ++p) {
    forward_row(L, model.weights.data(), X.data() + p * L.d, ws);
    softmax(L, ws);
    std::copy(ws.p.begin(), ws.p.end(), out.scores.begin() + static_cast<std::ptrdiff_t>(p * L.k));
  }
  out.label = argmax_labels(out.scores, image.height, image.width, model.arch.num_classes);
  return out;
}

const Learner& default_learner() {
  static const MlpLearner learner;
  return learner;
}

Model train(const ArchSpec& arch, const TrainSet& data, const InitPolicy& init,
            const TrainHyper& hyper, std::uint64_t seed, std::string model_id) {
  return default_learner().train(arch, data, init, hyper, seed, std::move(model_id));
}

Prediction predict(const Model& model, const Image& image) {
  return default_learner().predict(model, image);
}

}  // namespace atso
