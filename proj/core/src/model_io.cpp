#include <algorithm>
#include <bit>
#include <fstream>

#include "atso/error.hpp"
#include "atso/learners.hpp"
#include "json_codec.hpp"

namespace atso {

using detail::Json;

namespace {

constexpr const char* kFormat = "atso-model-1";

Json arch_to_json(const ArchSpec& a) {
  return Json{{"features",
               {{"radii", a.features.radii},
                {"global_mean", a.features.global_mean},
                {"global_std", a.features.global_std},
                {"position", a.features.position}}},
              {"input_channels", a.input_channels},
              {"hidden", a.hidden},
              {"num_classes", a.num_classes}};
}

ArchSpec arch_from_json(const Json& j) {
  detail::StrictObject o(j, "model.arch");
  ArchSpec a;
  auto f = o.child("features");
  a.features.radii = f.require<std::vector<int>>("radii");
  f.get("global_mean", a.features.global_mean);
  f.get("global_std", a.features.global_std);
  f.get("position", a.features.position);
  f.finish();
  a.input_channels = o.require<std::size_t>("input_channels");
  a.hidden = o.require<std::size_t>("hidden");
  a.num_classes = o.require<std::uint32_t>("num_classes");
  o.finish();
  a.validate();
  return a;
}

void put_f64(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

}  // namespace

std::vector<unsigned char> encode_model(const Model& model) {
  model.validate();
  const Provenance& p = model.provenance;
  Json loss = Json::array();
  for (double v : p.loss_history) loss.push_back(detail::seed_to_json(std::bit_cast<std::uint64_t>(v)));
  Json header{{"format", kFormat},
              {"model_id", model.model_id},
              {"arch", arch_to_json(model.arch)},
              {"provenance",
               {{"seed", detail::seed_to_json(p.seed)},
                {"init_policy", p.init_policy},
                {"parent_id", p.parent_id},
                {"dataset_fingerprint", detail::seed_to_json(p.dataset_fingerprint)},
                {"train_ids", p.train_ids},
                {"ground_truth_items", p.ground_truth_items},
                {"pseudo_items", p.pseudo_items},
                {"epochs", p.epochs},
                {"loss_history_bits", loss}}},
              {"normalizer_dim", model.normalizer.mean.size()},
              {"weight_count", model.weights.size()}};
  const std::string text = header.dump() + "\n";
  std::vector<unsigned char> out(text.begin(), text.end());
  for (double v : model.normalizer.mean) put_f64(out, v);
  for (double v : model.normalizer.scale) put_f64(out, v);
  for (double v : model.weights) put_f64(out, v);
  return out;
}

Model decode_model(std::span<const unsigned char> bytes) {
  const auto nl = std::find(bytes.begin(), bytes.end(), '\n');
  if (nl == bytes.end()) throw IoError("header", "missing header line");
  const std::string text(bytes.begin(), nl);
  const Json j = detail::parse_json_text(text, "model.header");
  detail::StrictObject o(j, "model");
  if (o.require<std::string>("format") != kFormat) {
    throw IoError("format", "unsupported model format");
  }
  Model m;
  m.model_id = o.require<std::string>("model_id");
  m.arch = arch_from_json(o.raw("arch"));
  auto p = o.child("provenance");
  m.provenance.seed = detail::seed_from_json(p.raw("seed"), "model.provenance.seed");
  m.provenance.init_policy = p.require<std::string>("init_policy");
  m.provenance.parent_id = p.require<std::string>("parent_id");
  m.provenance.dataset_fingerprint =
      detail::seed_from_json(p.raw("dataset_fingerprint"), "model.provenance.dataset_fingerprint");
  m.provenance.train_ids = p.require<std::vector<std::string>>("train_ids");
  m.provenance.ground_truth_items = p.require<std::size_t>("ground_truth_items");
  m.provenance.pseudo_items = p.require<std::size_t>("pseudo_items");
  m.provenance.epochs = p.require<std::size_t>("epochs");
  for (const auto& v : p.raw("loss_history_bits")) {
    m.provenance.loss_history.push_back(
        std::bit_cast<double>(detail::seed_from_json(v, "model.provenance.loss_history_bits")));
  }
  p.finish();
  const auto d = o.require<std::size_t>("normalizer_dim");
  const auto n = o.require<std::size_t>("weight_count");
  o.finish();

  const std::size_t blob = static_cast<std::size_t>(bytes.end() - nl) - 1;
  if (blob != (2 * d + n) * 8) {
    throw IoError("weights", "short read: expected " + std::to_string((2 * d + n) * 8) +
                                 " bytes of weights, found " + std::to_string(blob));
  }
  const unsigned char* cur = &*nl + 1;
  auto next = [&]() {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | cur[i];
    cur += 8;
    return std::bit_cast<double>(v);
  };
  m.normalizer.mean.resize(d);
  m.normalizer.scale.resize(d);
  m.weights.resize(n);
  for (auto& v : m.normalizer.mean) v = next();
  for (auto& v : m.normalizer.scale) v = next();
  for (auto& v : m.weights) v = next();
  m.validate();
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_model(model);
  detail::write_file_atomic(path.string(), std::string(bytes.begin(), bytes.end()));
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("path", "cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  return decode_model(bytes);
}

}  // namespace atso
