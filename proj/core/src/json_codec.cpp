#include "json_codec.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "atso/rng.hpp"

namespace atso::detail {

StrictObject::StrictObject(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (!j_.is_object()) {
    throw ValidationError(path_.empty() ? std::string("config") : path_, "expected a JSON object");
  }
}

std::string StrictObject::field(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

const Json& StrictObject::raw(const std::string& key) {
  seen_.insert(key);
  if (!j_.contains(key)) throw ValidationError(field(key), "missing required field");
  return j_.at(key);
}

StrictObject StrictObject::child(const std::string& key) { return StrictObject(raw(key), field(key)); }

void StrictObject::finish() const {
  for (const auto& item : j_.items()) {
    if (!seen_.count(item.key())) throw ValidationError(field(item.key()), "unknown key");
  }
}

Json to_json(const GeneratorSpec& s) {
  return Json{{"height", s.height},
              {"width", s.width},
              {"channels", s.channels},
              {"num_classes", s.num_classes},
              {"labeled", s.labeled},
              {"reference", s.reference},
              {"test", s.test},
              {"objects_min", s.objects_min},
              {"objects_max", s.objects_max},
              {"radius_min", s.radius_min},
              {"radius_max", s.radius_max},
              {"margin", s.margin},
              {"edge_sharpness", s.edge_sharpness},
              {"class_presence", s.class_presence},
              {"rare_classes", s.rare_classes},
              {"rare_presence", s.rare_presence},
              {"rare_radius_scale", s.rare_radius_scale},
              {"distractors_max", s.distractors_max},
              {"distractor_amplitude", s.distractor_amplitude},
              {"distractor_radius_min", s.distractor_radius_min},
              {"distractor_radius_max", s.distractor_radius_max},
              {"offset_std", s.offset_std},
              {"contrast_log_std", s.contrast_log_std},
              {"texture", s.texture},
              {"texture_sigma", s.texture_sigma},
              {"noise", s.noise},
              {"appearance_seed", seed_to_json(s.appearance_seed)},
              {"foreground_min", s.foreground_min},
              {"foreground_max", s.foreground_max}};
}

GeneratorSpec generator_from_json(const Json& j, const std::string& path) {
  StrictObject o(j, path);
  GeneratorSpec s;
  o.get("height", s.height);
  o.get("width", s.width);
  o.get("channels", s.channels);
  o.get("num_classes", s.num_classes);
  o.get("labeled", s.labeled);
  o.get("reference", s.reference);
  o.get("test", s.test);
  o.get("objects_min", s.objects_min);
  o.get("objects_max", s.objects_max);
  o.get("radius_min", s.radius_min);
  o.get("radius_max", s.radius_max);
  o.get("margin", s.margin);
  o.get("edge_sharpness", s.edge_sharpness);
  o.get("class_presence", s.class_presence);
  o.get("rare_classes", s.rare_classes);
  o.get("rare_presence", s.rare_presence);
  o.get("rare_radius_scale", s.rare_radius_scale);
  o.get("distractors_max", s.distractors_max);
  o.get("distractor_amplitude", s.distractor_amplitude);
  o.get("distractor_radius_min", s.distractor_radius_min);
  o.get("distractor_radius_max", s.distractor_radius_max);
  o.get("offset_std", s.offset_std);
  o.get("contrast_log_std", s.contrast_log_std);
  o.get("texture", s.texture);
  o.get("texture_sigma", s.texture_sigma);
  o.get("noise", s.noise);
  if (o.has("appearance_seed")) {
    s.appearance_seed = seed_from_json(o.raw("appearance_seed"), o.field("appearance_seed"));
  } else {
    o.get("appearance_seed", s.appearance_seed);
  }
  o.get("foreground_min", s.foreground_min);
  o.get("foreground_max", s.foreground_max);
  o.finish();
  try {
    s.validate();
  } catch (const ValidationError& e) {
    const std::string f = e.field();
    const std::string tail = f.rfind("generator", 0) == 0 ? f.substr(9) : "." + f;
    throw ValidationError(path + tail, e.message());
  }
  return s;
}

Json to_json(const ShiftSpec& s) {
  return Json{{"intensity_scale", s.intensity_scale},
              {"contrast_warp", s.contrast_warp},
              {"radius_scale", s.radius_scale},
              {"anomaly_rate", s.anomaly_rate},
              {"anomaly_intensity", s.anomaly_intensity}};
}

ShiftSpec shift_from_json(const Json& j, const std::string& path) {
  StrictObject o(j, path);
  ShiftSpec s;
  o.get("intensity_scale", s.intensity_scale);
  o.get("contrast_warp", s.contrast_warp);
  o.get("radius_scale", s.radius_scale);
  o.get("anomaly_rate", s.anomaly_rate);
  o.get("anomaly_intensity", s.anomaly_intensity);
  o.finish();
  try {
    s.validate();
  } catch (const ValidationError& e) {
    const std::string f = e.field();
    const std::string tail = f.rfind("shift", 0) == 0 ? f.substr(5) : "." + f;
    throw ValidationError(path + tail, e.message());
  }
  return s;
}

namespace {

Json blobs_to_json(const std::vector<Blob>& blobs) {
  Json arr = Json::array();
  for (const Blob& b : blobs) {
    arr.push_back(Json::array({b.class_id, b.cy, b.cx, b.ry, b.rx, b.angle, b.sharpness}));
  }
  return arr;
}

std::vector<Blob> blobs_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path, "expected an array");
  std::vector<Blob> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 7) {
      throw ValidationError(path, "each blob must be [class, cy, cx, ry, rx, angle, sharpness]");
    }
    Blob b;
    b.class_id = e[0].get<std::uint32_t>();
    b.cy = e[1].get<double>();
    b.cx = e[2].get<double>();
    b.ry = e[3].get<double>();
    b.rx = e[4].get<double>();
    b.angle = e[5].get<double>();
    b.sharpness = e[6].get<double>();
    out.push_back(b);
  }
  return out;
}

}  // namespace

Json to_json(const Scene& s) {
  return Json{{"objects", blobs_to_json(s.objects)},
              {"distractors", blobs_to_json(s.distractors)},
              {"anomalies", blobs_to_json(s.anomalies)},
              {"offset", s.offset},
              {"contrast", s.contrast},
              {"texture_seed", seed_to_json(s.texture_seed)},
              {"noise_seed", seed_to_json(s.noise_seed)},
              {"radius_scale", s.radius_scale},
              {"intensity_scale", s.intensity_scale},
              {"contrast_warp", s.contrast_warp},
              {"anomaly_intensity", s.anomaly_intensity}};
}

Scene scene_from_json(const Json& j, const std::string& path) {
  StrictObject o(j, path);
  Scene s;
  s.objects = blobs_from_json(o.raw("objects"), o.field("objects"));
  s.distractors = blobs_from_json(o.raw("distractors"), o.field("distractors"));
  s.anomalies = blobs_from_json(o.raw("anomalies"), o.field("anomalies"));
  o.get("offset", s.offset);
  o.get("contrast", s.contrast);
  s.texture_seed = seed_from_json(o.raw("texture_seed"), o.field("texture_seed"));
  s.noise_seed = seed_from_json(o.raw("noise_seed"), o.field("noise_seed"));
  o.get("radius_scale", s.radius_scale);
  o.get("intensity_scale", s.intensity_scale);
  o.get("contrast_warp", s.contrast_warp);
  o.get("anomaly_intensity", s.anomaly_intensity);
  o.finish();
  return s;
}

Json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(what, std::string("invalid JSON: ") + e.what());
  }
}

std::string read_text_file(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(what, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_json_file(const std::string& path, const std::string& what) {
  return parse_json_text(read_text_file(path, what), what);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("output", "cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("output", "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("output", "cannot rename onto '" + path + "': " + ec.message());
  }
}

std::string seed_to_json(std::uint64_t v) { return "0x" + hex64(v); }

std::uint64_t seed_from_json(const Json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < 0) throw ValidationError(path, "seed must be >= 0");
    return static_cast<std::uint64_t>(v);
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used, 0);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ValidationError(path, "cannot parse seed '" + s + "'");
    }
  }
  throw ValidationError(path, "expected an integer or hex string");
}

}  // namespace atso::detail
