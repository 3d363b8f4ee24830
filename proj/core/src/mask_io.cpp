#include "atso/mask_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "atso/error.hpp"
#include "json_codec.hpp"

namespace atso {

namespace fs = std::filesystem;
using detail::Json;

namespace {

constexpr char kMaskMagic[8] = {'A', 'T', 'S', 'O', 'M', 'S', 'K', '1'};
constexpr char kImageMagic[8] = {'A', 'T', 'S', 'O', 'I', 'M', 'G', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::span<const unsigned char> take(std::size_t n, const char* field) {
    if (bytes_.size() - pos_ < n) {
      throw IoError(field, "short read: need " + std::to_string(n) + " bytes at offset " +
                               std::to_string(pos_) + ", file has " +
                               std::to_string(bytes_.size()));
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32(const char* field) {
    auto b = take(4, field);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }
  double f64(const char* field) {
    auto b = take(8, field);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return std::bit_cast<double>(v);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("path", "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("path", "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("path", "write failed for '" + path.string() + "'");
}

std::uint32_t checked_dim(std::size_t v, const char* field) {
  if (v > 0xffffffffULL) throw IoError(field, "does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<unsigned char> encode_mask(const LabelMap& label) {
  label.validate();
  std::vector<unsigned char> out(kMaskMagic, kMaskMagic + 8);
  put_u32(out, checked_dim(label.height, "height"));
  put_u32(out, checked_dim(label.width, "width"));
  put_u32(out, label.num_classes);
  out.insert(out.end(), label.data.begin(), label.data.end());
  return out;
}

LabelMap decode_mask(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  auto magic = r.take(8, "magic");
  if (std::memcmp(magic.data(), kMaskMagic, 8) != 0) throw IoError("magic", "not an ATSOMSK1 file");
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  const std::uint32_t k = r.u32("num_classes");
  if (k < 2 || k > 256) {
    throw ValidationError("num_classes", "must be in [2, 256], got " + std::to_string(k));
  }
  const std::uint64_t n = static_cast<std::uint64_t>(h) * w;
  if (n > r.remaining()) {
    throw IoError("data", "short read: header declares " + std::to_string(n) +
                              " pixels, file has " + std::to_string(r.remaining()));
  }
  auto data = r.take(static_cast<std::size_t>(n), "data");
  if (r.remaining() != 0) {
    throw IoError("data", std::to_string(r.remaining()) + " trailing bytes after pixel data");
  }
  LabelMap out(h, w, k);
  std::copy(data.begin(), data.end(), out.data.begin());
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (out.data[i] >= k) {
      throw ValidationError("data", "class index " + std::to_string(out.data[i]) + " at pixel " +
                                std::to_string(i) + " >= num_classes " + std::to_string(k));
    }
  }
  return out;
}

void save_mask(const LabelMap& label, const fs::path& path) { write_bytes(path, encode_mask(label)); }

LabelMap load_mask(const fs::path& path) { return decode_mask(read_bytes(path)); }

void save_image(const Image& image, const fs::path& path) {
  image.validate();
  std::vector<unsigned char> out(kImageMagic, kImageMagic + 8);
  put_u32(out, checked_dim(image.height, "height"));
  put_u32(out, checked_dim(image.width, "width"));
  put_u32(out, checked_dim(image.channels, "channels"));
  out.reserve(out.size() + image.data.size() * 8);
  for (double v : image.data) put_f64(out, v);
  write_bytes(path, out);
}

Image load_image(const fs::path& path) {
  const auto bytes = read_bytes(path);
  Reader r(bytes);
  auto magic = r.take(8, "magic");
  if (std::memcmp(magic.data(), kImageMagic, 8) != 0) {
    throw IoError("magic", "not an ATSOIMG1 file");
  }
  const std::uint32_t h = r.u32("height");
  const std::uint32_t w = r.u32("width");
  const std::uint32_t c = r.u32("channels");
  if (c < 1) throw IoError("channels", "must be >= 1");
  const std::uint64_t n = static_cast<std::uint64_t>(h) * w * c;
  if (n * 8 > r.remaining()) {
    throw IoError("data", "short read: header declares " + std::to_string(n) +
                              " values, file has " + std::to_string(r.remaining()) + " bytes");
  }
  Image img(h, w, c);
  for (auto& v : img.data) v = r.f64("data");
  if (r.remaining() != 0) throw IoError("data", "trailing bytes after image data");
  try {
    img.validate();
  } catch (const ValidationError& e) {
    throw IoError("data", e.what());
  }
  return img;
}

fs::path save_bundle(const DatasetBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  Json samples = Json::array();
  auto emit = [&](const Sample& s, const char* role, const LabelMap* mask, bool hidden) {
    Json e;
    e["id"] = s.id;
    e["role"] = role;
    e["domain"] = to_string(s.domain);
    const std::string image_rel = std::string("images/") + s.id + ".img";
    save_image(s.image, dir / image_rel);
    e["image"] = image_rel;
    if (mask) {
      const std::string mask_rel = std::string(hidden ? "truth/" : "masks/") + s.id + ".msk";
      save_mask(*mask, dir / mask_rel);
      e[hidden ? "truth" : "mask"] = mask_rel;
    }
    if (s.scene) e["scene"] = detail::to_json(*s.scene);
    samples.push_back(std::move(e));
  };
  for (const auto& s : bundle.labeled()) emit(s, "S", s.label ? &*s.label : nullptr, false);
  {
    ScopedAccessPhase phase(AccessPhase::evaluation);
    for (const auto& s : bundle.reference()) {
      emit(s, "R", bundle.has_reference_truth() ? &bundle.reference_truth(s.id) : nullptr, true);
    }
  }
  for (const auto& s : bundle.test()) emit(s, "E", s.label ? &*s.label : nullptr, false);

  Json manifest;
  manifest["format"] = "atso-bundle-1";
  manifest["num_classes"] = bundle.num_classes();
  manifest["seed"] = detail::seed_to_json(bundle.seed());
  manifest["generator"] = detail::to_json(bundle.gen_spec());
  if (bundle.shift()) manifest["shift"] = detail::to_json(*bundle.shift());
  manifest["samples"] = std::move(samples);
  const fs::path path = dir / "manifest.json";
  detail::write_file_atomic(path.string(), manifest.dump(2) + "\n");
  return path;
}

DatasetBundle load_bundle(const fs::path& manifest_path) {
  const Json j = detail::read_json_file(manifest_path.string(), "manifest");
  const fs::path base = manifest_path.parent_path();
  detail::StrictObject o(j, "manifest");
  std::string format;
  o.get("format", format);
  if (format != "atso-bundle-1") {
    throw ValidationError("manifest.format", "unsupported format '" + format + "'");
  }
  const auto k = o.require<std::uint32_t>("num_classes");
  const auto seed = detail::seed_from_json(o.raw("seed"), "manifest.seed");
  const GeneratorSpec spec = detail::generator_from_json(o.raw("generator"), "manifest.generator");
  std::optional<ShiftSpec> shift;
  if (o.has("shift")) shift = detail::shift_from_json(o.raw("shift"), "manifest.shift");
  const Json& samples = o.raw("samples");
  o.finish();
  if (!samples.is_array()) throw ValidationError("manifest.samples", "expected an array");

  std::vector<Sample> s_set, r_set, e_set;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string path = "manifest.samples[" + std::to_string(i) + "]";
    detail::StrictObject so(samples[i], path);
    Sample s;
    s.id = so.require<std::string>("id");
    const auto role = so.require<std::string>("role");
    s.domain = domain_from_string(so.require<std::string>("domain"));
    s.image = load_image(base / so.require<std::string>("image"));
    if (so.has("mask")) s.label = load_mask(base / so.require<std::string>("mask"));
    if (so.has("truth")) s.label = load_mask(base / so.require<std::string>("truth"));
    if (so.has("scene")) s.scene = detail::scene_from_json(so.raw("scene"), path + ".scene");
    so.finish();
    if (role == "S") {
      s_set.push_back(std::move(s));
    } else if (role == "R") {
      r_set.push_back(std::move(s));
    } else if (role == "E") {
      e_set.push_back(std::move(s));
    } else {
      throw ValidationError(path + ".role", "expected S|R|E, got '" + role + "'");
    }
  }
  if (s_set.empty() || r_set.empty() || e_set.empty()) {
    throw ValidationError("manifest.samples", "S, R and E must all be non-empty");
  }
  DatasetBundle out(std::move(s_set), std::move(r_set), std::move(e_set), k, spec, seed);
  if (shift) out.set_shift(*shift);
  return out;
}

}  // namespace atso
