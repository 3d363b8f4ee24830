#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "atso/error.hpp"
#include "atso/mask_io.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("atso_mask_io_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

template <class E>
std::string field_of(auto&& fn) {
  try {
    fn();
  } catch (const E& e) {
    return e.field();
  }
  return "<no throw>";
}

}  // namespace

TEST_SUITE("mask_io") {
  TEST_CASE("random masks round-trip byte for byte") {
    atso::Rng rng(77);
    for (int i = 0; i < 50; ++i) {
      const auto k = static_cast<std::uint32_t>(2 + rng.below(200));
      const auto m = oracle::random_mask(rng, 1 + rng.below(40), 1 + rng.below(40), k);
      const auto bytes = atso::encode_mask(m);
      CHECK(bytes.size() == 20 + m.pixel_count());
      CHECK(atso::decode_mask(bytes) == m);
    }
  }

  TEST_CASE("header layout is magic then little-endian u32s") {
    atso::LabelMap m(2, 3, 4);
    m.at(1, 2) = 3;
    const auto b = atso::encode_mask(m);
    CHECK(std::string(b.begin(), b.begin() + 8) == "ATSOMSK1");
    CHECK(b[8] == 2);
    CHECK(b[12] == 3);
    CHECK(b[16] == 4);
    CHECK(b.back() == 3);
  }

  TEST_CASE("truncated and padded payloads are rejected") {
    const auto good = atso::encode_mask(atso::LabelMap(3, 3, 2));
    auto shortened = good;
    shortened.pop_back();
    CHECK(field_of<atso::IoError>([&] { atso::decode_mask(shortened); }) == "data");
    auto header_only = std::vector<unsigned char>(good.begin(), good.begin() + 10);
    CHECK_THROWS_AS(atso::decode_mask(header_only), atso::IoError);
    auto padded = good;
    padded.push_back(0);
    CHECK(field_of<atso::IoError>([&] { atso::decode_mask(padded); }) == "data");
  }

  TEST_CASE("bad magic, class count and class index") {
    auto b = atso::encode_mask(atso::LabelMap(2, 2, 3));
    auto bad_magic = b;
    bad_magic[0] = 'X';
    CHECK(field_of<atso::IoError>([&] { atso::decode_mask(bad_magic); }) == "magic");
    auto k1 = b;
    k1[16] = 1;
    CHECK(field_of<atso::ValidationError>([&] { atso::decode_mask(k1); }) == "num_classes");
    auto idx = b;
    idx.back() = 3;
    CHECK(field_of<atso::ValidationError>([&] { atso::decode_mask(idx); }) == "data");
  }

  TEST_CASE("files round-trip and missing files raise IoError") {
    const auto d = scratch_dir("files");
    atso::Rng rng(3);
    const auto m = oracle::random_mask(rng, 7, 9, 5);
    atso::save_mask(m, d / "m.msk");
    CHECK(atso::load_mask(d / "m.msk") == m);
    atso::Image im(4, 5, 2);
    for (auto& v : im.data) v = rng.normal();
    atso::save_image(im, d / "i.img");
    CHECK(atso::load_image(d / "i.img") == im);
    CHECK(field_of<atso::IoError>([&] { atso::load_mask(d / "absent.msk"); }) == "path");
  }

  TEST_CASE("bundle round-trips through a manifest") {
    const auto d = scratch_dir("bundle");
    atso::GeneratorSpec s;
    s.labeled = 2;
    s.reference = 3;
    s.test = 2;
    const auto b = atso::gen_synthetic_task(s, 12);
    const auto manifest = atso::save_bundle(b, d);
    const auto back = atso::load_bundle(manifest);
    REQUIRE(back.reference().size() == 3);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back.labeled()[i].image == b.labeled()[i].image);
      CHECK(back.labeled()[i].label == b.labeled()[i].label);
    }
    CHECK(back.has_reference_truth());
    const auto id = b.reference().front().id;
    CHECK(back.reference_truth(id) == b.reference_truth(id));
  }

  TEST_CASE("manifest errors name the offending field") {
    const auto d = scratch_dir("manifest");
    atso::GeneratorSpec s;
    s.labeled = 1;
    s.reference = 2;
    s.test = 1;
    const auto manifest = atso::save_bundle(atso::gen_synthetic_task(s, 1), d);
    std::string text;
    {
      std::ifstream in(manifest);
      text.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto rewrite = [&](const std::string& from, const std::string& to) {
      auto t = text;
      const auto pos = t.find(from);
      REQUIRE(pos != std::string::npos);
      t.replace(pos, from.size(), to);
      std::ofstream(manifest) << t;
    };
    rewrite("\"role\": \"S\"", "\"role\": \"Q\"");
    CHECK(field_of<atso::ValidationError>([&] { atso::load_bundle(manifest); }) ==
          "manifest.samples[0].role");
    rewrite("atso-bundle-1", "atso-bundle-9");
    CHECK(field_of<atso::ValidationError>([&] { atso::load_bundle(manifest); }) ==
          "manifest.format");
  }
}
