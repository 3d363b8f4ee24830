#pragma once

// Private JSON helpers shared by the IO, report and config code.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "atso/datasets.hpp"
#include "atso/error.hpp"
#include "atso/types.hpp"

namespace atso::detail {

using Json = nlohmann::json;

/// Reads an object field by field and rejects keys that were never read.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string path);

  bool has(const std::string& key) const { return j_.contains(key); }
  const Json& raw(const std::string& key);
  std::string field(const std::string& key) const;

  template <typename T>
  void get(const std::string& key, T& out);
  template <typename T>
  T require(const std::string& key) {
    if (!j_.contains(key)) throw ValidationError(field(key), "missing required field");
    T out{};
    get(key, out);
    return out;
  }
  StrictObject child(const std::string& key);

  /// Throws ValidationError naming the first unknown key.
  void finish() const;

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
void StrictObject::get(const std::string& key, T& out) {
  seen_.insert(key);
  if (!j_.contains(key)) return;
  const Json& v = j_.at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError(field(key), "expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ValidationError(field(key), "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) {
          out = static_cast<T>(v.get<std::uint64_t>());
        } else {
          const auto s = v.get<std::int64_t>();
          if (s < 0) throw ValidationError(field(key), "must be >= 0, got " + std::to_string(s));
          out = static_cast<T>(s);
        }
      } else {
        out = static_cast<T>(v.get<std::int64_t>());
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ValidationError(field(key), "expected a number");
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError(field(key), "expected a string");
      out = v.get<std::string>();
    } else {
      out = v.get<T>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(field(key), e.what());
  }
}

Json to_json(const GeneratorSpec& s);
GeneratorSpec generator_from_json(const Json& j, const std::string& path);
Json to_json(const ShiftSpec& s);
ShiftSpec shift_from_json(const Json& j, const std::string& path);
Json to_json(const Scene& s);
Scene scene_from_json(const Json& j, const std::string& path);

/// Parses a JSON document, turning syntax errors into ValidationError.
Json parse_json_text(const std::string& text, const std::string& what);
Json read_json_file(const std::string& path, const std::string& what);

/// Writes to a temporary sibling and renames over the target.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path, const std::string& what);

/// u64 values are stored as hex strings so that every JSON reader keeps them
/// exact.
std::string seed_to_json(std::uint64_t v);
std::uint64_t seed_from_json(const Json& j, const std::string& path);

}  // namespace atso::detail
