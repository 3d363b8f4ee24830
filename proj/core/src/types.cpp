#include "atso/types.hpp"

#include <cmath>

#include "atso/error.hpp"

namespace atso {

void Image::validate() const {
  if (channels < 1) throw ValidationError("image.channels", "must be >= 1");
  if (data.size() != height * width * channels) {
    throw ValidationError("image.data", "length " + std::to_string(data.size()) +
                                            " != height*width*channels");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw ValidationError("image.data", "non-finite value");
  }
}

void LabelMap::validate() const {
  if (num_classes < 2 || num_classes > 256) {
    throw ValidationError("label.num_classes", "must be in [2, 256], got " +
                                                   std::to_string(num_classes));
  }
  if (data.size() != height * width) {
    throw ValidationError("label.data", "length " + std::to_string(data.size()) +
                                            " != height*width");
  }
  for (std::uint8_t v : data) {
    if (v >= num_classes) {
      throw ValidationError("label.data", "class index " + std::to_string(v) +
                                              " >= num_classes " + std::to_string(num_classes));
    }
  }
}

const char* to_string(Domain d) noexcept {
  return d == Domain::source ? "source" : "target";
}

Domain domain_from_string(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw ValidationError("domain", "expected source|target, got '" + s + "'");
}

}  // namespace atso
