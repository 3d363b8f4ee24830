#pragma once

#include <filesystem>

#include "atso/datasets.hpp"
#include "atso/types.hpp"

namespace atso {

/// Mask file: `ATSOMSK1`, u32 LE height, width, num_classes, then
/// height*width u8 class indices.
void save_mask(const LabelMap& label, const std::filesystem::path& path);
LabelMap load_mask(const std::filesystem::path& path);

/// Image file: `ATSOIMG1`, u32 LE height, width, channels, then f64 LE
/// values in `Image::data` order.
void save_image(const Image& image, const std::filesystem::path& path);
Image load_image(const std::filesystem::path& path);

/// Writes every image and mask under `dir` plus `manifest.json`; returns the
/// manifest path. Reference ground truth is written too, to a separate
/// `truth/` folder.
std::filesystem::path save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& manifest);

/// Encodes/decodes a mask to the exact on-disk bytes.
std::vector<unsigned char> encode_mask(const LabelMap& label);
LabelMap decode_mask(std::span<const unsigned char> bytes);

}  // namespace atso
