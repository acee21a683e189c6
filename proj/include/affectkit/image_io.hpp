#pragma once

// Binary PPM (P6, 8-bit) reading and writing for cropped face frames.

#include <filesystem>
#include <string>

#include "affectkit/tensor.hpp"

namespace affectkit::image_io {

// chw: (3, H, W) with values in [0, 1]; out-of-range values are clamped.
std::string encode_ppm(const Tensor& chw);
Tensor decode_ppm(const std::string& bytes);

void write_ppm(const std::filesystem::path& path, const Tensor& chw);
Tensor read_ppm(const std::filesystem::path& path);

// Frame file name for a 0-based frame index: 00000.ppm, 00001.ppm, ...
std::string frame_file_name(std::size_t frame_index);

}  // namespace affectkit::image_io
