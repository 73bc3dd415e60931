#pragma once

#include <filesystem>

#include "pcnet/core/homography.hpp"
#include "pcnet/core/image.hpp"

namespace pcnet::data {

// Decodes png/jpg/bmp to [0,1]; 3-channel images come back in RGB order,
// single-channel images stay single-channel. Throws DecodeError.
Image read_image(const std::filesystem::path& path);

// 8-bit PNG, value * 255 rounded half-up and clamped. Throws IoError.
void write_png(const std::filesystem::path& path, const Image& img);

// 8-bit quantization used by write_png.
Image quantize_8bit(const Image& img);

// Nine whitespace-separated reals, row-major. Throws DataError on malformed
// or degenerate content.
Homography read_homography(const std::filesystem::path& path);
void write_homography(const std::filesystem::path& path, const Homography& h);

}  // namespace pcnet::data
