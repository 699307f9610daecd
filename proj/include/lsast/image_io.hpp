#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lsast/tensor.hpp"

namespace lsast {

// Decodes a PNG or JPEG (sniffed from the file header) into a (3, H, W)
// image with values in [0, 1]. Grayscale and alpha inputs are converted.
Tensor read_image(const std::filesystem::path& path);

// Writes an 8-bit PNG. Accepts (3, H, W) colour or (H, W) grayscale values in
// [0, 1]; values are clamped and rounded half-to-even.
void write_png(const std::filesystem::path& path, const Tensor& image);

// Bilinear resampling with half-pixel centres; identity when sizes match.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

// [0, 1] <-> [-1, 1].
Tensor to_signed(const Tensor& unit);
Tensor to_unit(const Tensor& signed_image);

// 8-bit level of a [-1, 1] value: round-half-to-even of (x + 1) / 2 * 255, clamped.
std::uint8_t quantize_signed(double x);

// Images (*.png, *.jpg, *.jpeg) directly inside dir, sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace lsast
