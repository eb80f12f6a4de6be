#pragma once

#include <string>

#include <torch/torch.h>

namespace glc {

/// Reads an 8-bit PNG (any color type, converted to RGB) or a binary PPM (P6, maxval 255).
/// Returns [3, H, W] float in [0, 1].
torch::Tensor load_image(const std::string& path);

/// Writes [3, H, W] or [1, 3, H, W] values in [0, 1] as 8-bit RGB; the format follows the
/// extension (.png or .ppm). Values are rounded to the nearest level.
void save_image(const torch::Tensor& image, const std::string& path);

/// [3, H, W] float in [0, 1] -> interleaved 8-bit RGB bytes.
std::vector<std::uint8_t> to_rgb8(const torch::Tensor& image);

}  // namespace glc
