#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "glc/entropy_coder.hpp"
#include "glc/model.hpp"
#include "glc/symbol_coder.hpp"
#include "glc/transform_coding.hpp"

namespace glc {

struct EncodeOptions {
    RateIndex rate{0};
    CoderKind coder = CoderKind::Reference;
};

struct EncodeResult {
    std::vector<std::uint8_t> bytes;  // complete .glc file
    Bitstream stream;
    torch::Tensor latent;             // l = E(x), [1, N, h, w]
    torch::Tensor y_hat;              // [1, N, h, w], integer-valued
    double ideal_y_bits = 0.0;        // sum -log2 p over the quantized cdfs actually used
    std::size_t num_symbols = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;

    double bpp() const;
};

struct DecodeOptions {
    CoderKind coder = CoderKind::Reference;
    /// Replaces the checkpoint decoder (e.g. a stylization decoder) for the final x^ = D(l^).
    Decoder* decoder = nullptr;
};

struct DecodeResult {
    torch::Tensor image;       // [1, 3, H, W] in [0, 1]
    torch::Tensor y_hat;       // [1, N, h, w]
    torch::Tensor latent_hat;  // l^ = g_s(y^)
    StreamHeader header;
};

/// Full pipeline x -> .glc bytes. The image is [3, H, W] or [1, 3, H, W] with values in [0, 1].
/// Requires a model with the categorical hyper prior.
EncodeResult encode_image(GlcModel& model, const torch::Tensor& image, const EncodeOptions& options = {});

/// .glc bytes -> x^. Throws ModelMismatch when the stream was produced by a different model and
/// IntegrityError when the decoded y^ fails its checksum.
DecodeResult decode_stream(GlcModel& model, std::span<const std::uint8_t> bytes, const DecodeOptions& options = {});

/// 8 * bytes / (height * width).
double bits_per_pixel(std::size_t bytes, std::int64_t height, std::int64_t width);

/// CRC-32 of y^ as big-endian int16 values in channel, row, column order.
std::uint32_t y_hat_checksum(const torch::Tensor& y_hat);

/// Writes y^ as text ("N h w" followed by the integer values) for debugging and tests.
void write_y_hat_dump(const torch::Tensor& y_hat, const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace glc
