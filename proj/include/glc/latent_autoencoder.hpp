#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "glc/config.hpp"

namespace glc {

// Tensor layout conventions used across the library:
//   images   [B, 3, H, W], values in [0, 1]
//   latents  [B, N, h, w]
//   indices  [B, h, w], int64
//   codebook [M, N]

/// Result of nearest-neighbour vector quantization.
struct VqResult {
    torch::Tensor quantized;  // l + sg(l~ - l): forward value l~, gradient copied to l
    torch::Tensor codes;      // l~ = C[indices], differentiable w.r.t. the codebook only
    torch::Tensor indices;
};

/// Indices of the Euclidean-nearest codebook rows (ties resolve to the lowest index).
torch::Tensor nearest_indices(const torch::Tensor& latent, const torch::Tensor& codebook);

/// Gathers codebook rows for an index grid, returning a latent-layout tensor.
torch::Tensor lookup_codes(const torch::Tensor& indices, const torch::Tensor& codebook);

/// Nearest vector quantization with a straight-through gradient.
VqResult vq_nearest(const torch::Tensor& latent, const torch::Tensor& codebook);

/// Learnable codebook table. Shared by the auxiliary codebook C and the hyper codebook C_h.
struct CodebookImpl : torch::nn::Module {
    CodebookImpl(int64_t size, int64_t dim);

    VqResult forward(const torch::Tensor& latent) { return vq_nearest(latent, embedding); }
    int64_t size() const { return embedding.size(0); }
    int64_t dim() const { return embedding.size(1); }

    torch::Tensor embedding;
};
TORCH_MODULE(Codebook);

/// Self-attention restricted to non-overlapping patch_size x patch_size windows of the
/// feature grid. Normalization is per position, so no statistic crosses a window border;
/// a window at least as large as the grid is plain global attention. Grids that do not
/// divide evenly are zero-padded and the padded keys are masked out.
struct PatchAttentionImpl : torch::nn::Module {
    PatchAttentionImpl(int64_t channels, int64_t patch_size);

    torch::Tensor forward(const torch::Tensor& x);
    int64_t patch_size() const { return patch_size_; }

    torch::nn::LayerNorm norm{nullptr};
    torch::nn::Linear query{nullptr}, key{nullptr}, value{nullptr}, proj{nullptr};

  private:
    int64_t patch_size_;
};
TORCH_MODULE(PatchAttention);

struct ResBlockImpl : torch::nn::Module {
    ResBlockImpl(int64_t in_channels, int64_t out_channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
};
TORCH_MODULE(ResBlock);

/// Convolutional residual encoder: downsamples by 2^downsample_log2 and emits N channels.
/// Input is expected in [-1, 1].
struct EncoderImpl : torch::nn::Module {
    explicit EncoderImpl(const ModelConfig& config);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(Encoder);

/// Mirror of the encoder. Output is in [-1, 1] space, unclamped.
struct DecoderImpl : torch::nn::Module {
    explicit DecoderImpl(const ModelConfig& config);
    torch::Tensor forward(const torch::Tensor& latent);

    /// Weight of the final convolution; the adversarial loss balances gradient norms here.
    torch::Tensor last_layer_weight() const { return conv_out->weight; }

    torch::nn::Sequential body{nullptr};
    torch::nn::Conv2d conv_out{nullptr};
};
TORCH_MODULE(Decoder);

enum class Padding { Reflect, None };

/// Pads [B, C, H, W] so H and W become multiples of `multiple`. Reflect padding falls back
/// to edge replication when an image is too small to reflect.
torch::Tensor pad_to_multiple(const torch::Tensor& image, int64_t multiple);

/// l = E(x) for images in [0, 1]. With Padding::None the dimensions must already be
/// multiples of the downsampling factor.
torch::Tensor encode_latent(Encoder& encoder, const torch::Tensor& image, const ModelConfig& config,
                            Padding padding = Padding::Reflect);

/// x^ = D(l^), cropped to (height, width) and clamped to [0, 1]. Rejects non-finite latents.
torch::Tensor decode_latent(Decoder& decoder, const torch::Tensor& latent, const ModelConfig& config,
                            int64_t height, int64_t width);

/// Latent grid extent for an image dimension: ceil(size / 2^k).
int64_t latent_extent(int64_t size, const ModelConfig& config);

/// Throws NonFiniteError when the tensor holds NaN or Inf.
void require_finite(const torch::Tensor& t, const char* what);

}  // namespace glc
