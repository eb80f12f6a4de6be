#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "glc/config.hpp"

namespace glc {

/// Discrete rate selector; each value owns a pair of learned per-channel scalers.
struct RateIndex {
    int value = 0;

    explicit RateIndex(int v = 0) : value(v) {}
    bool operator==(const RateIndex&) const = default;
};

enum class QuantMode { Round, Noise };

/// Round mode: nearest integer, ties to even. Noise mode: y + u, u ~ U(-0.5, 0.5).
torch::Tensor quantize(const torch::Tensor& y, QuantMode mode);

/// Depth-wise residual block: 1x1 -> depth-wise 3x3 -> 1x1, followed by a 1x1 feed-forward.
struct DepthConvBlockImpl : torch::nn::Module {
    explicit DepthConvBlockImpl(int64_t channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d in_proj{nullptr}, depthwise{nullptr}, out_proj{nullptr};
    torch::nn::Conv2d ffn_in{nullptr}, ffn_out{nullptr};
};
TORCH_MODULE(DepthConvBlock);

/// Analysis/synthesis transforms between the latent l and the code y, at unchanged
/// resolution. Rate variability comes from per-channel scalers q_enc (multiplied after
/// the analysis stack) and q_dec (divided out before the synthesis stack), both kept
/// positive through an exponential parameterization.
struct TransformCoderImpl : torch::nn::Module {
    explicit TransformCoderImpl(const ModelConfig& config);

    /// Analysis stack output before the rate scaler is applied.
    torch::Tensor analysis_prescale(const torch::Tensor& latent);
    torch::Tensor analysis(const torch::Tensor& latent, RateIndex q);
    torch::Tensor synthesis(const torch::Tensor& code, RateIndex q);

    /// Scaler vectors of length N.
    torch::Tensor q_enc(RateIndex q) const;
    torch::Tensor q_dec(RateIndex q) const;
    int rate_levels() const { return static_cast<int>(log_q_enc.size(0)); }

    torch::nn::Sequential analysis_net{nullptr}, synthesis_net{nullptr};
    torch::Tensor log_q_enc, log_q_dec;  // [Q, N]

  private:
    void check(RateIndex q) const;
};
TORCH_MODULE(TransformCoder);

}  // namespace glc
