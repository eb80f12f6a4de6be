#include "glc/transform_coding.hpp"

#include <cmath>
#include <string>

#include "glc/errors.hpp"
#include "glc/latent_autoencoder.hpp"

namespace glc {

namespace {

torch::nn::Conv2d conv1x1(int64_t in, int64_t out) { return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)); }

}  // namespace

torch::Tensor quantize(const torch::Tensor& y, QuantMode mode) {
    if (mode == QuantMode::Round) return torch::round(y);  // half-to-even
    return y + (torch::rand_like(y) - 0.5);
}

DepthConvBlockImpl::DepthConvBlockImpl(int64_t channels) {
    in_proj = register_module("in_proj", conv1x1(channels, channels));
    depthwise = register_module(
        "depthwise", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1).groups(channels)));
    out_proj = register_module("out_proj", conv1x1(channels, channels));
    ffn_in = register_module("ffn_in", conv1x1(channels, 4 * channels));
    ffn_out = register_module("ffn_out", conv1x1(4 * channels, channels));
}

torch::Tensor DepthConvBlockImpl::forward(const torch::Tensor& x) {
    auto h = torch::leaky_relu(in_proj->forward(x), 0.01);
    h = out_proj->forward(depthwise->forward(h));
    auto out = x + h;
    return out + ffn_out->forward(torch::leaky_relu(ffn_in->forward(out), 0.1));
}

TransformCoderImpl::TransformCoderImpl(const ModelConfig& config) {
    const int64_t n = config.latent_channels;
    analysis_net = torch::nn::Sequential();
    synthesis_net = torch::nn::Sequential();
    for (int i = 0; i < config.transform_blocks; ++i) {
        analysis_net->push_back(DepthConvBlock(n));
        synthesis_net->push_back(DepthConvBlock(n));
    }
    register_module("analysis_net", analysis_net);
    register_module("synthesis_net", synthesis_net);

    // Scalers start on a geometric ladder so higher indices quantize more finely.
    const int levels = config.rate_levels;
    auto init = torch::empty({levels, n});
    for (int i = 0; i < levels; ++i) {
        const double offset = levels > 1 ? static_cast<double>(i) - 0.5 * (levels - 1) : 0.0;
        init[i].fill_(0.75 * offset * std::log(2.0));
    }
    log_q_enc = register_parameter("log_q_enc", init.clone());
    log_q_dec = register_parameter("log_q_dec", init.clone());
}

void TransformCoderImpl::check(RateIndex q) const {
    if (q.value < 0 || q.value >= rate_levels())
        throw InvalidArgument("rate index " + std::to_string(q.value) + " outside [0, " +
                              std::to_string(rate_levels()) + ")");
}

torch::Tensor TransformCoderImpl::q_enc(RateIndex q) const {
    check(q);
    return log_q_enc[q.value].exp();
}

torch::Tensor TransformCoderImpl::q_dec(RateIndex q) const {
    check(q);
    return log_q_dec[q.value].exp();
}

torch::Tensor TransformCoderImpl::analysis_prescale(const torch::Tensor& latent) {
    require_finite(latent, "latent");
    return analysis_net->forward(latent);
}

torch::Tensor TransformCoderImpl::analysis(const torch::Tensor& latent, RateIndex q) {
    auto scale = q_enc(q).view({1, -1, 1, 1});
    return analysis_prescale(latent) * scale;
}

torch::Tensor TransformCoderImpl::synthesis(const torch::Tensor& code, RateIndex q) {
    auto scale = q_dec(q).view({1, -1, 1, 1});
    require_finite(code, "code");
    return synthesis_net->forward(code / scale);
}

}  // namespace glc
