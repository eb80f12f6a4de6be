#include "glc/latent_autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "glc/errors.hpp"

namespace glc {

namespace F = torch::nn::functional;

namespace {

int64_t norm_groups(int64_t channels) {
    const int64_t g = std::gcd<int64_t>(channels, 32);
    return std::max<int64_t>(1, std::min(g, channels / 4));
}

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

struct UpsampleImpl : torch::nn::Module {
    explicit UpsampleImpl(int64_t channels) : conv(register_module("conv", conv3x3(channels, channels))) {}

    torch::Tensor forward(const torch::Tensor& x) {
        auto up = F::interpolate(x, F::InterpolateFuncOptions()
                                        .scale_factor(std::vector<double>{2.0, 2.0})
                                        .mode(torch::kNearest));
        return conv->forward(up);
    }

    torch::nn::Conv2d conv;
};
TORCH_MODULE(Upsample);

}  // namespace

void require_finite(const torch::Tensor& t, const char* what) {
    if (!torch::isfinite(t).all().item<bool>()) throw NonFiniteError(std::string(what) + " contains NaN or Inf");
}

// --- Vector quantization ---------------------------------------------------

torch::Tensor nearest_indices(const torch::Tensor& latent, const torch::Tensor& codebook) {
    if (codebook.dim() != 2 || codebook.size(0) == 0) throw InvalidArgument("codebook is empty");
    if (latent.dim() != 4) throw ShapeError("latent must be [B, N, h, w]");
    if (latent.size(1) != codebook.size(1))
        throw ShapeError("latent has " + std::to_string(latent.size(1)) + " channels, codebook rows have " +
                         std::to_string(codebook.size(1)));
    torch::NoGradGuard no_grad;
    const auto b = latent.size(0), n = latent.size(1), h = latent.size(2), w = latent.size(3);
    const auto flat = latent.detach().permute({0, 2, 3, 1}).reshape({-1, n});
    const auto table = codebook.detach().to(flat.dtype());
    const int64_t m = table.size(0);

    // Direct squared differences, chunked over rows to bound memory.
    const int64_t rows = flat.size(0);
    const int64_t chunk = std::max<int64_t>(1, (int64_t{1} << 22) / std::max<int64_t>(1, m * n));
    auto out = torch::empty({rows}, torch::kLong);
    for (int64_t start = 0; start < rows; start += chunk) {
        const int64_t stop = std::min(rows, start + chunk);
        auto part = flat.slice(0, start, stop);
        auto dist = (part.unsqueeze(1) - table.unsqueeze(0)).pow(2).sum(-1);
        out.slice(0, start, stop).copy_(dist.argmin(1));
    }
    return out.view({b, h, w});
}

torch::Tensor lookup_codes(const torch::Tensor& indices, const torch::Tensor& codebook) {
    const auto n = codebook.size(1);
    auto rows = codebook.index_select(0, indices.flatten());
    return rows.view({indices.size(0), indices.size(1), indices.size(2), n}).permute({0, 3, 1, 2}).contiguous();
}

VqResult vq_nearest(const torch::Tensor& latent, const torch::Tensor& codebook) {
    VqResult r;
    r.indices = nearest_indices(latent, codebook);
    r.codes = lookup_codes(r.indices, codebook);
    r.quantized = latent + (r.codes - latent).detach();
    return r;
}

CodebookImpl::CodebookImpl(int64_t size, int64_t dim) {
    if (size < 1) throw InvalidArgument("codebook is empty");
    const double bound = 1.0 / static_cast<double>(size);
    embedding = register_parameter("embedding", torch::empty({size, dim}).uniform_(-bound, bound));
}

// --- Patch attention -------------------------------------------------------

PatchAttentionImpl::PatchAttentionImpl(int64_t channels, int64_t patch_size) : patch_size_(patch_size) {
    if (patch_size < 1) throw InvalidArgument("patch_size must be >= 1");
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
    query = register_module("query", torch::nn::Linear(channels, channels));
    key = register_module("key", torch::nn::Linear(channels, channels));
    value = register_module("value", torch::nn::Linear(channels, channels));
    proj = register_module("proj", torch::nn::Linear(channels, channels));
}

torch::Tensor PatchAttentionImpl::forward(const torch::Tensor& x) {
    const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    const int64_t ph = std::min(patch_size_, h), pw = std::min(patch_size_, w);
    const int64_t nh = (h + ph - 1) / ph, nw = (w + pw - 1) / pw;
    const int64_t hp = nh * ph, wp = nw * pw;

    auto grid = x.permute({0, 2, 3, 1});  // [B, H, W, C]
    auto valid = torch::ones({b, h, w}, x.options().dtype(torch::kBool));
    if (hp != h || wp != w) {
        grid = F::pad(grid, F::PadFuncOptions({0, 0, 0, wp - w, 0, hp - h}));
        valid = F::pad(valid.to(torch::kFloat), F::PadFuncOptions({0, wp - w, 0, hp - h})).to(torch::kBool);
    }
    auto tokens = grid.reshape({b, nh, ph, nw, pw, c}).permute({0, 1, 3, 2, 4, 5}).reshape({b * nh * nw, ph * pw, c});
    auto keep = valid.reshape({b, nh, ph, nw, pw}).permute({0, 1, 3, 2, 4}).reshape({b * nh * nw, 1, ph * pw});

    auto normed = norm->forward(tokens);
    auto q = query->forward(normed), k = key->forward(normed), v = value->forward(normed);
    auto scores = torch::bmm(q, k.transpose(1, 2)) / std::sqrt(static_cast<double>(c));
    scores = scores.masked_fill(keep.logical_not(), -std::numeric_limits<double>::infinity());
    auto attended = torch::bmm(torch::softmax(scores, -1), v);
    auto out = tokens + proj->forward(attended);

    out = out.reshape({b, nh, nw, ph, pw, c}).permute({0, 1, 3, 2, 4, 5}).reshape({b, hp, wp, c});
    return out.slice(1, 0, h).slice(2, 0, w).permute({0, 3, 1, 2}).contiguous();
}

// --- Residual blocks, encoder, decoder ------------------------------------

ResBlockImpl::ResBlockImpl(int64_t in_channels, int64_t out_channels) {
    norm1 = register_module("norm1", torch::nn::GroupNorm(norm_groups(in_channels), in_channels));
    conv1 = register_module("conv1", conv3x3(in_channels, out_channels));
    norm2 = register_module("norm2", torch::nn::GroupNorm(norm_groups(out_channels), out_channels));
    conv2 = register_module("conv2", conv3x3(out_channels, out_channels));
    if (in_channels != out_channels)
        skip = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
    auto h = conv1->forward(torch::silu(norm1->forward(x)));
    h = conv2->forward(torch::silu(norm2->forward(h)));
    return (skip ? skip->forward(x) : x) + h;
}

EncoderImpl::EncoderImpl(const ModelConfig& config) {
    config.validate();
    body = torch::nn::Sequential();
    const int levels = config.downsample_log2 + 1;
    int64_t ch = config.base_channels * config.channel_mult[0];
    body->push_back(conv3x3(3, ch));
    for (int level = 0; level < levels; ++level) {
        const int64_t out = config.base_channels * config.channel_mult[level];
        for (int r = 0; r < config.res_blocks; ++r) {
            body->push_back(ResBlock(ch, out));
            ch = out;
        }
        if (level + 1 < levels) body->push_back(conv3x3(ch, ch, 2));
    }
    body->push_back(ResBlock(ch, ch));
    body->push_back(PatchAttention(ch, config.patch_size));
    body->push_back(ResBlock(ch, ch));
    body->push_back(torch::nn::GroupNorm(norm_groups(ch), ch));
    body->push_back(torch::nn::SiLU());
    body->push_back(conv3x3(ch, config.latent_channels));
    register_module("body", body);
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& x) { return body->forward(x); }

DecoderImpl::DecoderImpl(const ModelConfig& config) {
    config.validate();
    body = torch::nn::Sequential();
    const int levels = config.downsample_log2 + 1;
    int64_t ch = config.base_channels * config.channel_mult[levels - 1];
    body->push_back(conv3x3(config.latent_channels, ch));
    body->push_back(ResBlock(ch, ch));
    body->push_back(PatchAttention(ch, config.patch_size));
    body->push_back(ResBlock(ch, ch));
    for (int level = levels - 1; level >= 0; --level) {
        const int64_t out = config.base_channels * config.channel_mult[level];
        for (int r = 0; r < config.res_blocks; ++r) {
            body->push_back(ResBlock(ch, out));
            ch = out;
        }
        if (level > 0) body->push_back(Upsample(ch));
    }
    body->push_back(torch::nn::GroupNorm(norm_groups(ch), ch));
    body->push_back(torch::nn::SiLU());
    register_module("body", body);
    conv_out = register_module("conv_out", conv3x3(ch, 3));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& latent) { return conv_out->forward(body->forward(latent)); }

// --- Pipeline helpers ------------------------------------------------------

int64_t latent_extent(int64_t size, const ModelConfig& config) {
    const int64_t f = config.downsample_factor();
    return (size + f - 1) / f;
}

torch::Tensor pad_to_multiple(const torch::Tensor& image, int64_t multiple) {
    const auto h = image.size(-2), w = image.size(-1);
    const int64_t pad_h = (multiple - h % multiple) % multiple;
    const int64_t pad_w = (multiple - w % multiple) % multiple;
    if (pad_h == 0 && pad_w == 0) return image;
    auto options = F::PadFuncOptions({0, pad_w, 0, pad_h});
    if (pad_h < h && pad_w < w) options.mode(torch::kReflect);
    else options.mode(torch::kReplicate);
    return F::pad(image, options);
}

torch::Tensor encode_latent(Encoder& encoder, const torch::Tensor& image, const ModelConfig& config, Padding padding) {
    if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("image must be [B, 3, H, W]");
    const int64_t f = config.downsample_factor();
    torch::Tensor x = image;
    if (padding == Padding::None) {
        if (image.size(2) % f != 0 || image.size(3) % f != 0)
            throw ShapeError("image " + std::to_string(image.size(2)) + "x" + std::to_string(image.size(3)) +
                             " is not divisible by the downsampling factor " + std::to_string(f));
    } else {
        x = pad_to_multiple(image, f);
    }
    return encoder->forward(x * 2.0 - 1.0);
}

torch::Tensor decode_latent(Decoder& decoder, const torch::Tensor& latent, const ModelConfig& config, int64_t height,
                            int64_t width) {
    if (latent.dim() != 4 || latent.size(1) != config.latent_channels)
        throw ShapeError("latent must be [B, " + std::to_string(config.latent_channels) + ", h, w]");
    require_finite(latent, "latent");
    const int64_t f = config.downsample_factor();
    if (height > latent.size(2) * f || width > latent.size(3) * f || height < 1 || width < 1)
        throw ShapeError("requested output size exceeds the latent footprint");
    auto x = decoder->forward(latent);
    x = ((x + 1.0) * 0.5).clamp(0.0, 1.0);
    return x.slice(2, 0, height).slice(3, 0, width).contiguous();
}

}  // namespace glc
