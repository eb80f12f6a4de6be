#include "glc/codec.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>

#include "glc/entropy_model.hpp"
#include "glc/errors.hpp"

namespace glc {

namespace {

torch::Tensor as_batch(const torch::Tensor& image) {
    if (image.dim() == 3) return image.unsqueeze(0);
    if (image.dim() == 4 && image.size(0) == 1) return image;
    throw ShapeError("expected a single image [3, H, W] or [1, 3, H, W]");
}

void require_categorical(const GlcModel& model) {
    if (!model->hyper_codebook)
        throw InvalidArgument("the factorized-prior ablation has no bitstream; evaluate it with estimated rates");
}

std::string hex32(std::uint32_t v) {
    char buf[9];
    std::snprintf(buf, sizeof(buf), "%08x", v);
    return buf;
}

/// Cdf tables for the symbols of one quadtree step, in coding order (positions of the group
/// in plan order, channels innermost).
std::vector<CdfTable> step_cdfs(const EntropyParameters& params, const QuadtreePlan& plan, int step, int k_min,
                                int k_max) {
    auto mean = params.mean[0].to(torch::kDouble).contiguous();
    auto scale = params.scale[0].to(torch::kDouble).contiguous();
    auto m = mean.accessor<double, 3>();
    auto s = scale.accessor<double, 3>();
    const auto channels = mean.size(0);
    std::vector<CdfTable> cdfs;
    cdfs.reserve(plan.groups[step].size() * static_cast<std::size_t>(channels));
    for (const auto& [i, j] : plan.groups[step])
        for (int64_t c = 0; c < channels; ++c) cdfs.push_back(quantize_pmf(symbol_pmf(m[c][i][j], s[c][i][j], k_min, k_max)));
    return cdfs;
}

torch::Tensor masked_partial(const torch::Tensor& y_hat, const QuadtreePlan& plan, int step) {
    auto mask = plan.mask_before(step).to(y_hat.dtype()) > 0;
    return torch::where(mask, y_hat, torch::zeros_like(y_hat));
}

}  // namespace

double EncodeResult::bpp() const { return bits_per_pixel(bytes.size(), height, width); }

double bits_per_pixel(std::size_t bytes, std::int64_t height, std::int64_t width) {
    if (height < 1 || width < 1) throw InvalidArgument("image has no pixels");
    return 8.0 * static_cast<double>(bytes) / static_cast<double>(height * width);
}

std::uint32_t y_hat_checksum(const torch::Tensor& y_hat) {
    auto v = y_hat.detach().to(torch::kCPU).to(torch::kInt32).contiguous();
    std::vector<std::uint8_t> bytes;
    bytes.reserve(static_cast<std::size_t>(v.numel()) * 2);
    const auto* p = v.data_ptr<std::int32_t>();
    for (int64_t i = 0; i < v.numel(); ++i) {
        const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(p[i]));
        bytes.push_back(static_cast<std::uint8_t>(u >> 8));
        bytes.push_back(static_cast<std::uint8_t>(u & 0xFF));
    }
    return crc32_of(bytes);
}

EncodeResult encode_image(GlcModel& model, const torch::Tensor& image, const EncodeOptions& options) {
    require_categorical(model);
    torch::NoGradGuard no_grad;
    model->eval();
    const auto& cfg = model->config;
    auto x = as_batch(image).to(torch::kFloat);
    if (x.size(1) != 3) throw ShapeError("image must have 3 channels");
    require_finite(x, "image");
    const int64_t height = x.size(2), width = x.size(3);
    if (height > std::numeric_limits<std::uint32_t>::max() || width > std::numeric_limits<std::uint32_t>::max())
        throw InvalidArgument("image too large for the .glc header");
    if (options.rate.value < 0 || options.rate.value >= cfg.rate_levels || options.rate.value > 255)
        throw InvalidArgument("rate index " + std::to_string(options.rate.value) + " outside [0, " +
                              std::to_string(cfg.rate_levels) + ")");

    EncodeResult r;
    r.height = height;
    r.width = width;
    r.latent = encode_latent(model->encoder, x, cfg, Padding::Reflect);
    auto y = model->transform->analysis(r.latent, options.rate);
    require_finite(y, "code");
    r.y_hat = quantize(y, QuantMode::Round);
    const int64_t h = r.y_hat.size(2), w = r.y_hat.size(3);

    auto z = model->hyper_analysis->forward(y);
    auto vq = vq_nearest(z, model->hyper_codebook->embedding);
    auto prior = model->hyper_synthesis->forward(vq.codes, h, w);

    const auto plan = build_quadtree_plan(h, w);
    const auto [k_min, k_max] = coding_support(r.y_hat);
    auto values = r.y_hat[0].to(torch::kInt32).contiguous();
    auto v = values.accessor<std::int32_t, 3>();

    std::vector<std::uint32_t> symbols;
    std::vector<CdfTable> cdfs;
    for (int step = 0; step < 4; ++step) {
        auto params = model->context->predict_params(prior, masked_partial(r.y_hat, plan, step), plan, step);
        auto tables = step_cdfs(params, plan, step, k_min, k_max);
        std::move(tables.begin(), tables.end(), std::back_inserter(cdfs));
        for (const auto& [i, j] : plan.groups[step])
            for (int64_t c = 0; c < values.size(0); ++c) symbols.push_back(static_cast<std::uint32_t>(v[c][i][j] - k_min));
    }

    auto coder = make_symbol_coder(options.coder);
    r.stream.y_payload = coder->encode(symbols, cdfs);
    r.ideal_y_bits = ideal_codelength_bits(symbols, cdfs);
    r.num_symbols = symbols.size();

    auto& hdr = r.stream.header;
    hdr.orig_height = static_cast<std::uint32_t>(height);
    hdr.orig_width = static_cast<std::uint32_t>(width);
    hdr.rate_index = static_cast<std::uint8_t>(options.rate.value);
    hdr.hyper_height = static_cast<std::uint16_t>(vq.indices.size(1));
    hdr.hyper_width = static_cast<std::uint16_t>(vq.indices.size(2));
    hdr.hyper_codebook_size = static_cast<std::uint32_t>(cfg.effective_hyper_codebook_size());
    hdr.support_min = static_cast<std::int16_t>(k_min);
    hdr.support_max = static_cast<std::int16_t>(k_max);
    auto idx = vq.indices.flatten().contiguous();
    const auto* ip = idx.data_ptr<int64_t>();
    r.stream.hyper_indices.assign(ip, ip + idx.numel());
    r.stream.model_fingerprint = model_fingerprint(model);
    r.stream.symbol_checksum = y_hat_checksum(r.y_hat);
    r.bytes = pack_bitstream(r.stream);
    return r;
}

DecodeResult decode_stream(GlcModel& model, std::span<const std::uint8_t> bytes, const DecodeOptions& options) {
    require_categorical(model);
    torch::NoGradGuard no_grad;
    model->eval();
    const auto& cfg = model->config;
    const Bitstream stream = unpack_bitstream(bytes);
    const auto& hdr = stream.header;

    const auto fingerprint = model_fingerprint(model);
    if (stream.model_fingerprint != fingerprint)
        throw ModelMismatch("stream was encoded with model " + hex32(stream.model_fingerprint) + " but checkpoint is " +
                            hex32(fingerprint));
    if (hdr.hyper_codebook_size != static_cast<std::uint32_t>(cfg.effective_hyper_codebook_size()))
        throw ModelMismatch("stream hyper codebook size differs from the checkpoint");
    if (hdr.rate_index >= cfg.rate_levels) throw BitstreamError("rate index in stream exceeds the model's levels");
    if (hdr.orig_height == 0 || hdr.orig_width == 0) throw BitstreamError("stream declares an empty image");
    const int64_t h = latent_extent(hdr.orig_height, cfg), w = latent_extent(hdr.orig_width, cfg);
    if (hdr.hyper_height != hyper_extent(h) || hdr.hyper_width != hyper_extent(w))
        throw BitstreamError("hyper grid dimensions do not match the image size");

    std::vector<int64_t> idx(stream.hyper_indices.begin(), stream.hyper_indices.end());
    auto indices = torch::tensor(idx, torch::kLong).view({1, hdr.hyper_height, hdr.hyper_width});
    auto z_hat = lookup_codes(indices, model->hyper_codebook->embedding);
    auto prior = model->hyper_synthesis->forward(z_hat, h, w);

    const auto plan = build_quadtree_plan(h, w);
    const int k_min = hdr.support_min, k_max = hdr.support_max;
    auto y_hat = torch::zeros({1, cfg.latent_channels, h, w});
    auto values = torch::zeros({cfg.latent_channels, h, w}, torch::kInt32);
    auto v = values.accessor<std::int32_t, 3>();
    auto coder = make_symbol_coder(options.coder);
    auto decoder = coder->open(stream.y_payload);
    for (int step = 0; step < 4; ++step) {
        auto params = model->context->predict_params(prior, y_hat, plan, step);
        const auto cdfs = step_cdfs(params, plan, step, k_min, k_max);
        const auto symbols = decoder->decode(cdfs);
        std::size_t n = 0;
        for (const auto& [i, j] : plan.groups[step])
            for (int64_t c = 0; c < cfg.latent_channels; ++c) v[c][i][j] = static_cast<std::int32_t>(symbols[n++]) + k_min;
        y_hat = values.to(torch::kFloat).unsqueeze(0);
    }
    if (y_hat_checksum(y_hat) != stream.symbol_checksum)
        throw IntegrityError("decoded y^ fails its checksum; the stream is corrupted");

    DecodeResult r;
    r.header = hdr;
    r.y_hat = y_hat;
    r.latent_hat = model->transform->synthesis(y_hat, RateIndex{hdr.rate_index});
    Decoder& d = options.decoder != nullptr ? *options.decoder : model->decoder;
    d->eval();
    r.image = decode_latent(d, r.latent_hat, cfg, hdr.orig_height, hdr.orig_width);
    return r;
}

void write_y_hat_dump(const torch::Tensor& y_hat, const std::string& path) {
    auto v = y_hat.detach().squeeze(0).to(torch::kInt32).contiguous();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << v.size(0) << ' ' << v.size(1) << ' ' << v.size(2) << '\n';
    const auto* p = v.data_ptr<std::int32_t>();
    for (int64_t i = 0; i < v.numel(); ++i) out << p[i] << ((i + 1) % v.size(2) == 0 ? '\n' : ' ');
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace glc
