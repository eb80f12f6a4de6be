#include "glc/evaluation.hpp"

#include <iostream>

#include "glc/codec.hpp"
#include "glc/entropy_model.hpp"
#include "glc/errors.hpp"

namespace glc {

namespace {

torch::Tensor to_8bit(const torch::Tensor& x) { return (x.clamp(0.0, 1.0) * 255.0).round() / 255.0; }

ImageSet expand_patches(const ImageSet& images) {
    ImageSet out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto extraction = extract_eval_patches(images.images[i]);
        if (!extraction.warning.empty()) std::cerr << "warning: " << images.names[i] << ": " << extraction.warning << '\n';
        for (std::size_t k = 0; k < extraction.patches.size(); ++k) {
            out.images.push_back(extraction.patches[k].contiguous());
            out.names.push_back(images.names[i] + "#" + std::to_string(k));
        }
    }
    return out;
}

}  // namespace

RdPoint mean_point(const std::vector<RdPoint>& points) {
    RdPoint mean;
    if (points.empty()) return mean;
    for (const auto& p : points) {
        mean.bpp += p.bpp;
        for (const auto& [k, v] : p.metrics) mean.metrics[k] += v;
    }
    const auto n = static_cast<double>(points.size());
    mean.bpp /= n;
    for (auto& [k, v] : mean.metrics) v /= n;
    return mean;
}

EvalReport evaluate_dataset(GlcModel& model, const ImageSet& images, const EvalOptions& options) {
    if (images.empty()) throw InvalidArgument("empty dataset");
    const ImageSet set = options.patches ? expand_patches(images) : images;
    if (set.empty()) throw InvalidArgument("no evaluation patches: every image is smaller than 256 pixels");

    EvalReport report;
    for (int rate : options.rates) {
        std::vector<RdPoint> points;
        for (std::size_t i = 0; i < set.size(); ++i) {
            const auto& x = set.images[i];
            auto encoded = encode_image(model, x, {RateIndex{rate}, options.coder});
            auto decoded = decode_stream(model, encoded.bytes, {options.coder, nullptr});
            auto x_hat = to_8bit(decoded.image[0]);
            RdPoint p;
            p.bpp = encoded.bpp();
            p.metrics["psnr"] = psnr(x, x_hat);
            p.metrics["ms_ssim"] = ms_ssim(x, x_hat);
            p.metrics["latent_mse"] = (encoded.latent - decoded.latent_hat).pow(2).mean().item<double>();
            report.images.push_back({set.names[i], rate, p});
            points.push_back(p);
        }
        report.aggregate[rate] = mean_point(points);
    }
    return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& [rate, p] : report.aggregate) {
        nlohmann::json row = {{"q", rate}, {"bpp", p.bpp}};
        for (const auto& [k, v] : p.metrics) row[k] = v;
        j["rows"].push_back(row);
    }
    j["images"] = nlohmann::json::array();
    for (const auto& e : report.images) {
        nlohmann::json row = {{"name", e.name}, {"q", e.rate}, {"bpp", e.point.bpp}};
        for (const auto& [k, v] : e.point.metrics) row[k] = v;
        j["images"].push_back(row);
    }
    return j;
}

std::vector<RdSample> curve_from_report(const nlohmann::json& report, const std::string& metric) {
    if (!report.contains("rows")) throw InvalidArgument("report has no aggregate rows");
    std::vector<RdSample> curve;
    for (const auto& row : report.at("rows")) {
        if (!row.contains(metric)) throw InvalidArgument("report rows have no metric '" + metric + "'");
        curve.push_back({row.at("bpp").get<double>(), row.at(metric).get<double>()});
    }
    return curve;
}

RdPoint indices_map_baseline(Checkpoint& ckpt, const ImageSet& images) {
    if (images.empty()) throw InvalidArgument("empty dataset");
    torch::NoGradGuard no_grad;
    auto& m = ckpt.model;
    m->eval();
    Encoder& encoder = ckpt.has_reference_encoder ? ckpt.heads->reference_encoder : m->encoder;
    encoder->eval();
    const int bits = bits_for_alphabet(ckpt.config.codebook_size);
    std::vector<RdPoint> points;
    for (const auto& x : images.images) {
        auto latent = encode_latent(encoder, x.unsqueeze(0), ckpt.config, Padding::Reflect);
        auto vq = vq_nearest(latent, m->codebook->embedding);
        RdPoint p;
        p.bpp = static_cast<double>(latent.size(2) * latent.size(3) * bits) / static_cast<double>(x.size(1) * x.size(2));
        p.metrics["latent_mse"] = (latent - vq.codes).pow(2).mean().item<double>();
        points.push_back(p);
    }
    return mean_point(points);
}

RdPoint estimated_rd_point(GlcModel& model, const ImageSet& images, int rate) {
    if (images.empty()) throw InvalidArgument("empty dataset");
    torch::NoGradGuard no_grad;
    model->eval();
    const auto& cfg = model->config;
    std::vector<RdPoint> points;
    for (const auto& x : images.images) {
        auto latent = encode_latent(model->encoder, x.unsqueeze(0), cfg, Padding::Reflect);
        auto y = model->transform->analysis(latent, RateIndex{rate});
        auto y_hat = quantize(y, QuantMode::Round);
        auto z = model->hyper_analysis->forward(y);
        torch::Tensor z_hat;
        double hyper_bits = 0.0;
        if (model->hyper_codebook) {
            auto vq = vq_nearest(z, model->hyper_codebook->embedding);
            z_hat = vq.codes;
            hyper_bits = hyper_index_bits(vq.indices.numel(), cfg.effective_hyper_codebook_size());
        } else {
            z_hat = quantize(z, QuantMode::Round);
            hyper_bits = -torch::log2(model->factorized_prior->likelihood(z_hat)).sum().item<double>();
        }
        const int64_t h = y_hat.size(2), w = y_hat.size(3);
        auto prior = model->hyper_synthesis->forward(z_hat, h, w);
        auto params = model->context->forward_all(prior, y_hat, build_quadtree_plan(h, w));
        const auto rate_bits = estimate_rate(y_hat, params, 0, cfg.effective_hyper_codebook_size());
        RdPoint p;
        p.bpp = (rate_bits.y_bits + hyper_bits) / static_cast<double>(x.size(1) * x.size(2));
        auto latent_hat = model->transform->synthesis(y_hat, RateIndex{rate});
        p.metrics["latent_mse"] = (latent - latent_hat).pow(2).mean().item<double>();
        auto x_hat = decode_latent(model->decoder, latent_hat, cfg, x.size(1), x.size(2));
        p.metrics["psnr"] = psnr(x, to_8bit(x_hat[0]));
        points.push_back(p);
    }
    return mean_point(points);
}

}  // namespace glc
