#include "glc/applications.hpp"

#include "glc/errors.hpp"
#include "glc/losses.hpp"

namespace glc {

Checkpoint clone_checkpoint(const Checkpoint& source) {
    Checkpoint c = Checkpoint::create(source.config);
    copy_parameters(*source.model, *c.model);
    copy_parameters(*source.heads, *c.heads);
    c.stage = source.stage;
    c.has_reference_encoder = source.has_reference_encoder;
    c.provenance = source.provenance;
    return c;
}

Checkpoint train_restoration_encoder(Checkpoint& codec, const ImageSet& clean, const RestorationConfig& config,
                                     const LogSink& sink) {
    if (clean.empty()) throw InvalidArgument("restoration training needs clean images");
    torch::manual_seed(config.seed);
    Checkpoint out = clone_checkpoint(codec);
    auto& frozen = codec.model;
    frozen->eval();
    set_requires_grad(*out.model, false);
    set_requires_grad(*out.model->encoder, true);
    out.model->encoder->train();

    std::mt19937_64 rng(config.seed * 7919 + 5);
    BatchSampler sampler(clean.size(), static_cast<std::size_t>(config.batch_size), config.seed + 1);
    torch::optim::AdamW optimizer(out.model->encoder->parameters(), torch::optim::AdamWOptions(config.learning_rate));

    for (int step = 0; step < config.steps; ++step) {
        auto x = make_batch(clean, sampler.next(), config.crop, rng);
        auto noisy = add_gaussian_noise(x, config.noise_sigma, config.seed * 100003 + static_cast<std::uint64_t>(step));
        torch::Tensor target;
        {
            torch::NoGradGuard no_grad;
            target = encode_latent(frozen->encoder, x, codec.config, Padding::None);
        }
        auto restored = encode_latent(out.model->encoder, noisy, codec.config, Padding::None);
        auto loss = (restored - target).pow(2).mean();
        torch::Tensor ce = torch::zeros({});
        if (config.code_prediction) {
            auto terms = code_prediction_terms(target, restored, frozen->codebook->embedding, out.heads->predictor);
            ce = terms.ce;
            loss = loss + kCodeAlpha * ce;
        }
        optimizer.zero_grad();
        loss.backward();
        optimizer.step();
        if (sink) sink({{"step", step}, {"application", "restoration"}, {"loss", loss.item<double>()},
                        {"code_ce", ce.item<double>()}});
    }
    out.model->eval();
    set_requires_grad(*out.model, false);
    out.provenance["application"] = {{"kind", "restoration"},
                                     {"steps", config.steps},
                                     {"noise_sigma", config.noise_sigma},
                                     {"seed", config.seed}};
    return out;
}

Checkpoint train_style_decoder(Checkpoint& codec, const torch::Tensor& style, const ImageSet& content,
                               const StyleConfig& config, const LogSink& sink) {
    if (!style.defined() || style.numel() == 0) throw InvalidArgument("style decoder training needs a style image");
    if (content.empty()) throw InvalidArgument("style decoder training needs content images");
    torch::manual_seed(config.seed);
    Checkpoint out = clone_checkpoint(codec);
    {
        Decoder fresh(codec.config);
        copy_parameters(*fresh, *out.model->decoder);
    }
    auto& frozen = codec.model;
    frozen->eval();
    set_requires_grad(*out.model, false);
    set_requires_grad(*out.model->decoder, true);
    out.model->decoder->train();

    RandomConvFeatures features;
    const auto style_batch = (style.dim() == 3 ? style.unsqueeze(0) : style).to(torch::kFloat);
    std::mt19937_64 rng(config.seed * 7919 + 11);
    BatchSampler sampler(content.size(), static_cast<std::size_t>(config.batch_size), config.seed + 1);
    torch::optim::AdamW optimizer(out.model->decoder->parameters(), torch::optim::AdamWOptions(config.learning_rate));
    const int levels = codec.config.rate_levels;

    for (int step = 0; step < config.steps; ++step) {
        auto x = make_batch(content, sampler.next(), config.crop, rng);
        torch::Tensor latent_hat, target;
        {
            torch::NoGradGuard no_grad;
            const RateIndex q{static_cast<int>(rng() % static_cast<std::uint64_t>(levels))};
            auto latent = encode_latent(frozen->encoder, x, codec.config, Padding::None);
            auto y_hat = quantize(frozen->transform->analysis(latent, q), QuantMode::Round);
            latent_hat = frozen->transform->synthesis(y_hat, q);
            target = decode_for_training(frozen->decoder, latent_hat).clamp(0.0, 1.0);
        }
        auto image = decode_for_training(out.model->decoder, latent_hat);
        auto c = content_loss(features, image, target);
        auto s = style_loss(features, image, style_batch);
        auto loss = config.content_weight * c + config.style_weight * s;
        optimizer.zero_grad();
        loss.backward();
        optimizer.step();
        if (sink) sink({{"step", step}, {"application", "style"}, {"loss", loss.item<double>()},
                        {"content", c.item<double>()}, {"style", s.item<double>()}});
    }
    out.model->eval();
    set_requires_grad(*out.model, false);
    out.provenance["application"] = {{"kind", "style"},
                                     {"steps", config.steps},
                                     {"style_weight", config.style_weight},
                                     {"content_weight", config.content_weight},
                                     {"seed", config.seed}};
    return out;
}

}  // namespace glc
