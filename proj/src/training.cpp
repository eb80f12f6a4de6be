#include "glc/training.hpp"

#include <fstream>
#include <iostream>

#include "glc/entropy_model.hpp"
#include "glc/errors.hpp"
#include "glc/latent_autoencoder.hpp"

namespace glc {

namespace {

const std::vector<std::string> kPartNames = {"recon",    "perceptual",  "adversarial", "codebook",
                                             "rate_bits_per_pixel", "code_ce", "latent_mse", "code_pixel"};

LossReport empty_report(int stage, double lambda, const torch::Tensor& like) {
    LossReport r;
    r.stage = stage;
    r.lambda = lambda;
    for (const auto& name : kPartNames) r.parts[name] = torch::zeros({}, like.options());
    return r;
}

std::vector<torch::Tensor> trainable(std::initializer_list<const torch::nn::Module*> modules) {
    std::vector<torch::Tensor> out;
    for (const auto* m : modules) {
        if (m == nullptr) continue;
        for (const auto& p : m->parameters(true)) out.push_back(p);
    }
    return out;
}

std::string stage_name(int stage) { return stage == 1 ? "I" : stage == 2 ? "II" : "III"; }

}  // namespace

// --- Config ----------------------------------------------------------------

double TrainConfig::effective_learning_rate() const {
    if (learning_rate > 0.0) return learning_rate;
    return stage == 3 ? 1e-5 : 1e-4;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"stage", c.stage},
                       {"steps", c.steps},
                       {"batch_size", c.batch_size},
                       {"learning_rate", c.learning_rate},
                       {"disc_learning_rate", c.disc_learning_rate},
                       {"weight_decay", c.weight_decay},
                       {"disc_start", c.disc_start},
                       {"lambdas", c.lambdas},
                       {"code_prediction", c.code_prediction},
                       {"dead_code_reinit", c.dead_code_reinit},
                       {"seed", c.seed},
                       {"crop", c.crop},
                       {"data_dir", c.data_dir},
                       {"synthetic_count", c.synthetic_count},
                       {"synthetic_size", c.synthetic_size},
                       {"data_seed", c.data_seed},
                       {"log_path", c.log_path},
                       {"log_every", c.log_every},
                       {"model", c.model}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    take("stage", c.stage);
    take("steps", c.steps);
    take("batch_size", c.batch_size);
    take("learning_rate", c.learning_rate);
    take("disc_learning_rate", c.disc_learning_rate);
    take("weight_decay", c.weight_decay);
    take("disc_start", c.disc_start);
    take("lambdas", c.lambdas);
    take("code_prediction", c.code_prediction);
    take("dead_code_reinit", c.dead_code_reinit);
    take("seed", c.seed);
    take("crop", c.crop);
    take("data_dir", c.data_dir);
    take("synthetic_count", c.synthetic_count);
    take("synthetic_size", c.synthetic_size);
    take("data_seed", c.data_seed);
    take("log_path", c.log_path);
    take("log_every", c.log_every);
    if (j.contains("model")) {
        auto m = j.at("model");
        if (!m.contains("preset")) m["preset"] = "toy";
        c.model = m.get<ModelConfig>();
    }
    if (c.steps < 0 || c.batch_size < 1 || c.crop < 1 || c.log_every < 1)
        throw InvalidArgument("training config: steps, batch_size, crop and log_every must be positive");
    if (c.lambdas.empty()) throw InvalidArgument("training config: lambda ladder is empty");
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open training config " + path);
    try {
        return nlohmann::json::parse(in).get<TrainConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("training config " + path + ": " + e.what());
    }
}

ImageSet load_training_data(const TrainConfig& config) {
    if (!config.data_dir.empty()) return load_image_dir(config.data_dir);
    return synthetic_images(config.synthetic_count, config.synthetic_size, config.data_seed);
}

LambdaLadder::LambdaLadder(std::vector<double> lambdas, std::uint64_t seed) : lambdas_(std::move(lambdas)), rng_(seed) {
    if (lambdas_.empty()) throw InvalidArgument("lambda ladder is empty");
}

std::pair<RateIndex, double> LambdaLadder::sample() {
    const int q = std::uniform_int_distribution<int>(0, static_cast<int>(lambdas_.size()) - 1)(rng_);
    return {RateIndex{q}, lambdas_[static_cast<std::size_t>(q)]};
}

// --- Loss report -----------------------------------------------------------

double LossReport::value(const std::string& name) const {
    auto it = parts.find(name);
    if (it == parts.end()) throw InvalidArgument("no loss part named " + name);
    return it->second.item<double>();
}

std::map<std::string, double> LossReport::values() const {
    std::map<std::string, double> out;
    for (const auto& [name, t] : parts) out[name] = t.item<double>();
    return out;
}

double LossReport::recomposed() const {
    const auto v = values();
    switch (stage) {
        case 1: return v.at("recon") + v.at("perceptual") + kAdversarialWeight * v.at("adversarial") + v.at("codebook");
        case 2:
            return v.at("rate_bits_per_pixel") + lambda * (kCodeAlpha * v.at("code_ce") + v.at("latent_mse")) +
                   v.at("codebook");
        case 3:
            return v.at("rate_bits_per_pixel") +
                   lambda * (v.at("recon") + v.at("perceptual") + kAdversarialWeight * v.at("adversarial") +
                             kCodePixelWeight * v.at("code_pixel")) +
                   v.at("codebook");
        default: throw InvalidArgument("loss report has no stage");
    }
}

// --- Forward passes --------------------------------------------------------

torch::Tensor decode_for_training(Decoder& decoder, const torch::Tensor& latent) {
    return (decoder->forward(latent) + 1.0) * 0.5;
}

CodingForward coding_forward(GlcModel& model, const torch::Tensor& latent, RateIndex q, const LossOptions& options) {
    CodingForward f;
    const int64_t h = latent.size(2), w = latent.size(3);
    f.y = model->transform->analysis(latent, q);
    f.y_tilde = options.y_noise.defined() ? f.y + options.y_noise : quantize(f.y, QuantMode::Noise);
    f.z = model->hyper_analysis->forward(f.y);
    torch::Tensor z_hat;
    if (model->hyper_codebook) {
        auto vq = vq_nearest(f.z, model->hyper_codebook->embedding);
        z_hat = vq.quantized;
        f.hyper_codebook_loss = codebook_loss(f.z, vq.codes);
        const double bits = hyper_index_bits(vq.indices.numel(), model->config.effective_hyper_codebook_size());
        f.hyper_bits = torch::full({}, bits, f.y.options());
    } else {
        z_hat = options.z_noise.defined() ? f.z + options.z_noise : quantize(f.z, QuantMode::Noise);
        f.hyper_bits = -torch::log2(model->factorized_prior->likelihood(z_hat)).sum();
        f.hyper_codebook_loss = torch::zeros({}, f.y.options());
    }
    f.prior = model->hyper_synthesis->forward(z_hat, h, w);
    const auto plan = build_quadtree_plan(h, w);
    f.params = model->context->forward_all(f.prior, f.y_tilde, plan);
    f.y_bits = -torch::log2(gaussian_likelihood(f.y_tilde, f.params.mean, f.params.scale)).sum();
    f.latent_hat = model->transform->synthesis(f.y_tilde, q);
    return f;
}

LossReport stage1_loss(Checkpoint& ckpt, const torch::Tensor& x, const LossOptions& options) {
    auto& m = ckpt.model;
    auto r = empty_report(1, 0.0, x);
    auto latent = encode_latent(m->encoder, x, m->config, Padding::None);
    auto vq = vq_nearest(latent, m->codebook->embedding);
    auto x_hat = decode_for_training(m->decoder, vq.quantized);

    r.parts["recon"] = (x - x_hat).abs().mean();
    auto perceptual = perceptual_loss(options.features, x, x_hat);
    r.parts["perceptual"] = perceptual.value;
    r.perceptual_fallback = perceptual.fallback;
    if (options.adversarial) {
        auto gen = hinge_generator_loss(ckpt.heads->discriminator->forward(x_hat));
        auto weight = options.adaptive_weight
                          ? torch::full({}, *options.adaptive_weight, x.options())
                          : adaptive_adversarial_weight(r.parts["recon"] + r.parts["perceptual"], gen,
                                                        m->decoder->last_layer_weight());
        r.parts["adversarial"] = weight * gen;
    }
    r.parts["codebook"] = codebook_loss(latent, vq.codes);
    r.total = r.parts["recon"] + r.parts["perceptual"] + kAdversarialWeight * r.parts["adversarial"] +
              r.parts["codebook"];
    r.outputs["x_hat"] = x_hat;
    r.outputs["latent"] = latent;
    r.outputs["indices"] = vq.indices;
    return r;
}

LossReport stage2_loss(Checkpoint& ckpt, const torch::Tensor& latent, std::int64_t num_pixels, RateIndex q,
                       double lambda, const LossOptions& options) {
    auto& m = ckpt.model;
    auto r = empty_report(2, lambda, latent);
    auto f = coding_forward(m, latent, q, options);
    r.parts["rate_bits_per_pixel"] = (f.y_bits + f.hyper_bits) / static_cast<double>(num_pixels);
    if (options.code_prediction) {
        auto terms = code_prediction_terms(latent, f.latent_hat, m->codebook->embedding, ckpt.heads->predictor);
        r.parts["code_ce"] = terms.ce;
        r.parts["latent_mse"] = terms.mse;
    } else {
        r.parts["latent_mse"] = (latent - f.latent_hat).pow(2).mean();
    }
    r.parts["codebook"] = f.hyper_codebook_loss;
    r.total = r.parts["rate_bits_per_pixel"] + lambda * (kCodeAlpha * r.parts["code_ce"] + r.parts["latent_mse"]) +
              r.parts["codebook"];
    r.outputs["z"] = f.z;
    if (m->hyper_codebook) r.outputs["hyper_indices"] = nearest_indices(f.z, m->hyper_codebook->embedding);
    r.outputs["latent_hat"] = f.latent_hat;
    return r;
}

LossReport stage3_loss(Checkpoint& ckpt, const torch::Tensor& x, RateIndex q, double lambda,
                       const LossOptions& options) {
    if (!ckpt.has_reference_encoder) throw StageOrderError("stage III needs the frozen stage-I encoder copy (E_VQ)");
    auto& m = ckpt.model;
    auto r = empty_report(3, lambda, x);
    auto latent = encode_latent(m->encoder, x, m->config, Padding::None);
    auto f = coding_forward(m, latent, q, options);
    auto x_hat = decode_for_training(m->decoder, f.latent_hat);
    const auto num_pixels = x.size(0) * x.size(2) * x.size(3);
    r.parts["rate_bits_per_pixel"] = (f.y_bits + f.hyper_bits) / static_cast<double>(num_pixels);

    r.parts["recon"] = (x - x_hat).abs().mean();
    auto perceptual = perceptual_loss(options.features, x, x_hat);
    r.parts["perceptual"] = perceptual.value;
    r.perceptual_fallback = perceptual.fallback;
    if (options.adversarial) {
        auto gen = hinge_generator_loss(ckpt.heads->discriminator->forward(x_hat));
        auto weight = options.adaptive_weight
                          ? torch::full({}, *options.adaptive_weight, x.options())
                          : adaptive_adversarial_weight(r.parts["recon"] + r.parts["perceptual"], gen,
                                                        m->decoder->last_layer_weight());
        r.parts["adversarial"] = weight * gen;
    }

    auto& reference = ckpt.heads->reference_encoder;
    torch::Tensor lp;
    {
        torch::NoGradGuard no_grad;
        lp = reference->forward(x * 2.0 - 1.0);
    }
    auto lp_hat = reference->forward(x_hat * 2.0 - 1.0);
    if (options.code_prediction) {
        auto terms = code_prediction_terms(lp, lp_hat, m->codebook->embedding, ckpt.heads->predictor);
        r.parts["code_ce"] = terms.ce;
        r.parts["code_pixel"] = terms.total(kCodeAlpha);
    } else {
        r.parts["code_pixel"] = (lp - lp_hat).pow(2).mean();
    }
    r.parts["latent_mse"] = (latent - f.latent_hat).pow(2).mean().detach();
    r.parts["codebook"] = f.hyper_codebook_loss;

    auto distortion = r.parts["recon"] + r.parts["perceptual"] + kAdversarialWeight * r.parts["adversarial"] +
                      kCodePixelWeight * r.parts["code_pixel"];
    r.total = r.parts["rate_bits_per_pixel"] + lambda * distortion + r.parts["codebook"];
    r.outputs["x_hat"] = x_hat;
    r.outputs["z"] = f.z;
    if (m->hyper_codebook) r.outputs["hyper_indices"] = nearest_indices(f.z, m->hyper_codebook->embedding);
    return r;
}

// --- Codebook maintenance --------------------------------------------------

namespace {

torch::Tensor pick_rows(const torch::Tensor& samples, int64_t count, std::mt19937_64& rng) {
    std::uniform_int_distribution<int64_t> pick(0, samples.size(0) - 1);
    std::vector<int64_t> rows(static_cast<std::size_t>(count));
    for (auto& r : rows) r = pick(rng);
    return samples.index_select(0, torch::tensor(rows, torch::kLong));
}

torch::Tensor flatten_vectors(const torch::Tensor& grid) {
    return grid.detach().permute({0, 2, 3, 1}).reshape({-1, grid.size(1)});
}

}  // namespace

void init_codebook_from(Codebook& codebook, const torch::Tensor& samples, std::mt19937_64& rng) {
    torch::NoGradGuard no_grad;
    if (samples.dim() != 2 || samples.size(1) != codebook->dim()) throw ShapeError("samples must be [K, N]");
    auto rows = pick_rows(samples, codebook->size(), rng);
    // Jitter keeps duplicated picks apart.
    rows = rows + 1e-3 * torch::randn_like(rows) * (rows.std() + 1e-6);
    codebook->embedding.copy_(rows);
}

int reinit_dead_codes(Codebook& codebook, const torch::Tensor& usage, const torch::Tensor& samples,
                      std::mt19937_64& rng) {
    torch::NoGradGuard no_grad;
    auto dead = (usage == 0).nonzero().flatten();
    const auto count = dead.numel();
    if (count == 0) return 0;
    auto rows = pick_rows(samples, count, rng).to(codebook->embedding.dtype());
    codebook->embedding.index_copy_(0, dead, rows);
    return static_cast<int>(count);
}

// --- Training loop ---------------------------------------------------------

namespace {

Checkpoint checked_input(const TrainConfig& config, std::optional<Checkpoint> input) {
    const int stage = config.stage;
    if (stage < 1 || stage > 3) throw InvalidArgument("stage must be 1, 2 or 3");
    if (stage == 1) {
        if (!input) return Checkpoint::create(config.model);
        if (input->stage > 1)
            throw StageOrderError("stage I cannot resume from a stage-" + std::to_string(input->stage) + " checkpoint");
        return std::move(*input);
    }
    if (!input)
        throw StageOrderError("stage " + stage_name(stage) + " requires a stage-" + stage_name(stage - 1) +
                              " checkpoint (--resume)");
    if (input->stage < stage - 1)
        throw StageOrderError("stage " + stage_name(stage) + " requires a stage-" + stage_name(stage - 1) +
                              " checkpoint, got stage " + std::to_string(input->stage));
    if (input->stage > stage)
        throw StageOrderError("stage " + stage_name(stage) + " cannot resume from a stage-" +
                              std::to_string(input->stage) + " checkpoint");
    return std::move(*input);
}

class StepLogger {
  public:
    StepLogger(const TrainConfig& config, const LogSink& sink) : every_(config.log_every), sink_(sink) {
        if (!config.log_path.empty()) {
            out_.open(config.log_path, std::ios::app);
            if (!out_) throw IoError("cannot open metrics log " + config.log_path);
        }
    }

    void log(int step, const LossReport& report, int q) {
        if (step % every_ != 0 || (!out_.is_open() && !sink_)) return;
        nlohmann::json j = {{"step", step},
                            {"stage", report.stage},
                            {"lambda", report.lambda},
                            {"q", q},
                            {"bpp", report.value("rate_bits_per_pixel")},
                            {"total", report.total.item<double>()}};
        for (const auto& [name, v] : report.values()) j["parts"][name] = v;
        if (report.perceptual_fallback) j["perceptual_fallback"] = true;
        if (out_.is_open()) out_ << j.dump() << std::endl;
        if (sink_) sink_(j);
    }

  private:
    int every_;
    const LogSink& sink_;
    std::ofstream out_;
};

torch::optim::AdamW make_adamw(std::vector<torch::Tensor> params, double lr, double weight_decay,
                               std::tuple<double, double> betas = {0.9, 0.999}) {
    return torch::optim::AdamW(std::move(params), torch::optim::AdamWOptions(lr).weight_decay(weight_decay).betas(betas));
}

void discriminator_step(Checkpoint& ckpt, torch::optim::AdamW& optimizer, const torch::Tensor& x,
                        const torch::Tensor& x_hat) {
    optimizer.zero_grad();
    auto& disc = ckpt.heads->discriminator;
    auto loss = hinge_discriminator_loss(disc->forward(x), disc->forward(x_hat.detach()));
    loss.backward();
    optimizer.step();
}

void run_stage1(Checkpoint& ckpt, const TrainConfig& config, const ImageSet& data, StepLogger& logger) {
    auto& m = ckpt.model;
    std::mt19937_64 rng(config.seed * 7919 + 17);
    BatchSampler sampler(data.size(), static_cast<std::size_t>(config.batch_size), config.seed + 1);
    RandomConvFeatures features;
    set_requires_grad(*m, true);

    if (ckpt.stage == 0) {
        // Seed the codebook with encoder outputs so every entry starts inside the latent cloud.
        torch::NoGradGuard no_grad;
        std::vector<torch::Tensor> samples;
        for (int i = 0; i < 4; ++i) {
            auto x = make_batch(data, sampler.next(), config.crop, rng);
            samples.push_back(flatten_vectors(encode_latent(m->encoder, x, m->config, Padding::None)));
        }
        init_codebook_from(m->codebook, torch::cat(samples), rng);
    }

    const double lr = config.effective_learning_rate();
    auto optimizer = make_adamw(trainable({m->encoder.get(), m->decoder.get(), m->codebook.get()}), lr,
                                config.weight_decay);
    auto disc_optimizer =
        make_adamw(ckpt.heads->discriminator->parameters(), config.disc_learning_rate > 0 ? config.disc_learning_rate : lr,
                   config.weight_decay, {0.5, 0.9});
    const int disc_start = static_cast<int>(config.disc_start * config.steps);
    auto usage = torch::zeros({m->codebook->size()}, torch::kLong);
    torch::Tensor last_latent;

    for (int step = 0; step < config.steps; ++step) {
        const auto indices = sampler.next();
        if (sampler.epoch_rolled() && config.dead_code_reinit && last_latent.defined()) {
            reinit_dead_codes(m->codebook, usage, flatten_vectors(last_latent), rng);
            usage.zero_();
        }
        auto x = make_batch(data, indices, config.crop, rng);
        LossOptions options;
        options.features = &features;
        options.adversarial = step >= disc_start;
        auto report = stage1_loss(ckpt, x, options);
        optimizer.zero_grad();
        report.total.backward();
        optimizer.step();
        usage += torch::bincount(report.outputs["indices"].flatten(), {}, m->codebook->size());
        last_latent = report.outputs["latent"].detach();
        if (options.adversarial) discriminator_step(ckpt, disc_optimizer, x, report.outputs["x_hat"]);
        logger.log(step, report, -1);
    }
}

/// Latents of the frozen encoder for every image, when all images already have the crop size.
torch::Tensor cache_latents(Checkpoint& ckpt, const TrainConfig& config, const ImageSet& data) {
    for (const auto& img : data.images)
        if (img.size(1) != config.crop || img.size(2) != config.crop) return {};
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> parts;
    for (std::size_t start = 0; start < data.size(); start += 16) {
        const auto stop = std::min(data.size(), start + 16);
        std::vector<torch::Tensor> batch(data.images.begin() + static_cast<std::ptrdiff_t>(start),
                                         data.images.begin() + static_cast<std::ptrdiff_t>(stop));
        parts.push_back(encode_latent(ckpt.model->encoder, torch::stack(batch), ckpt.config, Padding::None));
    }
    return torch::cat(parts);
}

void run_stage2(Checkpoint& ckpt, const TrainConfig& config, const ImageSet& data, StepLogger& logger) {
    auto& m = ckpt.model;
    std::mt19937_64 rng(config.seed * 7919 + 29);
    BatchSampler sampler(data.size(), static_cast<std::size_t>(config.batch_size), config.seed + 1);
    LambdaLadder ladder(config.lambdas, config.seed + 2);

    set_requires_grad(*m, true);
    set_requires_grad(*m->encoder, false);
    set_requires_grad(*m->decoder, false);
    set_requires_grad(*m->codebook, false);
    set_requires_grad(*ckpt.heads->predictor, config.code_prediction);

    const auto cache = cache_latents(ckpt, config, data);
    auto batch_latent = [&](const std::vector<std::size_t>& indices) {
        if (cache.defined()) {
            std::vector<int64_t> rows(indices.begin(), indices.end());
            return cache.index_select(0, torch::tensor(rows, torch::kLong));
        }
        torch::NoGradGuard no_grad;
        return encode_latent(m->encoder, make_batch(data, indices, config.crop, rng), ckpt.config, Padding::None);
    };
    const int64_t f = ckpt.config.downsample_factor();

    if (ckpt.stage == 1 && m->hyper_codebook) {
        torch::NoGradGuard no_grad;
        std::vector<torch::Tensor> samples;
        for (int i = 0; i < 4; ++i) {
            auto l = batch_latent(sampler.next());
            auto [q, lambda] = ladder.sample();
            samples.push_back(flatten_vectors(m->hyper_analysis->forward(m->transform->analysis(l, q))));
        }
        init_codebook_from(m->hyper_codebook, torch::cat(samples), rng);
    }

    auto params = trainable({m->transform.get(), m->hyper_analysis.get(), m->hyper_synthesis.get(),
                             m->hyper_codebook ? static_cast<const torch::nn::Module*>(m->hyper_codebook.get())
                                               : static_cast<const torch::nn::Module*>(m->factorized_prior.get()),
                             m->context.get()});
    if (config.code_prediction)
        for (const auto& p : ckpt.heads->predictor->parameters()) params.push_back(p);
    auto optimizer = make_adamw(params, config.effective_learning_rate(), config.weight_decay);
    torch::Tensor usage;
    if (m->hyper_codebook) usage = torch::zeros({m->hyper_codebook->size()}, torch::kLong);
    torch::Tensor last_z;

    for (int step = 0; step < config.steps; ++step) {
        const auto indices = sampler.next();
        if (sampler.epoch_rolled() && config.dead_code_reinit && usage.defined() && last_z.defined()) {
            reinit_dead_codes(m->hyper_codebook, usage, flatten_vectors(last_z), rng);
            usage.zero_();
        }
        auto latent = batch_latent(indices);
        auto [q, lambda] = ladder.sample();
        LossOptions options;
        options.code_prediction = config.code_prediction;
        const int64_t pixels = latent.size(0) * latent.size(2) * latent.size(3) * f * f;
        auto report = stage2_loss(ckpt, latent, pixels, q, lambda, options);
        optimizer.zero_grad();
        report.total.backward();
        optimizer.step();
        if (usage.defined()) usage += torch::bincount(report.outputs["hyper_indices"].flatten(), {}, usage.size(0));
        last_z = report.outputs["z"].detach();
        logger.log(step, report, q.value);
    }
}

void run_stage3(Checkpoint& ckpt, const TrainConfig& config, const ImageSet& data, StepLogger& logger) {
    auto& m = ckpt.model;
    std::mt19937_64 rng(config.seed * 7919 + 43);
    BatchSampler sampler(data.size(), static_cast<std::size_t>(config.batch_size), config.seed + 1);
    LambdaLadder ladder(config.lambdas, config.seed + 2);
    RandomConvFeatures features;

    if (!ckpt.has_reference_encoder) {
        copy_parameters(*m->encoder, *ckpt.heads->reference_encoder);
        ckpt.has_reference_encoder = true;
    }
    set_requires_grad(*m, true);
    set_requires_grad(*m->codebook, false);
    set_requires_grad(*ckpt.heads->reference_encoder, false);
    set_requires_grad(*ckpt.heads->predictor, config.code_prediction);

    std::vector<torch::Tensor> params;
    for (const auto& p : m->parameters(true))
        if (p.requires_grad()) params.push_back(p);
    if (config.code_prediction)
        for (const auto& p : ckpt.heads->predictor->parameters()) params.push_back(p);
    const double lr = config.effective_learning_rate();
    auto optimizer = make_adamw(params, lr, config.weight_decay);
    auto disc_optimizer =
        make_adamw(ckpt.heads->discriminator->parameters(), config.disc_learning_rate > 0 ? config.disc_learning_rate : lr,
                   config.weight_decay, {0.5, 0.9});
    torch::Tensor usage;
    if (m->hyper_codebook) usage = torch::zeros({m->hyper_codebook->size()}, torch::kLong);
    torch::Tensor last_z;

    for (int step = 0; step < config.steps; ++step) {
        const auto indices = sampler.next();
        if (sampler.epoch_rolled() && config.dead_code_reinit && usage.defined() && last_z.defined()) {
            reinit_dead_codes(m->hyper_codebook, usage, flatten_vectors(last_z), rng);
            usage.zero_();
        }
        auto x = make_batch(data, indices, config.crop, rng);
        auto [q, lambda] = ladder.sample();
        LossOptions options;
        options.features = &features;
        options.adversarial = true;
        options.code_prediction = config.code_prediction;
        auto report = stage3_loss(ckpt, x, q, lambda, options);
        optimizer.zero_grad();
        report.total.backward();
        optimizer.step();
        discriminator_step(ckpt, disc_optimizer, x, report.outputs["x_hat"]);
        if (usage.defined()) usage += torch::bincount(report.outputs["hyper_indices"].flatten(), {}, usage.size(0));
        last_z = report.outputs["z"].detach();
        logger.log(step, report, q.value);
    }
}

}  // namespace

Checkpoint train_stage(const TrainConfig& config, const ImageSet& data, std::optional<Checkpoint> input,
                       const LogSink& sink) {
    if (data.empty()) throw InvalidArgument("empty training dataset");
    // Before checked_input: a fresh stage-I model draws its initial weights from this seed.
    torch::manual_seed(config.seed);
    Checkpoint ckpt = checked_input(config, std::move(input));
    if (config.stage > 1 && static_cast<int>(config.lambdas.size()) != ckpt.config.rate_levels)
        throw InvalidArgument("lambda ladder has " + std::to_string(config.lambdas.size()) + " values for " +
                              std::to_string(ckpt.config.rate_levels) + " rate indices");
    ckpt.model->train();
    ckpt.heads->train();
    StepLogger logger(config, sink);

    switch (config.stage) {
        case 1: run_stage1(ckpt, config, data, logger); break;
        case 2: run_stage2(ckpt, config, data, logger); break;
        default: run_stage3(ckpt, config, data, logger); break;
    }

    ckpt.model->eval();
    ckpt.heads->eval();
    set_requires_grad(*ckpt.model, false);
    ckpt.stage = std::max(ckpt.stage, config.stage);
    nlohmann::json record = config;
    record.erase("model");
    record["images"] = data.size();
    ckpt.provenance["history"].push_back(record);
    return ckpt;
}

}  // namespace glc
