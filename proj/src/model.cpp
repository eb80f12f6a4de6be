#include "glc/model.hpp"

#include <algorithm>
#include <filesystem>

#include <zlib.h>

#include "glc/errors.hpp"

namespace glc {

std::atomic<std::int64_t> CodePredictorImpl::counter_{0};

GlcModelImpl::GlcModelImpl(const ModelConfig& cfg) : config(cfg) {
    config.validate();
    encoder = register_module("encoder", Encoder(config));
    decoder = register_module("decoder", Decoder(config));
    codebook = register_module("codebook", Codebook(config.codebook_size, config.latent_channels));
    transform = register_module("transform", TransformCoder(config));
    hyper_analysis = register_module("hyper_analysis", HyperAnalysis(config));
    hyper_synthesis = register_module("hyper_synthesis", HyperSynthesis(config));
    if (config.hyper_prior == HyperPrior::Categorical)
        hyper_codebook =
            register_module("hyper_codebook", Codebook(config.effective_hyper_codebook_size(), config.hyper_channels));
    else
        factorized_prior = register_module("factorized_prior", FactorizedPrior(config.hyper_channels));
    context = register_module("context", ContextModel(config));
}

// --- Code predictor --------------------------------------------------------

CodePredictorImpl::CodePredictorImpl(const ModelConfig& config) {
    const int64_t w = config.predictor_width;
    in_proj = register_module("in_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(config.latent_channels, w, 1)));
    position =
        register_module("position", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, w, 3).padding(1).groups(w)));
    norms1 = torch::nn::ModuleList();
    attentions = torch::nn::ModuleList();
    norms2 = torch::nn::ModuleList();
    mlps = torch::nn::ModuleList();
    for (int i = 0; i < config.predictor_blocks; ++i) {
        norms1->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({w})));
        attentions->push_back(torch::nn::MultiheadAttention(w, config.predictor_heads));
        norms2->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({w})));
        mlps->push_back(torch::nn::Sequential(torch::nn::Linear(w, 4 * w), torch::nn::GELU(), torch::nn::Linear(4 * w, w)));
    }
    register_module("norms1", norms1);
    register_module("attentions", attentions);
    register_module("norms2", norms2);
    register_module("mlps", mlps);
    out_norm = register_module("out_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({w})));
    head = register_module("head", torch::nn::Linear(w, config.codebook_size));
}

torch::Tensor CodePredictorImpl::forward(const torch::Tensor& latent) {
    counter_.fetch_add(1);
    const auto b = latent.size(0), h = latent.size(2), w = latent.size(3);
    auto x = in_proj->forward(latent);
    x = x + position->forward(x);
    auto tokens = x.flatten(2).permute({2, 0, 1});  // [L, B, W]
    for (std::size_t i = 0; i < norms1->size(); ++i) {
        auto normed = norms1->at<torch::nn::LayerNormImpl>(i).forward(tokens);
        auto attended = std::get<0>(
            attentions->at<torch::nn::MultiheadAttentionImpl>(i).forward(normed, normed, normed, {}, false));
        tokens = tokens + attended;
        tokens = tokens + mlps->at<torch::nn::SequentialImpl>(i).forward(norms2->at<torch::nn::LayerNormImpl>(i).forward(tokens));
    }
    auto logits = head->forward(out_norm->forward(tokens));  // [L, B, M]
    return logits.permute({1, 2, 0}).reshape({b, -1, h, w});
}

// --- Discriminator ---------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(const ModelConfig& config) {
    body = torch::nn::Sequential();
    const int64_t base = config.disc_channels;
    auto leaky = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); };
    body->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(3, base, 4).stride(2).padding(1)));
    body->push_back(leaky());
    int64_t ch = base;
    for (int i = 1; i < config.disc_layers; ++i) {
        const int64_t out = base * std::min<int64_t>(int64_t{1} << i, 8);
        body->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, out, 4).stride(2).padding(1)));
        body->push_back(leaky());
        ch = out;
    }
    body->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, 1, 4).stride(1).padding(1)));
    register_module("body", body);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image) { return body->forward(image * 2.0 - 1.0); }

TrainingHeadsImpl::TrainingHeadsImpl(const ModelConfig& config) {
    predictor = register_module("predictor", CodePredictor(config));
    discriminator = register_module("discriminator", Discriminator(config));
    reference_encoder = register_module("reference_encoder", Encoder(config));
    set_requires_grad(*reference_encoder, false);
}

// --- Checkpoints -----------------------------------------------------------

Checkpoint Checkpoint::create(const ModelConfig& config) {
    Checkpoint c;
    c.config = config;
    c.model = GlcModel(config);
    c.heads = TrainingHeads(config);
    return c;
}

namespace {

constexpr const char* kCheckpointFormat = "glc-checkpoint-1";

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key) {
    c10::IValue value;
    archive.read(key, value);
    return value.toStringRef();
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    torch::serialize::OutputArchive archive;
    archive.write("format", c10::IValue(std::string(kCheckpointFormat)));
    archive.write("config", c10::IValue(nlohmann::json(checkpoint.config).dump()));
    nlohmann::json meta = {{"stage", checkpoint.stage},
                           {"has_reference_encoder", checkpoint.has_reference_encoder},
                           {"provenance", checkpoint.provenance}};
    archive.write("meta", c10::IValue(meta.dump()));
    torch::serialize::OutputArchive model_archive, heads_archive;
    checkpoint.model->save(model_archive);
    checkpoint.heads->save(heads_archive);
    archive.write("model", model_archive);
    archive.write("heads", heads_archive);
    try {
        archive.save_to(path);
    } catch (const c10::Error& e) {
        throw IoError("cannot write checkpoint " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    if (!std::filesystem::is_regular_file(path)) throw IoError("checkpoint not found: " + path);
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path);
        if (read_string(archive, "format") != kCheckpointFormat) throw InvalidArgument("unknown checkpoint format");
        auto config = nlohmann::json::parse(read_string(archive, "config")).get<ModelConfig>();
        auto meta = nlohmann::json::parse(read_string(archive, "meta"));
        Checkpoint c = Checkpoint::create(config);
        c.stage = meta.at("stage").get<int>();
        c.has_reference_encoder = meta.at("has_reference_encoder").get<bool>();
        c.provenance = meta.at("provenance");
        torch::serialize::InputArchive model_archive, heads_archive;
        archive.read("model", model_archive);
        archive.read("heads", heads_archive);
        c.model->load(model_archive);
        c.heads->load(heads_archive);
        set_requires_grad(*c.heads->reference_encoder, false);
        return c;
    } catch (const c10::Error& e) {
        throw InvalidArgument("not a valid checkpoint: " + path);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("checkpoint " + path + " has malformed metadata: " + e.what());
    }
}

namespace {

uLong crc_tensor(uLong crc, const torch::Tensor& t) {
    auto c = t.detach().to(torch::kCPU, torch::kFloat).contiguous();
    return crc32(crc, reinterpret_cast<const Bytef*>(c.data_ptr<float>()), static_cast<uInt>(c.numel() * sizeof(float)));
}

uLong crc_module(uLong crc, const torch::nn::Module& module) {
    for (const auto& p : module.named_parameters(true)) crc = crc_tensor(crc, p.value());
    return crc;
}

}  // namespace

std::uint32_t model_fingerprint(GlcModel& model) {
    const auto config = nlohmann::json(model->config).dump();
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(config.data()), static_cast<uInt>(config.size()));
    crc = crc_module(crc, *model->transform->synthesis_net);
    crc = crc_tensor(crc, model->transform->log_q_dec);
    if (model->hyper_codebook) crc = crc_module(crc, *model->hyper_codebook);
    if (model->factorized_prior) crc = crc_module(crc, *model->factorized_prior);
    crc = crc_module(crc, *model->hyper_synthesis);
    crc = crc_module(crc, *model->context);
    crc = crc_module(crc, *model->decoder);
    return static_cast<std::uint32_t>(crc);
}

std::uint32_t parameter_hash(const torch::nn::Module& module) {
    return static_cast<std::uint32_t>(crc_module(crc32(0L, Z_NULL, 0), module));
}

void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst) {
    torch::NoGradGuard no_grad;
    auto from = src.named_parameters(true);
    auto to = dst.named_parameters(true);
    if (from.size() != to.size()) throw ShapeError("modules differ in parameter count");
    for (auto& item : to) {
        const auto* source = from.find(item.key());
        if (source == nullptr || source->sizes() != item.value().sizes())
            throw ShapeError("parameter " + item.key() + " has no matching source");
        item.value().copy_(*source);
    }
}

void set_requires_grad(torch::nn::Module& module, bool requires_grad) {
    for (auto& p : module.parameters(true)) p.set_requires_grad(requires_grad);
}

Checkpoint with_hyper_prior(const Checkpoint& source, HyperPrior prior, std::uint64_t seed) {
    auto config = source.config;
    config.hyper_prior = prior;
    torch::manual_seed(seed);
    auto out = Checkpoint::create(config);
    const auto& a = source.model;
    auto& b = out.model;
    copy_parameters(*a->encoder, *b->encoder);
    copy_parameters(*a->decoder, *b->decoder);
    copy_parameters(*a->codebook, *b->codebook);
    copy_parameters(*a->transform, *b->transform);
    copy_parameters(*a->hyper_analysis, *b->hyper_analysis);
    copy_parameters(*a->hyper_synthesis, *b->hyper_synthesis);
    copy_parameters(*a->context, *b->context);
    copy_parameters(*source.heads, *out.heads);
    out.stage = source.stage;
    out.has_reference_encoder = source.has_reference_encoder;
    out.provenance = source.provenance;
    out.provenance["hyper_prior_switched"] = prior == HyperPrior::Categorical ? "categorical" : "factorized";
    return out;
}

}  // namespace glc
