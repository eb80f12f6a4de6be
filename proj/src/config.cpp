#include "glc/config.hpp"

#include <fstream>

#include "glc/errors.hpp"

namespace glc {

ModelConfig ModelConfig::natural() { return ModelConfig{}; }

ModelConfig ModelConfig::facial() {
    ModelConfig c;
    c.downsample_log2 = 5;
    c.codebook_size = 1024;
    c.base_channels = 64;
    c.channel_mult = {1, 2, 2, 4, 4, 8};
    return c;
}

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.downsample_log2 = 2;
    c.latent_channels = 8;
    c.codebook_size = 64;
    c.patch_size = 8;
    c.base_channels = 16;
    c.channel_mult = {1, 2, 2};
    c.res_blocks = 1;
    c.hyper_channels = 8;
    c.predictor_width = 32;
    c.predictor_blocks = 2;
    c.predictor_heads = 2;
    c.disc_channels = 16;
    c.disc_layers = 2;
    return c;
}

int bits_for_alphabet(std::int64_t m) {
    if (m < 2) throw InvalidArgument("alphabet size must be at least 2");
    int bits = 0;
    while ((std::int64_t{1} << bits) < m) ++bits;
    return bits;
}

int ModelConfig::hyper_index_bits() const { return bits_for_alphabet(effective_hyper_codebook_size()); }

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw InvalidArgument("invalid model config: " + what); };
    if (downsample_log2 < 1 || downsample_log2 > 8) fail("downsample_log2 must be in [1, 8]");
    if (static_cast<int>(channel_mult.size()) != downsample_log2 + 1)
        fail("channel_mult needs downsample_log2 + 1 entries");
    for (int m : channel_mult)
        if (m < 1) fail("channel_mult entries must be positive");
    if (latent_channels < 1) fail("latent_channels must be positive");
    if (codebook_size < 2) fail("codebook_size must be >= 2");
    if (effective_hyper_codebook_size() < 2) fail("hyper_codebook_size must be >= 2");
    if (patch_size < 1) fail("patch_size must be >= 1");
    if (base_channels < 1 || res_blocks < 1) fail("base_channels/res_blocks must be positive");
    if (rate_levels < 1 || rate_levels > 255) fail("rate_levels must be in [1, 255]");
    if (transform_blocks < 1) fail("transform_blocks must be positive");
    if (hyper_channels < 1) fail("hyper_channels must be positive");
    if (predictor_width < 1 || predictor_heads < 1 || predictor_width % predictor_heads != 0)
        fail("predictor_width must be a positive multiple of predictor_heads");
    if (disc_channels < 1 || disc_layers < 1) fail("discriminator sizes must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{
        {"downsample_log2", c.downsample_log2},
        {"latent_channels", c.latent_channels},
        {"codebook_size", c.codebook_size},
        {"patch_size", c.patch_size},
        {"base_channels", c.base_channels},
        {"channel_mult", c.channel_mult},
        {"res_blocks", c.res_blocks},
        {"rate_levels", c.rate_levels},
        {"transform_blocks", c.transform_blocks},
        {"hyper_channels", c.hyper_channels},
        {"hyper_codebook_size", c.hyper_codebook_size},
        {"hyper_prior", c.hyper_prior == HyperPrior::Categorical ? "categorical" : "factorized"},
        {"predictor_width", c.predictor_width},
        {"predictor_blocks", c.predictor_blocks},
        {"predictor_heads", c.predictor_heads},
        {"disc_channels", c.disc_channels},
        {"disc_layers", c.disc_layers},
    };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    // Start from a named preset, then apply overrides.
    const std::string preset = j.value("preset", std::string{"natural"});
    if (preset == "natural") c = ModelConfig::natural();
    else if (preset == "facial") c = ModelConfig::facial();
    else if (preset == "toy") c = ModelConfig::toy();
    else throw InvalidArgument("unknown model preset '" + preset + "'");

    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    take("downsample_log2", c.downsample_log2);
    take("latent_channels", c.latent_channels);
    take("codebook_size", c.codebook_size);
    take("patch_size", c.patch_size);
    take("base_channels", c.base_channels);
    take("channel_mult", c.channel_mult);
    take("res_blocks", c.res_blocks);
    take("rate_levels", c.rate_levels);
    take("transform_blocks", c.transform_blocks);
    take("hyper_channels", c.hyper_channels);
    take("hyper_codebook_size", c.hyper_codebook_size);
    take("predictor_width", c.predictor_width);
    take("predictor_blocks", c.predictor_blocks);
    take("predictor_heads", c.predictor_heads);
    take("disc_channels", c.disc_channels);
    take("disc_layers", c.disc_layers);
    if (j.contains("hyper_prior")) {
        const auto prior = j.at("hyper_prior").get<std::string>();
        if (prior == "categorical") c.hyper_prior = HyperPrior::Categorical;
        else if (prior == "factorized") c.hyper_prior = HyperPrior::Factorized;
        else throw InvalidArgument("unknown hyper_prior '" + prior + "'");
    }
    c.validate();
}

ModelConfig load_model_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("config " + path + ": " + e.what());
    }
    return j.contains("model") ? j.at("model").get<ModelConfig>() : j.get<ModelConfig>();
}

}  // namespace glc
