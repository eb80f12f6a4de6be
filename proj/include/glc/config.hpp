#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace glc {

enum class HyperPrior { Categorical, Factorized };

/// Architecture scale of the whole codec. Presets cover the natural-image, facial and
/// toy configurations; every field can be overridden from a config file.
struct ModelConfig {
    // Latent auto-encoder. Downsampling factor is 2^downsample_log2, i.e. f = 1/2^k.
    int downsample_log2 = 4;
    int latent_channels = 256;     // N
    int codebook_size = 16384;     // M
    int patch_size = 32;
    int base_channels = 128;
    std::vector<int> channel_mult = {1, 1, 2, 2, 4};
    int res_blocks = 2;

    // Transform coding and entropy model.
    int rate_levels = 4;
    int transform_blocks = 2;
    int hyper_channels = 256;       // N_h
    int hyper_codebook_size = 0;    // M_h, 0 means "same as codebook_size"
    HyperPrior hyper_prior = HyperPrior::Categorical;

    // Training-only heads.
    int predictor_width = 256;
    int predictor_blocks = 2;
    int predictor_heads = 4;
    int disc_channels = 64;
    int disc_layers = 3;

    static ModelConfig natural();
    static ModelConfig facial();
    static ModelConfig toy();

    int downsample_factor() const { return 1 << downsample_log2; }
    int context_channels() const { return 2 * latent_channels; }
    int effective_hyper_codebook_size() const {
        return hyper_codebook_size > 0 ? hyper_codebook_size : codebook_size;
    }
    /// Fixed-length width of one hyper index, ceil(log2 M_h).
    int hyper_index_bits() const;

    /// Throws InvalidArgument describing the first inconsistent field.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

/// ceil(log2(m)) for m >= 2; the bit width that addresses m symbols.
int bits_for_alphabet(std::int64_t m);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

ModelConfig load_model_config(const std::string& path);

}  // namespace glc
