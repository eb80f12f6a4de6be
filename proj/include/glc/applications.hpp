#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "glc/data.hpp"
#include "glc/model.hpp"
#include "glc/training.hpp"

namespace glc {

inline constexpr double kDefaultNoiseSigma = 20.0 / 255.0;

struct RestorationConfig {
    int steps = 300;
    int batch_size = 8;
    double learning_rate = 1e-4;
    double noise_sigma = kDefaultNoiseSigma;
    bool code_prediction = false;  // add the cross-entropy term of the code-prediction loss
    std::uint64_t seed = 0;
    int crop = 64;
};

/// Trains E_rest (initialized from E) so that E_rest(x + noise) matches E(x) in latent MSE.
/// Returns a codec checkpoint whose encoder is E_rest and whose other weights equal the input
/// codec's, so its streams decode with the stock model. The input checkpoint is not modified.
Checkpoint train_restoration_encoder(Checkpoint& codec, const ImageSet& clean, const RestorationConfig& config,
                                     const LogSink& sink = {});

struct StyleConfig {
    int steps = 300;
    int batch_size = 8;
    double learning_rate = 1e-4;
    double content_weight = 1.0;
    double style_weight = 1.0;
    std::uint64_t seed = 0;
    int crop = 64;
};

/// Trains a freshly initialized decoder D_style on l^ from the frozen codec (all rate indices),
/// with content loss against the codec reconstruction D(l^) and Gram-matrix style loss against
/// `style`. Returns a codec checkpoint whose decoder is D_style; the input is not modified.
Checkpoint train_style_decoder(Checkpoint& codec, const torch::Tensor& style, const ImageSet& content,
                               const StyleConfig& config, const LogSink& sink = {});

/// Duplicates a checkpoint (config, weights, metadata) into independent storage.
Checkpoint clone_checkpoint(const Checkpoint& source);

}  // namespace glc
