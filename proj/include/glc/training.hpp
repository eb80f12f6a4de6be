#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "glc/data.hpp"
#include "glc/losses.hpp"
#include "glc/model.hpp"
#include "glc/transform_coding.hpp"

namespace glc {

struct TrainConfig {
    int stage = 1;
    int steps = 1000;
    int batch_size = 8;
    double learning_rate = 0.0;       // 0 selects the stage default: 1e-4, 1e-4, 1e-5
    double disc_learning_rate = 0.0;  // 0 follows learning_rate
    double weight_decay = 1e-4;
    double disc_start = 0.3;          // fraction of stage-I steps before the adversarial term starts
    std::vector<double> lambdas = {0.1, 0.4, 1.6, 6.4};
    bool code_prediction = true;
    bool dead_code_reinit = true;
    std::uint64_t seed = 0;
    int crop = 64;

    // Data: a directory of images, or a synthetic set when data_dir is empty.
    std::string data_dir;
    int synthetic_count = 200;
    int synthetic_size = 64;
    std::uint64_t data_seed = 1;

    std::string log_path;  // JSON lines, one record per logged step
    int log_every = 1;

    ModelConfig model = ModelConfig::toy();  // used when stage I starts without a checkpoint

    double effective_learning_rate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::string& path);

/// Uniform draw of a rate index; the paired lambda comes with it.
class LambdaLadder {
  public:
    LambdaLadder(std::vector<double> lambdas, std::uint64_t seed);
    std::pair<RateIndex, double> sample();
    const std::vector<double>& lambdas() const { return lambdas_; }

  private:
    std::vector<double> lambdas_;
    std::mt19937_64 rng_;
};

/// Loss parts by name: recon, perceptual, adversarial, codebook, rate_bits_per_pixel, code_ce,
/// latent_mse, code_pixel. Parts that do not apply to a stage are zero.
struct LossReport {
    int stage = 0;
    double lambda = 0.0;
    torch::Tensor total;
    std::map<std::string, torch::Tensor> parts;
    bool perceptual_fallback = false;
    /// Intermediate tensors the training loop needs (x_hat, indices, latent, z, hyper_indices).
    std::map<std::string, torch::Tensor> outputs;

    double value(const std::string& name) const;
    std::map<std::string, double> values() const;
    /// The stage's documented weighted sum, evaluated from the reported parts:
    ///   I:   recon + perceptual + 0.8 adversarial + codebook
    ///   II:  rate + lambda (0.5 code_ce + latent_mse) + codebook
    ///   III: rate + lambda (recon + perceptual + 0.8 adversarial + 0.05 code_pixel) + codebook
    /// In stages II and III `codebook` is the hyper-codebook loss.
    double recomposed() const;
};

struct LossOptions {
    FeatureExtractor* features = nullptr;
    bool adversarial = false;              // include the generator term
    std::optional<double> adaptive_weight; // fixed weight instead of the gradient-norm ratio
    bool code_prediction = true;
    torch::Tensor y_noise;                 // fixed quantization noise; fresh U(-0.5, 0.5) if undefined
    torch::Tensor z_noise;                 // same, for the factorized hyper prior
};

/// Differentiable transform-coding pass used by stages II and III.
struct CodingForward {
    torch::Tensor y, y_tilde, z, prior, latent_hat;
    EntropyParameters params;
    torch::Tensor y_bits;      // sum -log2 p(y~)
    torch::Tensor hyper_bits;  // fixed-length index cost, or -log2 p(z~) for the factorized prior
    torch::Tensor hyper_codebook_loss;
};

CodingForward coding_forward(GlcModel& model, const torch::Tensor& latent, RateIndex q, const LossOptions& options);

/// Maps decoder output to image range without clamping (training path).
torch::Tensor decode_for_training(Decoder& decoder, const torch::Tensor& latent);

LossReport stage1_loss(Checkpoint& ckpt, const torch::Tensor& x, const LossOptions& options);
/// `latent` is E(x) from the frozen encoder; `num_pixels` is the pixel count of the batch.
LossReport stage2_loss(Checkpoint& ckpt, const torch::Tensor& latent, std::int64_t num_pixels, RateIndex q,
                       double lambda, const LossOptions& options);
LossReport stage3_loss(Checkpoint& ckpt, const torch::Tensor& x, RateIndex q, double lambda,
                       const LossOptions& options);

/// Replaces codebook rows with random rows of `samples` ([K, N]).
void init_codebook_from(Codebook& codebook, const torch::Tensor& samples, std::mt19937_64& rng);
/// Reinitializes rows whose usage count is zero; returns how many were replaced.
int reinit_dead_codes(Codebook& codebook, const torch::Tensor& usage, const torch::Tensor& samples,
                      std::mt19937_64& rng);

using LogSink = std::function<void(const nlohmann::json&)>;

/// Runs one training stage. Stage I may start fresh (no checkpoint); stage II needs a stage-I
/// (or stage-II) checkpoint and stage III a stage-II (or stage-III) one, otherwise
/// StageOrderError. The input checkpoint is modified in place and returned.
Checkpoint train_stage(const TrainConfig& config, const ImageSet& data, std::optional<Checkpoint> input,
                       const LogSink& sink = {});

/// Dataset named by a training config.
ImageSet load_training_data(const TrainConfig& config);

}  // namespace glc
