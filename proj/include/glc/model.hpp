#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>
#include <torch/torch.h>

#include "glc/config.hpp"
#include "glc/entropy_model.hpp"
#include "glc/latent_autoencoder.hpp"
#include "glc/transform_coding.hpp"

namespace glc {

/// Every module the codec needs, plus the auxiliary codebook C used by the indices-map
/// baseline and code supervision.
struct GlcModelImpl : torch::nn::Module {
    explicit GlcModelImpl(const ModelConfig& config);

    ModelConfig config;
    Encoder encoder{nullptr};
    Decoder decoder{nullptr};
    Codebook codebook{nullptr};
    TransformCoder transform{nullptr};
    HyperAnalysis hyper_analysis{nullptr};
    HyperSynthesis hyper_synthesis{nullptr};
    Codebook hyper_codebook{nullptr};        // categorical prior
    FactorizedPrior factorized_prior{nullptr};  // factorized ablation
    ContextModel context{nullptr};
};
TORCH_MODULE(GlcModel);

/// Transformer head predicting the VQ index of every latent position: [B, N, h, w] ->
/// [B, M, h, w] logits. Only the training losses call it.
struct CodePredictorImpl : torch::nn::Module {
    explicit CodePredictorImpl(const ModelConfig& config);
    torch::Tensor forward(const torch::Tensor& latent);

    /// Number of forward passes since process start (or the last reset), across instances.
    static std::int64_t evaluations() { return counter_.load(); }
    static void reset_evaluations() { counter_.store(0); }

    torch::nn::Conv2d in_proj{nullptr}, position{nullptr};
    torch::nn::ModuleList norms1{nullptr}, attentions{nullptr}, norms2{nullptr}, mlps{nullptr};
    torch::nn::LayerNorm out_norm{nullptr};
    torch::nn::Linear head{nullptr};

  private:
    static std::atomic<std::int64_t> counter_;
};
TORCH_MODULE(CodePredictor);

/// PatchGAN discriminator: strided 4x4 convolutions ending in a one-channel score map.
struct DiscriminatorImpl : torch::nn::Module {
    explicit DiscriminatorImpl(const ModelConfig& config);
    torch::Tensor forward(const torch::Tensor& image);

    torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(Discriminator);

/// Training-only networks. reference_encoder is E_VQ, the frozen stage-I encoder copy.
struct TrainingHeadsImpl : torch::nn::Module {
    explicit TrainingHeadsImpl(const ModelConfig& config);

    CodePredictor predictor{nullptr};
    Discriminator discriminator{nullptr};
    Encoder reference_encoder{nullptr};
};
TORCH_MODULE(TrainingHeads);

struct Checkpoint {
    ModelConfig config;
    GlcModel model{nullptr};
    TrainingHeads heads{nullptr};
    int stage = 0;                 // last completed training stage, 0 = untrained
    bool has_reference_encoder = false;
    nlohmann::json provenance = nlohmann::json::object();

    static Checkpoint create(const ModelConfig& config);
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
/// Throws IoError for missing files and InvalidArgument for files that are not checkpoints.
Checkpoint load_checkpoint(const std::string& path);

/// CRC-32 over the config and every weight the decoder side needs to reproduce y^ and x^
/// (synthesis transform, decoder-side scalers, hyper codebook and synthesis, context model,
/// decoder). Encoder-side weights are excluded, so a restoration encoder produces streams the
/// stock model decodes.
std::uint32_t model_fingerprint(GlcModel& model);

/// CRC-32 over all parameters of a module, in registration order.
std::uint32_t parameter_hash(const torch::nn::Module& module);

/// Copies parameter values from `src` into `dst`; both must have the same structure.
void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst);

void set_requires_grad(torch::nn::Module& module, bool requires_grad);

/// Same weights under a different hyper prior: every module shared by both variants is copied,
/// the prior itself starts fresh from `seed`. Used to branch the factorized ablation off a
/// stage-I model.
Checkpoint with_hyper_prior(const Checkpoint& source, HyperPrior prior, std::uint64_t seed = 0);

}  // namespace glc
