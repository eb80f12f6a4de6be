#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <torch/torch.h>

#include "glc/model.hpp"

namespace glc {

inline constexpr double kCommitmentBeta = 0.25;
inline constexpr double kCodeAlpha = 0.5;
inline constexpr double kAdversarialWeight = 0.8;
inline constexpr double kCodePixelWeight = 0.05;

// Norms: ||.|| is mean absolute error, ||.||^2 is mean squared error.

struct CodebookLossTerms {
    torch::Tensor codebook;    // ||sg(l) - l~||, moves the codebook
    torch::Tensor commitment;  // ||sg(l~) - l||, moves the encoder
    double beta = kCommitmentBeta;

    torch::Tensor total() const { return codebook + beta * commitment; }
};

/// `codes` are the selected codebook rows (VqResult::codes), differentiable w.r.t. the codebook.
CodebookLossTerms codebook_loss_terms(const torch::Tensor& latent, const torch::Tensor& codes,
                                      double beta = kCommitmentBeta);
torch::Tensor codebook_loss(const torch::Tensor& latent, const torch::Tensor& codes, double beta = kCommitmentBeta);

struct CodePredictionTerms {
    torch::Tensor ce;   // mean per-position cross entropy in nats
    torch::Tensor mse;  // ||l - l^||^2

    torch::Tensor total(double alpha = kCodeAlpha) const { return alpha * ce + mse; }
};

/// Mean cross entropy between [B, M, h, w] logits and [B, h, w] targets.
torch::Tensor code_cross_entropy(const torch::Tensor& logits, const torch::Tensor& targets);

/// Targets are the nearest-codebook indices of `latent` under a frozen codebook; the predictor
/// sees `latent_hat`.
CodePredictionTerms code_prediction_terms(const torch::Tensor& latent, const torch::Tensor& latent_hat,
                                          const torch::Tensor& codebook, CodePredictor& predictor);

// --- Perceptual features ---------------------------------------------------

/// Multi-layer feature maps of an image in [0, 1].
class FeatureExtractor {
  public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<torch::Tensor> features(const torch::Tensor& image) = 0;
};

/// Three frozen, seeded random 3x3 convolution layers (16, 32, 32 channels, strides 1, 2, 2)
/// with ReLU. Stands in for a pretrained perceptual network.
class RandomConvFeatures : public FeatureExtractor {
  public:
    explicit RandomConvFeatures(std::uint64_t seed = 0);
    std::vector<torch::Tensor> features(const torch::Tensor& image) override;

  private:
    std::vector<torch::Tensor> weights_;
    std::vector<torch::Tensor> biases_;
};

struct PerceptualValue {
    torch::Tensor value;
    bool fallback = false;  // no extractor: plain pixel MSE was used
};

/// Sum over layers of the mean squared difference of channel-normalized features. A null
/// extractor falls back to identity features (pixel MSE) and raises the fallback flag.
PerceptualValue perceptual_loss(FeatureExtractor* extractor, const torch::Tensor& x, const torch::Tensor& x_hat);

/// [B, C, H, W] -> [B, C, C] normalized by C * H * W.
torch::Tensor gram_matrix(const torch::Tensor& features);
/// Sum over layers of the MSE between Gram matrices of `image` and `style` (style batch 1
/// broadcasts).
torch::Tensor style_loss(FeatureExtractor& extractor, const torch::Tensor& image, const torch::Tensor& style);
/// Sum over layers of the feature MSE.
torch::Tensor content_loss(FeatureExtractor& extractor, const torch::Tensor& image, const torch::Tensor& target);

// --- Adversarial -----------------------------------------------------------

torch::Tensor hinge_discriminator_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);
torch::Tensor hinge_generator_loss(const torch::Tensor& fake_logits);

/// ||grad_last rec|| / (||grad_last gen|| + 1e-4), clamped to [0, 1e4] and detached.
torch::Tensor adaptive_adversarial_weight(const torch::Tensor& rec_loss, const torch::Tensor& gen_loss,
                                          const torch::Tensor& last_layer);

}  // namespace glc
