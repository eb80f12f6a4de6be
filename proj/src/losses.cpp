#include "glc/losses.hpp"

#include <cmath>

#include "glc/errors.hpp"
#include "glc/latent_autoencoder.hpp"

namespace glc {

namespace F = torch::nn::functional;

CodebookLossTerms codebook_loss_terms(const torch::Tensor& latent, const torch::Tensor& codes, double beta) {
    if (latent.sizes() != codes.sizes()) throw ShapeError("latent and codes differ in shape");
    CodebookLossTerms t;
    t.codebook = (latent.detach() - codes).abs().mean();
    t.commitment = (codes.detach() - latent).abs().mean();
    t.beta = beta;
    return t;
}

torch::Tensor codebook_loss(const torch::Tensor& latent, const torch::Tensor& codes, double beta) {
    return codebook_loss_terms(latent, codes, beta).total();
}

torch::Tensor code_cross_entropy(const torch::Tensor& logits, const torch::Tensor& targets) {
    if (logits.dim() != 4 || targets.dim() != 3 || logits.size(0) != targets.size(0) ||
        logits.size(2) != targets.size(1) || logits.size(3) != targets.size(2))
        throw ShapeError("logits [B, M, h, w] and targets [B, h, w] are not aligned");
    return F::cross_entropy(logits, targets);
}

CodePredictionTerms code_prediction_terms(const torch::Tensor& latent, const torch::Tensor& latent_hat,
                                          const torch::Tensor& codebook, CodePredictor& predictor) {
    if (latent.sizes() != latent_hat.sizes()) throw ShapeError("l and l^ differ in shape");
    auto targets = nearest_indices(latent, codebook);
    auto logits = predictor->forward(latent_hat);
    if (logits.size(1) != codebook.size(0))
        throw ShapeError("predictor emits " + std::to_string(logits.size(1)) + " logits for a codebook of " +
                         std::to_string(codebook.size(0)));
    return {code_cross_entropy(logits, targets), (latent - latent_hat).pow(2).mean()};
}

// --- Perceptual features ---------------------------------------------------

RandomConvFeatures::RandomConvFeatures(std::uint64_t seed) {
    auto gen = at::detail::createCPUGenerator(seed);
    const std::vector<std::pair<int64_t, int64_t>> shapes = {{3, 16}, {16, 32}, {32, 32}};
    for (const auto& [in, out] : shapes) {
        const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
        weights_.push_back(torch::randn({out, in, 3, 3}, gen) * std);
        biases_.push_back(torch::randn({out}, gen) * 0.01);
    }
}

std::vector<torch::Tensor> RandomConvFeatures::features(const torch::Tensor& image) {
    std::vector<torch::Tensor> out;
    auto h = image * 2.0 - 1.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        const auto& w = weights_[i];
        h = F::conv2d(h, w.to(h.dtype()),
                      F::Conv2dFuncOptions().bias(biases_[i].to(h.dtype())).stride(i == 0 ? 1 : 2).padding(1));
        h = torch::relu(h);
        out.push_back(h);
    }
    return out;
}

namespace {

torch::Tensor channel_normalize(const torch::Tensor& f) {
    return f / (f.pow(2).sum(1, true) + 1e-10).sqrt();
}

}  // namespace

PerceptualValue perceptual_loss(FeatureExtractor* extractor, const torch::Tensor& x, const torch::Tensor& x_hat) {
    if (extractor == nullptr) return {(x - x_hat).pow(2).mean(), true};
    const auto a = extractor->features(x), b = extractor->features(x_hat);
    torch::Tensor total = torch::zeros({}, x.options());
    for (std::size_t i = 0; i < a.size(); ++i)
        total = total + (channel_normalize(a[i]) - channel_normalize(b[i])).pow(2).sum(1).mean();
    return {total, false};
}

torch::Tensor gram_matrix(const torch::Tensor& features) {
    const auto b = features.size(0), c = features.size(1);
    auto flat = features.reshape({b, c, -1});
    return torch::bmm(flat, flat.transpose(1, 2)) / static_cast<double>(c * flat.size(2));
}

torch::Tensor style_loss(FeatureExtractor& extractor, const torch::Tensor& image, const torch::Tensor& style) {
    const auto a = extractor.features(image), b = extractor.features(style);
    torch::Tensor total = torch::zeros({}, image.options());
    for (std::size_t i = 0; i < a.size(); ++i)
        total = total + (gram_matrix(a[i]) - gram_matrix(b[i]).expand({a[i].size(0), -1, -1})).pow(2).mean();
    return total;
}

torch::Tensor content_loss(FeatureExtractor& extractor, const torch::Tensor& image, const torch::Tensor& target) {
    const auto a = extractor.features(image), b = extractor.features(target);
    torch::Tensor total = torch::zeros({}, image.options());
    for (std::size_t i = 0; i < a.size(); ++i) total = total + (a[i] - b[i]).pow(2).mean();
    return total;
}

// --- Adversarial -----------------------------------------------------------

torch::Tensor hinge_discriminator_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
    return 0.5 * (torch::relu(1.0 - real_logits).mean() + torch::relu(1.0 + fake_logits).mean());
}

torch::Tensor hinge_generator_loss(const torch::Tensor& fake_logits) { return -fake_logits.mean(); }

torch::Tensor adaptive_adversarial_weight(const torch::Tensor& rec_loss, const torch::Tensor& gen_loss,
                                          const torch::Tensor& last_layer) {
    auto rec_grad = torch::autograd::grad({rec_loss}, {last_layer}, {}, true, false, true)[0];
    auto gen_grad = torch::autograd::grad({gen_loss}, {last_layer}, {}, true, false, true)[0];
    if (!rec_grad.defined() || !gen_grad.defined()) return torch::zeros({}, rec_loss.options());
    return (rec_grad.norm() / (gen_grad.norm() + 1e-4)).clamp(0.0, 1e4).detach();
}

}  // namespace glc
