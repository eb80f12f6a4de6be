#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "glc/config.hpp"

namespace glc {

inline constexpr double kScaleMin = 0.04;
inline constexpr double kProbabilityFloor = 1.0 / 65536.0;
/// Lower bound on training likelihoods, keeps -log2 finite.
inline constexpr double kLikelihoodBound = 1e-9;
inline constexpr int kDefaultSupportMin = -64;
inline constexpr int kDefaultSupportMax = 63;

// --- Hyper module ----------------------------------------------------------

/// z = h_a(y): halves the spatial resolution (ceil) and emits N_h channels.
struct HyperAnalysisImpl : torch::nn::Module {
    explicit HyperAnalysisImpl(const ModelConfig& config);
    torch::Tensor forward(const torch::Tensor& y);

    torch::nn::Conv2d conv1{nullptr}, down{nullptr}, conv2{nullptr};
};
TORCH_MODULE(HyperAnalysis);

/// prior = h_s(z^): 1x1 -> transposed conv (kernel 4, stride 2, padding 1) -> 1x1, then
/// cropped to the code grid. A hyper vector at (i, j) only reaches prior rows 2i-1..2i+2
/// and columns 2j-1..2j+2.
struct HyperSynthesisImpl : torch::nn::Module {
    static constexpr int64_t kKernel = 4;
    static constexpr int64_t kStride = 2;
    static constexpr int64_t kPadding = 1;

    explicit HyperSynthesisImpl(const ModelConfig& config);
    torch::Tensor forward(const torch::Tensor& z_hat, int64_t height, int64_t width);

    torch::nn::Conv2d conv_in{nullptr}, conv_out{nullptr};
    torch::nn::ConvTranspose2d up{nullptr};
};
TORCH_MODULE(HyperSynthesis);

/// Hyper grid extent for a code grid extent (down-factor 2, rounded up).
inline int64_t hyper_extent(int64_t code_extent) { return (code_extent + 1) / 2; }

/// Fully factorized density for the hyper-latent, used by the factorized-prior ablation:
/// one discretized logistic per channel with learned location and scale.
struct FactorizedPriorImpl : torch::nn::Module {
    explicit FactorizedPriorImpl(int64_t channels);
    /// Likelihood of each element of a (noisy or rounded) hyper-latent, lower-bounded.
    torch::Tensor likelihood(const torch::Tensor& z_tilde) const;

    torch::Tensor location, log_scale;  // [C]
};
TORCH_MODULE(FactorizedPrior);

// --- Quadtree spatial context ----------------------------------------------

/// Four disjoint position groups covering an h x w grid. Group k holds the positions whose
/// (row mod 2, col mod 2) equals pattern k of [(0,0), (1,1), (0,1), (1,0)].
struct QuadtreePlan {
    static constexpr std::array<std::pair<int, int>, 4> kPatterns = {{{0, 0}, {1, 1}, {0, 1}, {1, 0}}};

    int64_t height = 0;
    int64_t width = 0;
    std::array<std::vector<std::pair<int64_t, int64_t>>, 4> groups;

    /// Row-major linear indices (row * width + col) of a group.
    torch::Tensor linear_indices(int group) const;
    /// [1, 1, h, w] float mask of positions in groups strictly before `step`.
    torch::Tensor mask_before(int step) const;
    /// [1, 1, h, w] float mask of positions in group `step`.
    torch::Tensor group_mask(int step) const;
};

QuadtreePlan build_quadtree_plan(int64_t height, int64_t width);

struct EntropyParameters {
    torch::Tensor mean;   // [B, N, h, w]
    torch::Tensor scale;  // [B, N, h, w], >= kScaleMin
};

/// Predicts Gaussian parameters of y^ one quadtree step at a time. Step k sees the hyper
/// prior and the already decoded groups < k; the decoded input is masked internally so the
/// output never depends on groups >= k.
struct ContextModelImpl : torch::nn::Module {
    explicit ContextModelImpl(const ModelConfig& config);

    EntropyParameters predict_params(const torch::Tensor& prior, const torch::Tensor& decoded_partial,
                                     const QuadtreePlan& plan, int step);

    /// Parameters for every position, each taken from its own group's step. Used in training
    /// where all of y~ is available.
    EntropyParameters forward_all(const torch::Tensor& prior, const torch::Tensor& y_tilde, const QuadtreePlan& plan);

    torch::nn::ModuleList context_convs{nullptr};  // steps 1..3
    torch::nn::ModuleList param_nets{nullptr};     // steps 0..3
};
TORCH_MODULE(ContextModel);

// --- Discretized Gaussian --------------------------------------------------

/// p(k) = Phi((k + 0.5 - mean) / scale) - Phi((k - 0.5 - mean) / scale) over the integer
/// support [k_min, k_max], floored at 2^-16 and renormalized so that the floor still holds
/// after normalization.
std::vector<double> symbol_pmf(double mean, double scale, int k_min, int k_max);

/// Differentiable per-element likelihood of y~ under N(mean, scale) integrated over a unit bin.
torch::Tensor gaussian_likelihood(const torch::Tensor& y_tilde, const torch::Tensor& mean, const torch::Tensor& scale);

/// Bits to send `count` hyper indices with fixed-length codes.
double hyper_index_bits(std::int64_t count, std::int64_t hyper_codebook_size);

struct RateEstimate {
    double y_bits = 0.0;
    double hyper_bits = 0.0;
    double total() const { return y_bits + hyper_bits; }
};

/// Support [min(-64, min y^), max(63, max y^)] that every element of y^ falls into.
std::pair<int, int> coding_support(const torch::Tensor& y_hat);

/// sum -log2 p(y^_i) using symbol_pmf over the widened support, plus the fixed-length
/// hyper cost. y^ must be integer-valued.
RateEstimate estimate_rate(const torch::Tensor& y_hat, const EntropyParameters& params,
                           std::int64_t num_hyper_indices, std::int64_t hyper_codebook_size);

}  // namespace glc
