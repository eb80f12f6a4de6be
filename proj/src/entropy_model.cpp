#include "glc/entropy_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "glc/errors.hpp"

namespace glc {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv1x1(int64_t in, int64_t out) { return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)); }

torch::nn::Sequential param_net(int64_t in, int64_t hidden, int64_t out) {
    return torch::nn::Sequential(conv1x1(in, hidden), torch::nn::LeakyReLU(), conv1x1(hidden, hidden),
                                 torch::nn::LeakyReLU(), conv1x1(hidden, out));
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

torch::Tensor std_normal_cdf(const torch::Tensor& x) { return 0.5 * torch::erfc(x * (-1.0 / std::sqrt(2.0))); }

}  // namespace

// --- Hyper module ----------------------------------------------------------

HyperAnalysisImpl::HyperAnalysisImpl(const ModelConfig& config) {
    const int64_t n = config.latent_channels, nh = config.hyper_channels;
    conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(n, nh, 3).padding(1)));
    down = register_module("down", torch::nn::Conv2d(torch::nn::Conv2dOptions(nh, nh, 3).stride(2).padding(1)));
    conv2 = register_module("conv2", conv1x1(nh, nh));
}

torch::Tensor HyperAnalysisImpl::forward(const torch::Tensor& y) {
    auto h = torch::leaky_relu(conv1->forward(y), 0.01);
    h = torch::leaky_relu(down->forward(h), 0.01);
    return conv2->forward(h);
}

HyperSynthesisImpl::HyperSynthesisImpl(const ModelConfig& config) {
    const int64_t nh = config.hyper_channels, c = config.context_channels();
    conv_in = register_module("conv_in", conv1x1(nh, c));
    up = register_module("up", torch::nn::ConvTranspose2d(
                                   torch::nn::ConvTranspose2dOptions(c, c, kKernel).stride(kStride).padding(kPadding)));
    conv_out = register_module("conv_out", conv1x1(c, c));
}

torch::Tensor HyperSynthesisImpl::forward(const torch::Tensor& z_hat, int64_t height, int64_t width) {
    if (z_hat.dim() != 4) throw ShapeError("hyper-latent must be [B, N_h, h, w]");
    if (hyper_extent(height) != z_hat.size(2) || hyper_extent(width) != z_hat.size(3))
        throw ShapeError("hyper grid " + std::to_string(z_hat.size(2)) + "x" + std::to_string(z_hat.size(3)) +
                         " does not match code grid " + std::to_string(height) + "x" + std::to_string(width));
    auto h = torch::leaky_relu(conv_in->forward(z_hat), 0.01);
    h = torch::leaky_relu(up->forward(h), 0.01);
    h = conv_out->forward(h);
    return h.slice(2, 0, height).slice(3, 0, width);
}

FactorizedPriorImpl::FactorizedPriorImpl(int64_t channels) {
    location = register_parameter("location", torch::zeros({channels}));
    log_scale = register_parameter("log_scale", torch::zeros({channels}));
}

torch::Tensor FactorizedPriorImpl::likelihood(const torch::Tensor& z_tilde) const {
    auto mu = location.view({1, -1, 1, 1});
    auto s = log_scale.exp().view({1, -1, 1, 1});
    auto upper = torch::sigmoid((z_tilde + 0.5 - mu) / s);
    auto lower = torch::sigmoid((z_tilde - 0.5 - mu) / s);
    return (upper - lower).clamp_min(kLikelihoodBound);
}

// --- Quadtree --------------------------------------------------------------

QuadtreePlan build_quadtree_plan(int64_t height, int64_t width) {
    if (height < 1 || width < 1) throw InvalidArgument("quadtree plan needs a non-empty grid");
    QuadtreePlan plan;
    plan.height = height;
    plan.width = width;
    for (int g = 0; g < 4; ++g) {
        const auto [pr, pc] = QuadtreePlan::kPatterns[g];
        for (int64_t i = pr; i < height; i += 2)
            for (int64_t j = pc; j < width; j += 2) plan.groups[g].emplace_back(i, j);
    }
    return plan;
}

torch::Tensor QuadtreePlan::linear_indices(int group) const {
    const auto& positions = groups.at(static_cast<std::size_t>(group));
    auto out = torch::empty({static_cast<int64_t>(positions.size())}, torch::kLong);
    auto* p = out.data_ptr<int64_t>();
    for (const auto& [i, j] : positions) *p++ = i * width + j;
    return out;
}

namespace {

torch::Tensor group_id_map(int64_t height, int64_t width) {
    auto r = (torch::arange(height, torch::kLong) % 2).view({-1, 1});
    auto c = (torch::arange(width, torch::kLong) % 2).view({1, -1});
    // (0,0)->0, (1,1)->1, (0,1)->2, (1,0)->3
    return torch::where(r == c, r.expand({height, width}), (r + 2).expand({height, width}));
}

}  // namespace

torch::Tensor QuadtreePlan::mask_before(int step) const {
    return (group_id_map(height, width) < step).to(torch::kFloat).view({1, 1, height, width});
}

torch::Tensor QuadtreePlan::group_mask(int step) const {
    return (group_id_map(height, width) == step).to(torch::kFloat).view({1, 1, height, width});
}

// --- Context model ---------------------------------------------------------

ContextModelImpl::ContextModelImpl(const ModelConfig& config) {
    const int64_t n = config.latent_channels, c = config.context_channels();
    context_convs = torch::nn::ModuleList();
    param_nets = torch::nn::ModuleList();
    for (int step = 1; step < 4; ++step)
        context_convs->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(n, c, 3).padding(1)));
    for (int step = 0; step < 4; ++step) param_nets->push_back(param_net(step == 0 ? c : 2 * c, c, 2 * n));
    register_module("context_convs", context_convs);
    register_module("param_nets", param_nets);
}

EntropyParameters ContextModelImpl::predict_params(const torch::Tensor& prior, const torch::Tensor& decoded_partial,
                                                   const QuadtreePlan& plan, int step) {
    if (step < 0 || step >= 4) throw InvalidArgument("quadtree step " + std::to_string(step) + " outside [0, 4)");
    if (prior.size(2) != plan.height || prior.size(3) != plan.width || decoded_partial.size(2) != plan.height ||
        decoded_partial.size(3) != plan.width)
        throw ShapeError("prior/decoded grid does not match the quadtree plan");

    torch::Tensor features = prior;
    if (step > 0) {
        auto masked = decoded_partial * plan.mask_before(step).to(decoded_partial.dtype());
        auto ctx = context_convs->at<torch::nn::Conv2dImpl>(static_cast<std::size_t>(step - 1)).forward(masked);
        features = torch::cat({prior, ctx}, 1);
    }
    auto out = param_nets->at<torch::nn::SequentialImpl>(static_cast<std::size_t>(step)).forward(features);
    auto parts = out.chunk(2, 1);
    return {parts[0], kScaleMin + F::softplus(parts[1])};
}

EntropyParameters ContextModelImpl::forward_all(const torch::Tensor& prior, const torch::Tensor& y_tilde,
                                                const QuadtreePlan& plan) {
    EntropyParameters all;
    for (int step = 0; step < 4; ++step) {
        auto p = predict_params(prior, y_tilde, plan, step);
        auto mask = plan.group_mask(step).to(p.mean.dtype());
        all.mean = step == 0 ? p.mean * mask : all.mean + p.mean * mask;
        all.scale = step == 0 ? p.scale * mask : all.scale + p.scale * mask;
    }
    return all;
}

// --- Discretized Gaussian --------------------------------------------------

std::vector<double> symbol_pmf(double mean, double scale, int k_min, int k_max) {
    if (k_min >= k_max) throw InvalidArgument("degenerate support [" + std::to_string(k_min) + ", " +
                                              std::to_string(k_max) + "]");
    const auto n = static_cast<std::size_t>(k_max - k_min + 1);
    if (n > 65536) throw InvalidArgument("support wider than 65536 symbols");
    if (!std::isfinite(mean) || !std::isfinite(scale) || scale <= 0.0)
        throw InvalidArgument("Gaussian parameters must be finite with positive scale");

    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = std::abs(static_cast<double>(k_min + static_cast<int>(i)) - mean);
        // Evaluate in the lower tail, where Phi keeps full relative precision.
        p[i] = std::max(0.0, std_normal_cdf((0.5 - d) / scale) - std_normal_cdf((-0.5 - d) / scale));
    }

    // Pin entries that would fall under the floor, then share the remaining mass
    // proportionally among the others; repeat until no new entry crosses the floor.
    std::vector<char> pinned(n, 0);
    std::size_t num_pinned = 0;
    while (true) {
        const double free_mass = 1.0 - static_cast<double>(num_pinned) * kProbabilityFloor;
        double raw = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!pinned[i]) raw += p[i];
        if (raw <= 0.0) {
            std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(n));
            return p;
        }
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (!pinned[i] && p[i] * free_mass / raw < kProbabilityFloor) {
                pinned[i] = 1;
                ++num_pinned;
                changed = true;
            }
        }
        if (!changed) {
            for (std::size_t i = 0; i < n; ++i) p[i] = pinned[i] ? kProbabilityFloor : p[i] * free_mass / raw;
            return p;
        }
    }
}

torch::Tensor gaussian_likelihood(const torch::Tensor& y_tilde, const torch::Tensor& mean, const torch::Tensor& scale) {
    auto d = (y_tilde - mean).abs();
    auto upper = std_normal_cdf((0.5 - d) / scale);
    auto lower = std_normal_cdf((-0.5 - d) / scale);
    return (upper - lower).clamp_min(kLikelihoodBound);
}

double hyper_index_bits(std::int64_t count, std::int64_t hyper_codebook_size) {
    return static_cast<double>(count) * bits_for_alphabet(hyper_codebook_size);
}

std::pair<int, int> coding_support(const torch::Tensor& y_hat) {
    if (y_hat.numel() == 0) return {kDefaultSupportMin, kDefaultSupportMax};
    const double lo = y_hat.min().item<double>();
    const double hi = y_hat.max().item<double>();
    if (lo < std::numeric_limits<std::int16_t>::min() || hi > std::numeric_limits<std::int16_t>::max())
        throw InvalidArgument("code values exceed the 16-bit support range");
    return {std::min(kDefaultSupportMin, static_cast<int>(lo)), std::max(kDefaultSupportMax, static_cast<int>(hi))};
}

RateEstimate estimate_rate(const torch::Tensor& y_hat, const EntropyParameters& params, std::int64_t num_hyper_indices,
                           std::int64_t hyper_codebook_size) {
    if (!torch::equal(y_hat, torch::round(y_hat))) throw InvalidArgument("y^ must be integer-valued");
    if (params.mean.sizes() != y_hat.sizes() || params.scale.sizes() != y_hat.sizes())
        throw ShapeError("entropy parameters do not match y^");
    const auto [k_min, k_max] = coding_support(y_hat);

    auto values = y_hat.detach().to(torch::kDouble).contiguous().flatten();
    auto means = params.mean.detach().to(torch::kDouble).contiguous().flatten();
    auto scales = params.scale.detach().to(torch::kDouble).contiguous().flatten();
    const double* v = values.data_ptr<double>();
    const double* m = means.data_ptr<double>();
    const double* s = scales.data_ptr<double>();

    RateEstimate r;
    for (int64_t i = 0; i < values.numel(); ++i) {
        const auto pmf = symbol_pmf(m[i], s[i], k_min, k_max);
        r.y_bits -= std::log2(pmf[static_cast<std::size_t>(static_cast<int>(v[i]) - k_min)]);
    }
    r.hyper_bits = hyper_index_bits(num_hyper_indices, hyper_codebook_size);
    return r;
}

}  // namespace glc
