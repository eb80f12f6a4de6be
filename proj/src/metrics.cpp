#include "glc/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>

#include "glc/errors.hpp"

namespace glc {

namespace F = torch::nn::functional;

namespace {

constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr int64_t kWindow = 11;
constexpr double kSigma = 1.5;

torch::Tensor as_batch(const torch::Tensor& t) {
    auto x = t.dim() == 3 ? t.unsqueeze(0) : t;
    if (x.dim() != 4) throw ShapeError("image must be [C, H, W] or [B, C, H, W]");
    return x.to(torch::kDouble);
}

torch::Tensor gaussian_window(int64_t channels) {
    auto coords = torch::arange(kWindow, torch::kDouble) - (kWindow - 1) / 2.0;
    auto g = torch::exp(-coords.pow(2) / (2.0 * kSigma * kSigma));
    g = g / g.sum();
    return g.view({1, 1, 1, kWindow}).expand({channels, 1, 1, kWindow}).contiguous();
}

torch::Tensor blur(const torch::Tensor& x, const torch::Tensor& window) {
    const auto c = x.size(1);
    auto h = F::conv2d(x, window, F::Conv2dFuncOptions().groups(c));
    return F::conv2d(h, window.transpose(2, 3), F::Conv2dFuncOptions().groups(c));
}

/// Per-channel mean SSIM and contrast-structure terms, [B, C] each.
std::pair<torch::Tensor, torch::Tensor> ssim_terms(const torch::Tensor& a, const torch::Tensor& b) {
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto window = gaussian_window(a.size(1));
    auto mu_a = blur(a, window), mu_b = blur(b, window);
    auto var_a = blur(a * a, window) - mu_a.pow(2);
    auto var_b = blur(b * b, window) - mu_b.pow(2);
    auto cov = blur(a * b, window) - mu_a * mu_b;
    auto cs = (2.0 * cov + c2) / (var_a + var_b + c2);
    auto lum = (2.0 * mu_a * mu_b + c1) / (mu_a.pow(2) + mu_b.pow(2) + c1);
    return {(lum * cs).flatten(2).mean(-1), cs.flatten(2).mean(-1)};
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) throw ShapeError("PSNR needs equally sized images");
    const double mse = (a.to(torch::kDouble) - b.to(torch::kDouble)).pow(2).mean().item<double>();
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

int ms_ssim_scales(std::int64_t height, std::int64_t width) {
    int scales = 0;
    std::int64_t h = height, w = width;
    while (scales < 5 && h >= kWindow && w >= kWindow) {
        ++scales;
        h /= 2;
        w /= 2;
    }
    if (scales == 0) throw ShapeError("image smaller than the 11x11 SSIM window");
    return scales;
}

double ms_ssim(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.sizes() != b.sizes()) throw ShapeError("MS-SSIM needs equally sized images");
    auto x = as_batch(a), y = as_batch(b);
    const int scales = ms_ssim_scales(x.size(2), x.size(3));
    double weight_sum = 0.0;
    for (int i = 0; i < scales; ++i) weight_sum += kMsSsimWeights[static_cast<std::size_t>(i)];

    auto result = torch::ones({x.size(0), x.size(1)}, torch::kDouble);
    for (int i = 0; i < scales; ++i) {
        auto [ssim, cs] = ssim_terms(x, y);
        const double w = kMsSsimWeights[static_cast<std::size_t>(i)] / weight_sum;
        auto term = i + 1 == scales ? ssim : cs;
        result = result * torch::relu(term).pow(w);
        if (i + 1 < scales) {
            x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
            y = F::avg_pool2d(y, F::AvgPool2dFuncOptions(2));
        }
    }
    return result.mean().item<double>();
}

double bd_rate(const std::vector<RdSample>& reference, const std::vector<RdSample>& test) {
    if (reference.size() < 4 || test.size() < 4) throw InvalidArgument("BD-rate needs at least 4 points per curve");
    for (const auto* curve : {&reference, &test})
        for (const auto& p : *curve)
            if (!(p.bpp > 0.0) || !std::isfinite(p.metric)) throw InvalidArgument("BD-rate points need bpp > 0");

    auto range = [](const std::vector<RdSample>& c) {
        auto [lo, hi] = std::minmax_element(c.begin(), c.end(),
                                            [](const RdSample& a, const RdSample& b) { return a.metric < b.metric; });
        return std::pair{lo->metric, hi->metric};
    };
    const auto [ref_lo, ref_hi] = range(reference);
    const auto [test_lo, test_hi] = range(test);
    const double lo = std::max(ref_lo, test_lo), hi = std::min(ref_hi, test_hi);
    if (!(hi > lo)) throw InvalidArgument("BD-rate curves have no metric overlap");

    // Common affine normalization of the metric keeps the cubic fit well conditioned.
    const double center = 0.5 * (std::min(ref_lo, test_lo) + std::max(ref_hi, test_hi));
    const double half = std::max(1e-12, 0.5 * (std::max(ref_hi, test_hi) - std::min(ref_lo, test_lo)));
    auto fit = [&](const std::vector<RdSample>& c) {
        Eigen::MatrixXd a(static_cast<Eigen::Index>(c.size()), 4);
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(c.size()));
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double t = (c[i].metric - center) / half;
            const auto r = static_cast<Eigen::Index>(i);
            a(r, 0) = 1.0;
            a(r, 1) = t;
            a(r, 2) = t * t;
            a(r, 3) = t * t * t;
            rhs(r) = std::log10(c[i].bpp);
        }
        return Eigen::Vector4d(a.colPivHouseholderQr().solve(rhs));
    };
    auto integral = [](const Eigen::Vector4d& p, double t) {
        return p(0) * t + p(1) * t * t / 2.0 + p(2) * t * t * t / 3.0 + p(3) * t * t * t * t / 4.0;
    };
    const auto p_ref = fit(reference), p_test = fit(test);
    const double t_lo = (lo - center) / half, t_hi = (hi - center) / half;
    const double avg_ref = (integral(p_ref, t_hi) - integral(p_ref, t_lo)) / (t_hi - t_lo);
    const double avg_test = (integral(p_test, t_hi) - integral(p_test, t_lo)) / (t_hi - t_lo);
    return (std::pow(10.0, avg_test - avg_ref) - 1.0) * 100.0;
}

PatchExtraction extract_eval_patches(const torch::Tensor& image, int64_t patch) {
    if (image.dim() != 3) throw ShapeError("image must be [3, H, W]");
    PatchExtraction out;
    const int64_t h = image.size(1), w = image.size(2);
    const int64_t rows = h / patch, cols = w / patch;
    if (rows == 0 || cols == 0) {
        out.warning = "image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than " +
                      std::to_string(patch) + " pixels; no patches extracted";
        return out;
    }
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) out.origins.emplace_back(i * patch, j * patch);
    const int64_t shift = patch / 2;
    for (int64_t i = 0; i + 1 < rows; ++i)
        for (int64_t j = 0; j + 1 < cols; ++j) out.origins.emplace_back(shift + i * patch, shift + j * patch);
    for (const auto& [top, left] : out.origins)
        out.patches.push_back(image.slice(1, top, top + patch).slice(2, left, left + patch));
    return out;
}

}  // namespace glc
