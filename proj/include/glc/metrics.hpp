#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace glc {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for images in [0, 1]; identical inputs report kPsnrCap.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

/// Multi-scale SSIM with the standard 5-scale weights (11x11 Gaussian window, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, data range 1). Images too small for five scales use the largest
/// number of scales whose coarsest level still holds one window, with the leading weights
/// renormalized.
double ms_ssim(const torch::Tensor& a, const torch::Tensor& b);

/// Number of MS-SSIM scales used for an image of the given size.
int ms_ssim_scales(std::int64_t height, std::int64_t width);

struct RdSample {
    double bpp = 0.0;
    double metric = 0.0;
};

/// Bjontegaard delta rate in percent: cubic fits of log10(bpp) against the metric, averaged
/// over the shared metric interval. Negative means the test curve needs fewer bits. Needs at
/// least four points per curve and overlapping metric ranges.
double bd_rate(const std::vector<RdSample>& reference, const std::vector<RdSample>& test);

/// 256 x 256 patches from the grid with origin (0, 0) plus the grid shifted by 128 pixels,
/// restricted to the extent of the first grid. Yields floor(H/256) floor(W/256) +
/// (floor(H/256) - 1)(floor(W/256) - 1) patches.
struct PatchExtraction {
    std::vector<torch::Tensor> patches;         // [3, 256, 256] views
    std::vector<std::pair<int64_t, int64_t>> origins;
    std::string warning;                        // set when the image is too small
};

PatchExtraction extract_eval_patches(const torch::Tensor& image, int64_t patch = 256);

}  // namespace glc
