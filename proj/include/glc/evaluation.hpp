#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "glc/data.hpp"
#include "glc/metrics.hpp"
#include "glc/model.hpp"
#include "glc/symbol_coder.hpp"

namespace glc {

/// One rate-distortion measurement: bpp plus named metrics (psnr, ms_ssim, latent_mse, ...).
struct RdPoint {
    double bpp = 0.0;
    std::map<std::string, double> metrics;
};

struct ImageEval {
    std::string name;
    int rate = 0;
    RdPoint point;
};

struct EvalReport {
    std::vector<ImageEval> images;
    std::map<int, RdPoint> aggregate;  // per rate index, arithmetic means
};

struct EvalOptions {
    std::vector<int> rates = {0, 1, 2, 3};
    bool patches = false;  // evaluate 256x256 patches instead of whole images
    CoderKind coder = CoderKind::Reference;
};

/// Encodes and decodes every image at every listed rate through real bitstreams. bpp is
/// 8 * file bytes / pixels; x^ is quantized to 8 bits before metrics. Throws InvalidArgument
/// on an empty dataset.
EvalReport evaluate_dataset(GlcModel& model, const ImageSet& images, const EvalOptions& options);

/// Arithmetic mean of bpp and of each metric.
RdPoint mean_point(const std::vector<RdPoint>& points);

nlohmann::json report_to_json(const EvalReport& report);
/// (bpp, metric) per aggregate row of a report produced by report_to_json.
std::vector<RdSample> curve_from_report(const nlohmann::json& report, const std::string& metric);

/// Fixed-length coding of the VQ index map: bpp = h w ceil(log2 M) / (H W), latent_mse =
/// MSE(E_VQ(x), C[VQ(E_VQ(x))]). Uses the frozen stage-I encoder copy when the checkpoint
/// has one.
RdPoint indices_map_baseline(Checkpoint& ckpt, const ImageSet& images);

/// Rate from the entropy model instead of a bitstream (rounded y and hyper-latent), with
/// latent_mse = MSE(E(x), l^) and psnr of D(l^). Works for both hyper priors, so ablations compare on equal terms.
RdPoint estimated_rd_point(GlcModel& model, const ImageSet& images, int rate);

}  // namespace glc
