#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace glc {

/// Images as [3, H, W] float tensors in [0, 1], with a name for reports.
struct ImageSet {
    std::vector<torch::Tensor> images;
    std::vector<std::string> names;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }
};

/// Smooth two-colour gradients with a few flat-coloured discs and rectangles on top.
/// Deterministic in `seed`.
ImageSet synthetic_images(int count, int size, std::uint64_t seed);

/// Every .png / .ppm file of a directory, sorted by name. Throws InvalidArgument when the
/// directory holds no images.
ImageSet load_image_dir(const std::string& dir);

/// Writes each image as <dir>/<name>.png.
void save_image_dir(const ImageSet& set, const std::string& dir);

/// Draws a batch of `crop` x `crop` crops (random offsets) from the listed images.
torch::Tensor make_batch(const ImageSet& set, const std::vector<std::size_t>& indices, int crop, std::mt19937_64& rng);

/// Epoch-wise shuffled mini-batch indices.
class BatchSampler {
  public:
    BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

    std::vector<std::size_t> next();
    /// True when the last call to next() started a new epoch (after the first).
    bool epoch_rolled() const { return rolled_; }
    std::size_t epoch() const { return epoch_; }

  private:
    void reshuffle();

    std::vector<std::size_t> order_;
    std::size_t batch_size_;
    std::size_t pos_ = 0;
    std::size_t epoch_ = 0;
    bool rolled_ = false;
    std::mt19937_64 rng_;
};

/// x + N(0, sigma^2) per pixel, clamped to [0, 1].
torch::Tensor add_gaussian_noise(const torch::Tensor& image, double sigma, std::uint64_t seed);

}  // namespace glc
