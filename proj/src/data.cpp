#include "glc/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "glc/errors.hpp"
#include "glc/image_io.hpp"

namespace glc {

namespace fs = std::filesystem;

ImageSet synthetic_images(int count, int size, std::uint64_t seed) {
    if (count < 0 || size < 1) throw InvalidArgument("synthetic set needs count >= 0 and size >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto colour = [&] { return torch::tensor({unit(rng), unit(rng), unit(rng)}, torch::kFloat).view({3, 1, 1}); };

    const auto coords = torch::arange(size, torch::kFloat);
    const auto yy = coords.view({-1, 1}).expand({size, size});
    const auto xx = coords.view({1, -1}).expand({size, size});

    ImageSet set;
    for (int n = 0; n < count; ++n) {
        const double angle = unit(rng) * 2.0 * std::numbers::pi;
        auto t = (xx * std::cos(angle) + yy * std::sin(angle));
        t = (t - t.min()) / (t.max() - t.min() + 1e-6);
        auto c0 = colour(), c1 = colour();
        auto img = c0 * (1.0 - t.unsqueeze(0)) + c1 * t.unsqueeze(0);

        const int shapes = 1 + static_cast<int>(unit(rng) * 4.0);
        for (int s = 0; s < shapes; ++s) {
            const double cy = unit(rng) * size, cx = unit(rng) * size;
            const double extent = size * (0.1 + 0.25 * unit(rng));
            torch::Tensor mask;
            if (unit(rng) < 0.5) {
                mask = ((yy - cy).pow(2) + (xx - cx).pow(2)) < extent * extent;
            } else {
                const double aspect = 0.5 + unit(rng);
                mask = ((yy - cy).abs() < extent) & ((xx - cx).abs() < extent * aspect);
            }
            img = torch::where(mask.unsqueeze(0), colour().expand({3, size, size}), img);
        }
        set.images.push_back(img.clamp(0.0, 1.0).contiguous());
        set.names.push_back("synthetic_" + std::to_string(n));
    }
    return set;
}

ImageSet load_image_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".ppm") files.push_back(entry.path());
    }
    if (files.empty()) throw InvalidArgument("empty dataset: no .png/.ppm images in " + dir);
    std::sort(files.begin(), files.end());
    ImageSet set;
    for (const auto& f : files) {
        set.images.push_back(load_image(f.string()));
        set.names.push_back(f.stem().string());
    }
    return set;
}

void save_image_dir(const ImageSet& set, const std::string& dir) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < set.size(); ++i) save_image(set.images[i], (fs::path(dir) / (set.names[i] + ".png")).string());
}

torch::Tensor make_batch(const ImageSet& set, const std::vector<std::size_t>& indices, int crop, std::mt19937_64& rng) {
    std::vector<torch::Tensor> parts;
    parts.reserve(indices.size());
    for (auto i : indices) {
        const auto& img = set.images.at(i);
        const int64_t h = img.size(1), w = img.size(2);
        if (h < crop || w < crop)
            throw ShapeError("image " + set.names[i] + " is smaller than the training crop " + std::to_string(crop));
        const int64_t top = std::uniform_int_distribution<int64_t>(0, h - crop)(rng);
        const int64_t left = std::uniform_int_distribution<int64_t>(0, w - crop)(rng);
        parts.push_back(img.slice(1, top, top + crop).slice(2, left, left + crop));
    }
    return torch::stack(parts);
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : order_(dataset_size), batch_size_(batch_size), rng_(seed) {
    if (dataset_size == 0 || batch_size == 0) throw InvalidArgument("sampler needs a non-empty dataset and batch");
    for (std::size_t i = 0; i < dataset_size; ++i) order_[i] = i;
    reshuffle();
}

void BatchSampler::reshuffle() { std::shuffle(order_.begin(), order_.end(), rng_); }

std::vector<std::size_t> BatchSampler::next() {
    rolled_ = false;
    std::vector<std::size_t> batch;
    batch.reserve(batch_size_);
    while (batch.size() < batch_size_) {
        if (pos_ == order_.size()) {
            reshuffle();
            pos_ = 0;
            ++epoch_;
            rolled_ = true;
        }
        batch.push_back(order_[pos_++]);
    }
    return batch;
}

torch::Tensor add_gaussian_noise(const torch::Tensor& image, double sigma, std::uint64_t seed) {
    auto gen = at::detail::createCPUGenerator(seed);
    auto noise = torch::randn(image.sizes(), gen, image.options());
    return (image + sigma * noise).clamp(0.0, 1.0);
}

}  // namespace glc
