#include "glc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>

#include "glc/errors.hpp"

namespace glc {

namespace {

std::string extension(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return {};
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

torch::Tensor from_rgb8(const std::vector<std::uint8_t>& rgb, int64_t height, int64_t width) {
    auto t = torch::from_blob(const_cast<std::uint8_t*>(rgb.data()), {height, width, 3}, torch::kUInt8);
    return t.permute({2, 0, 1}).to(torch::kFloat).div(255.0).contiguous();
}

torch::Tensor load_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("cannot read PNG " + path + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("cannot decode PNG " + path + ": " + image.message);
    }
    return from_rgb8(rgb, image.height, image.width);
}

// P6 with optional comments in the header.
torch::Tensor load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    auto token = [&] {
        std::string t;
        char c;
        while (in.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                if (!t.empty()) break;
            } else {
                t.push_back(c);
            }
        }
        return t;
    };
    if (token() != "P6") throw IoError(path + " is not a binary PPM");
    int64_t width = 0, height = 0, maxval = 0;
    try {
        width = std::stoll(token());
        height = std::stoll(token());
        maxval = std::stoll(token());
    } catch (const std::exception&) {
        throw IoError("malformed PPM header in " + path);
    }
    if (width < 1 || height < 1 || maxval != 255) throw IoError("unsupported PPM " + path + " (need 8-bit)");
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width * height * 3));
    in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!in) throw IoError("truncated PPM " + path);
    return from_rgb8(rgb, height, width);
}

}  // namespace

std::vector<std::uint8_t> to_rgb8(const torch::Tensor& image) {
    auto x = image.dim() == 4 ? image.squeeze(0) : image;
    if (x.dim() != 3 || x.size(0) != 3) throw ShapeError("image must be [3, H, W]");
    auto bytes = x.detach().clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
    const auto* p = bytes.data_ptr<std::uint8_t>();
    return {p, p + bytes.numel()};
}

torch::Tensor load_image(const std::string& path) {
    const auto ext = extension(path);
    if (ext == "png") return load_png(path);
    if (ext == "ppm") return load_ppm(path);
    throw IoError("unsupported image format: " + path + " (use .png or .ppm)");
}

void save_image(const torch::Tensor& image, const std::string& path) {
    auto x = image.dim() == 4 ? image.squeeze(0) : image;
    const auto rgb = to_rgb8(x);
    const auto height = x.size(1), width = x.size(2);
    const auto ext = extension(path);
    if (ext == "png") {
        png_image png;
        std::memset(&png, 0, sizeof(png));
        png.version = PNG_IMAGE_VERSION;
        png.width = static_cast<png_uint_32>(width);
        png.height = static_cast<png_uint_32>(height);
        png.format = PNG_FORMAT_RGB;
        if (!png_image_write_to_file(&png, path.c_str(), 0, rgb.data(), 0, nullptr))
            throw IoError("cannot write PNG " + path + ": " + png.message);
    } else if (ext == "ppm") {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path);
        out << "P6\n" << width << ' ' << height << "\n255\n";
        out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    } else {
        throw IoError("unsupported image format: " + path + " (use .png or .ppm)");
    }
}

}  // namespace glc
