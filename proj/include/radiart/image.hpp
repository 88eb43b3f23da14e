#pragma once

#include <cstddef>
#include <filesystem>

#include "radiart/tensor.hpp"

namespace radiart {

/// Linear RGB image. Pixels are stored as a (height·width)×3 tensor, row index
/// y·width + x, which is also the layout rendered ray batches use.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    Tensor pixels;

    Image() = default;
    Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, 3, fill) {}
    Image(std::size_t w, std::size_t h, Tensor px);

    double& at(std::size_t x, std::size_t y, std::size_t c) { return pixels(y * width + x, c); }
    double at(std::size_t x, std::size_t y, std::size_t c) const { return pixels(y * width + x, c); }
    std::size_t pixel_count() const { return width * height; }

    /// Copy of the w×h window whose top-left pixel is (x0, y0).
    Image crop(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const;

    friend bool operator==(const Image&, const Image&) = default;
};

/// 8-bit RGB PNG; values are clamped to [0,1] and scaled by 255 (no gamma).
void write_png(const Image& img, const std::filesystem::path& path);
/// Reads an 8-bit PNG (gray/RGB/RGBA accepted, alpha dropped) as value/255.
Image read_png(const std::filesystem::path& path);

/// Little-endian float32 PFM, bottom row first.
void write_pfm(const Image& img, const std::filesystem::path& path);
Image read_pfm(const std::filesystem::path& path);

double mse(const Image& a, const Image& b);
/// Peak signal-to-noise ratio for a unit peak, in dB.
double psnr(const Image& a, const Image& b);

}  // namespace radiart
