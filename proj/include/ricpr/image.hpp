#pragma once

#include <cstdint>
#include <vector>

namespace ricpr {

/// 8-bit single-channel raster, row-major.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, std::uint8_t fill = 0);
    GrayImage(int width, int height, std::vector<std::uint8_t> pixels);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return width_ == 0 || height_ == 0; }

    std::uint8_t at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    /// Nearest pixel with coordinates clamped to the raster.
    std::uint8_t at_clamped(int x, int y) const;
    /// Bilinear sample with clamping at the border.
    double sample(double x, double y) const;

    const std::vector<std::uint8_t>& pixels() const { return pixels_; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// Double-precision raster used for resampled analysis crops.
struct FloatImage {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    /// Bilinear interpolation; caller guarantees (x, y) lies inside the raster.
    double bilinear(double x, double y) const;
};

/// ITU-R BT.601 luma, rounded to nearest.
std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b);

} // namespace ricpr
