#include "ricpr/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ricpr/shape.hpp"

namespace ricpr {

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height, fill)
{
    if (width < 0 || height < 0) {
        throw Error("GrayImage: negative dimensions");
    }
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels))
{
    if (width < 0 || height < 0 || pixels_.size() != static_cast<std::size_t>(width) * height) {
        throw Error("GrayImage: pixel buffer does not match dimensions");
    }
}

std::uint8_t GrayImage::at_clamped(int x, int y) const
{
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return at(x, y);
}

double GrayImage::sample(double x, double y) const
{
    x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = at(x0, y0) + fx * (static_cast<double>(at(x1, y0)) - at(x0, y0));
    const double bottom = at(x0, y1) + fx * (static_cast<double>(at(x1, y1)) - at(x0, y1));
    return top + fy * (bottom - top);
}

double FloatImage::bilinear(double x, double y) const
{
    const int x0 = std::min(static_cast<int>(std::floor(x)), width - 1);
    const int y0 = std::min(static_cast<int>(std::floor(y)), height - 1);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    // Written as differences so a constant neighbourhood interpolates exactly.
    const double top = at(x0, y0) + fx * (at(x1, y0) - at(x0, y0));
    const double bottom = at(x0, y1) + fx * (at(x1, y1) - at(x0, y1));
    return top + fy * (bottom - top);
}

std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

} // namespace ricpr
