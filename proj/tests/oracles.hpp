#pragma once

// Brute-force reference implementations used to check the library. They are written
// from the defining formulas and share no code with src/.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ricpr/shape.hpp"

namespace oracle {

inline constexpr double kPi = 3.14159265358979323846;

inline int transitions(std::uint32_t pattern, int bits)
{
    int count = 0;
    for (int i = 0; i < bits; ++i) {
        const int a = (pattern >> i) & 1;
        const int b = (pattern >> ((i + 1) % bits)) & 1;
        count += a != b;
    }
    return count;
}

/// Uniform patterns numbered by ascending pattern value; everything else shares the last bin.
inline int uniform_label(std::uint32_t pattern, int bits)
{
    int label = 0;
    for (std::uint32_t p = 0; p < (1U << bits); ++p) {
        if (transitions(p, bits) <= 2) {
            if (p == pattern) {
                return label;
            }
            ++label;
        }
    }
    return label;
}

inline int uniform_label_count(int bits)
{
    int n = 0;
    for (std::uint32_t p = 0; p < (1U << bits); ++p) {
        n += transitions(p, bits) <= 2;
    }
    return n + 1;
}

/// Image with replicated borders, indexed [y][x].
struct Raster {
    int w = 0;
    int h = 0;
    std::vector<double> v;

    double px(int x, int y) const
    {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return v[static_cast<std::size_t>(y) * w + x];
    }
    double bilinear(double x, double y) const
    {
        const int x0 = static_cast<int>(std::floor(x));
        const int y0 = static_cast<int>(std::floor(y));
        const double fx = x - x0;
        const double fy = y - y0;
        const double top = px(x0, y0) + fx * (px(x0 + 1, y0) - px(x0, y0));
        const double bottom = px(x0, y0 + 1) + fx * (px(x0 + 1, y0 + 1) - px(x0, y0 + 1));
        return top + fy * (bottom - top);
    }
};

/// LBP^{u2}_{P,R} at integer (x, y); neighbour p at angle 2*pi*p/P, counter-clockwise with y down.
inline int lbp_label(const Raster& r, int x, int y, int points, double radius)
{
    std::uint32_t pattern = 0;
    for (int p = 0; p < points; ++p) {
        double dx = radius * std::cos(2.0 * kPi * p / points);
        double dy = -radius * std::sin(2.0 * kPi * p / points);
        if (std::abs(dx - std::round(dx)) < 1e-9) {
            dx = std::round(dx);
        }
        if (std::abs(dy - std::round(dy)) < 1e-9) {
            dy = std::round(dy);
        }
        if (r.bilinear(x + dx, y + dy) >= r.px(x, y)) {
            pattern |= 1U << p;
        }
    }
    return uniform_label(pattern, points);
}

/// Copy of `r` with `m` replicated pixels added on every side.
inline Raster padded(const Raster& r, int m)
{
    Raster out{r.w + 2 * m, r.h + 2 * m, {}};
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            out.v.push_back(r.px(x - m, y - m));
        }
    }
    return out;
}

/// Per-block histograms of the whole raster, blocks_per_side^2 rows. Sampling happens on a
/// copy padded by `pad` pixels so sub-pixel offsets round the same way as in a padded crop.
inline std::vector<std::vector<std::uint32_t>> block_histograms(const Raster& raster, int blocks_per_side, int points,
                                                                double radius, int pad = 0)
{
    const Raster big = padded(raster, pad);
    const Raster& r = raster;
    const int labels = uniform_label_count(points);
    std::vector<std::vector<std::uint32_t>> h(static_cast<std::size_t>(blocks_per_side * blocks_per_side),
                                              std::vector<std::uint32_t>(static_cast<std::size_t>(labels), 0));
    for (int y = 0; y < r.h; ++y) {
        for (int x = 0; x < r.w; ++x) {
            const int block = (y * blocks_per_side / r.h) * blocks_per_side + x * blocks_per_side / r.w;
            ++h[static_cast<std::size_t>(block)][static_cast<std::size_t>(lbp_label(big, x + pad, y + pad, points, radius))];
        }
    }
    return h;
}

inline double pearson_distance(const std::vector<double>& a, const std::vector<double>& b)
{
    long double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    const long double n = static_cast<long double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        saa += static_cast<long double>(a[i]) * a[i];
        sbb += static_cast<long double>(b[i]) * b[i];
        sab += static_cast<long double>(a[i]) * b[i];
    }
    const long double cov = n * sab - sa * sb;
    const long double rho = cov / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
    return static_cast<double>(1.0L - rho);
}

inline double image_nme(const ricpr::AnnotatedShape& pred, const ricpr::AnnotatedShape& truth, std::size_t left_eye,
                        std::size_t right_eye)
{
    const double iod = std::sqrt(std::pow(truth.points[left_eye].x - truth.points[right_eye].x, 2) +
                                 std::pow(truth.points[left_eye].y - truth.points[right_eye].y, 2));
    double s = 0;
    for (std::size_t j = 0; j < ricpr::kNumLandmarks; ++j) {
        s += std::sqrt(std::pow(pred.points[j].x - truth.points[j].x, 2) +
                       std::pow(pred.points[j].y - truth.points[j].y, 2));
    }
    return s / ricpr::kNumLandmarks / iod;
}

inline double ced_at(const std::vector<double>& errors, double threshold)
{
    std::size_t n = 0;
    for (double e : errors) {
        n += e <= threshold;
    }
    return errors.empty() ? 0.0 : static_cast<double>(n) / static_cast<double>(errors.size());
}

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion(const std::vector<double>& scores, const std::vector<bool>& truth, double threshold)
{
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (predicted && truth[i]) {
            ++c.tp;
        } else if (predicted) {
            ++c.fp;
        } else if (truth[i]) {
            ++c.fn;
        } else {
            ++c.tn;
        }
    }
    return c;
}

/// Pinhole projection of (X, Y, Z) under rotation vector r and translation t, Rodrigues by series-free formula.
inline std::array<double, 2> project(const std::array<double, 3>& p, const std::array<double, 3>& r,
                                     const std::array<double, 3>& t, double f, double cx, double cy)
{
    const double th = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
    std::array<double, 3> q = p;
    if (th > 0) {
        const double kx = r[0] / th, ky = r[1] / th, kz = r[2] / th;
        const double c = std::cos(th), s = std::sin(th);
        const double dot = kx * p[0] + ky * p[1] + kz * p[2];
        const std::array<double, 3> cross{ky * p[2] - kz * p[1], kz * p[0] - kx * p[2], kx * p[1] - ky * p[0]};
        for (int i = 0; i < 3; ++i) {
            const double k = i == 0 ? kx : (i == 1 ? ky : kz);
            q[i] = p[i] * c + cross[i] * s + k * dot * (1 - c);
        }
    }
    const double X = q[0] + t[0], Y = q[1] + t[1], Z = q[2] + t[2];
    return {cx + f * X / Z, cy + f * Y / Z};
}

inline std::filesystem::path temp_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("ricpr_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline ricpr::AnnotatedShape random_shape(std::mt19937_64& rng, double lo, double hi)
{
    std::uniform_real_distribution<double> u(lo, hi);
    ricpr::AnnotatedShape s;
    for (std::size_t j = 0; j < ricpr::kNumLandmarks; ++j) {
        s.points[j] = {u(rng), u(rng)};
        s.occluded[j] = (rng() & 3U) == 0;
    }
    return s;
}

} // namespace oracle
