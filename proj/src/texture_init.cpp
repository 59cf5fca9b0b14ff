#include "ricpr/texture_init.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

namespace ricpr {

void LbpConfig::validate() const
{
    if (points < 4 || points > 16) {
        throw Error("LbpConfig: sampling points must lie in [4, 16]");
    }
    if (!(radius > 0.0) || !std::isfinite(radius)) {
        throw Error("LbpConfig: radius must be positive");
    }
    if (blocks_per_side < 1) {
        throw Error("LbpConfig: blocks_per_side must be >= 1");
    }
    if (analysis_size < blocks_per_side) {
        throw Error("LbpConfig: analysis_size must be at least blocks_per_side");
    }
}

int LbpConfig::label_count() const { return uniform ? points * (points - 1) + 3 : (1 << points); }

HistogramMatrix::HistogramMatrix(int rows, int cols)
    : rows_(rows), cols_(cols), counts_(static_cast<std::size_t>(rows) * cols, 0U)
{
}

HistogramMatrix::HistogramMatrix(int rows, int cols, std::vector<std::uint32_t> counts)
    : rows_(rows), cols_(cols), counts_(std::move(counts))
{
    if (rows < 0 || cols < 0 || counts_.size() != static_cast<std::size_t>(rows) * cols) {
        throw Error("HistogramMatrix: count buffer does not match dimensions");
    }
}

std::uint64_t HistogramMatrix::row_sum(int i) const
{
    const auto first = counts_.begin() + static_cast<std::ptrdiff_t>(i) * cols_;
    return std::accumulate(first, first + cols_, std::uint64_t{0});
}

std::uint64_t HistogramMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

int circular_transitions(std::uint32_t pattern, int bits)
{
    const std::uint32_t mask = (bits >= 32) ? 0xFFFFFFFFU : ((1U << bits) - 1U);
    pattern &= mask;
    const std::uint32_t rotated = ((pattern >> 1) | ((pattern & 1U) << (bits - 1))) & mask;
    return std::popcount(pattern ^ rotated);
}

LbpMapping::LbpMapping(const LbpConfig& config)
{
    config.validate();
    const std::uint32_t patterns = 1U << config.points;
    table_.resize(patterns);
    if (!config.uniform) {
        std::iota(table_.begin(), table_.end(), 0);
        label_count_ = static_cast<int>(patterns);
        return;
    }
    label_count_ = config.label_count();
    const int misc = label_count_ - 1;
    int next = 0;
    for (std::uint32_t p = 0; p < patterns; ++p) {
        table_[p] = circular_transitions(p, config.points) <= 2 ? next++ : misc;
    }
}

namespace {

struct Offset {
    double dx;
    double dy;
};

double snap(double v)
{
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
}

std::vector<Offset> circle_offsets(const LbpConfig& config)
{
    std::vector<Offset> offsets(static_cast<std::size_t>(config.points));
    for (int p = 0; p < config.points; ++p) {
        const double angle = 2.0 * std::numbers::pi * p / config.points;
        offsets[p] = {snap(config.radius * std::cos(angle)), snap(-config.radius * std::sin(angle))};
    }
    return offsets;
}

std::uint32_t pattern_at(const FloatImage& image, int x, int y, const std::vector<Offset>& offsets)
{
    const double center = image.at(x, y);
    std::uint32_t pattern = 0;
    for (std::size_t p = 0; p < offsets.size(); ++p) {
        const double v = image.bilinear(x + offsets[p].dx, y + offsets[p].dy);
        if (v >= center) {
            pattern |= 1U << p;
        }
    }
    return pattern;
}

FloatImage to_float(const GrayImage& image)
{
    FloatImage f{image.width(), image.height(), {}};
    f.values.assign(image.pixels().begin(), image.pixels().end());
    return f;
}

} // namespace

std::uint32_t lbp_pattern(const FloatImage& image, int x, int y, const LbpConfig& config)
{
    config.validate();
    const double reach = std::ceil(config.radius);
    if (x - reach < 0 || y - reach < 0 || x + reach > image.width - 1 || y + reach > image.height - 1) {
        throw Error("lbp_label: centre lies within the sampling radius of the raster edge");
    }
    return pattern_at(image, x, y, circle_offsets(config));
}

int lbp_label(const FloatImage& image, int x, int y, const LbpConfig& config)
{
    const std::uint32_t pattern = lbp_pattern(image, x, y, config);
    return LbpMapping(config).label(pattern);
}

int lbp_label(const GrayImage& image, int x, int y, const LbpConfig& config)
{
    return lbp_label(to_float(image), x, y, config);
}

int analysis_margin(const LbpConfig& config) { return static_cast<int>(std::ceil(config.radius)) + 1; }

FloatImage analysis_crop(const GrayImage& image, const FaceBox& box, const LbpConfig& config)
{
    config.validate();
    if (!box.valid()) {
        throw Error("histogram_matrix: invalid face box");
    }
    if (image.empty()) {
        throw Error("histogram_matrix: empty image");
    }
    const Landmark c = box.center();
    if (c.x < 0.0 || c.y < 0.0 || c.x > image.width() || c.y > image.height()) {
        throw Error("histogram_matrix: face box lies outside the image");
    }
    if (box.width < config.min_box_side || box.height < config.min_box_side) {
        throw Error("histogram_matrix: face box smaller than the analysis minimum");
    }
    const int size = config.analysis_size;
    const int margin = analysis_margin(config);
    FloatImage crop{size + 2 * margin, size + 2 * margin, {}};
    crop.values.resize(static_cast<std::size_t>(crop.width) * crop.height);
    const double sx = box.width / size;
    const double sy = box.height / size;
    for (int j = 0; j < crop.height; ++j) {
        const double y = box.y + (j - margin + 0.5) * sy - 0.5;
        for (int i = 0; i < crop.width; ++i) {
            const double x = box.x + (i - margin + 0.5) * sx - 0.5;
            crop.at(i, j) = image.sample(x, y);
        }
    }
    return crop;
}

HistogramMatrix histogram_matrix(const GrayImage& image, const FaceBox& box, const LbpConfig& config)
{
    const FloatImage crop = analysis_crop(image, box, config);
    const LbpMapping mapping(config);
    const auto offsets = circle_offsets(config);
    const int size = config.analysis_size;
    const int margin = analysis_margin(config);
    const int bps = config.blocks_per_side;
    HistogramMatrix h(config.block_count(), mapping.label_count());
    for (int y = 0; y < size; ++y) {
        const int block_row = y * bps / size;
        for (int x = 0; x < size; ++x) {
            const int block = block_row * bps + x * bps / size;
            const int label = mapping.label(pattern_at(crop, x + margin, y + margin, offsets));
            ++h.at(block, label);
        }
    }
    return h;
}

double pearson_distance(const HistogramMatrix& a, const HistogramMatrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error("pearson_distance: histogram matrix dimensions differ");
    }
    const auto& va = a.counts();
    const auto& vb = b.counts();
    const double n = static_cast<double>(va.size());
    if (va.empty()) {
        throw Error("pearson_distance: empty histogram matrix");
    }
    double mean_a = 0.0;
    double mean_b = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        mean_a += va[i];
        mean_b += vb[i];
    }
    mean_a /= n;
    mean_b /= n;
    double cov = 0.0;
    double var_a = 0.0;
    double var_b = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double da = va[i] - mean_a;
        const double db = vb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a <= 0.0 || var_b <= 0.0) {
        throw Error("pearson_distance: zero-variance histogram matrix (degenerate crop)");
    }
    const double rho = cov / (std::sqrt(var_a) * std::sqrt(var_b));
    return std::clamp(1.0 - rho, 0.0, 2.0);
}

LbpDescriptor::LbpDescriptor(LbpConfig config) : config_(config) { config_.validate(); }

HistogramMatrix LbpDescriptor::compute(const GrayImage& image, const FaceBox& box) const
{
    return histogram_matrix(image, box, config_);
}

std::vector<double> gallery_distances(const HistogramMatrix& query, const Gallery& gallery)
{
    std::vector<double> d;
    d.reserve(gallery.entries.size());
    for (const auto& e : gallery.entries) {
        d.push_back(pearson_distance(query, e.histogram));
    }
    return d;
}

std::vector<InitCandidate> select_texture_init(const HistogramMatrix& query, const Gallery& gallery, std::size_t count,
                                               std::optional<std::size_t> exclude_source)
{
    if (gallery.entries.empty()) {
        throw Error("select_texture_init: empty gallery");
    }
    if (count == 0) {
        throw Error("select_texture_init: count must be >= 1");
    }
    const auto distances = gallery_distances(query, gallery);
    std::vector<std::size_t> order;
    order.reserve(distances.size());
    for (std::size_t i = 0; i < distances.size(); ++i) {
        if (!exclude_source || gallery.entries[i].source_index != *exclude_source) {
            order.push_back(i);
        }
    }
    if (count > order.size()) {
        throw Error("select_texture_init: requested " + std::to_string(count) + " candidates from a gallery of " +
                    std::to_string(order.size()));
    }
    auto before = [&](std::size_t lhs, std::size_t rhs) {
        if (distances[lhs] != distances[rhs]) {
            return distances[lhs] < distances[rhs];
        }
        return gallery.entries[lhs].source_index < gallery.entries[rhs].source_index;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(), before);
    std::vector<InitCandidate> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const auto& e = gallery.entries[order[k]];
        out.push_back({normalize_to_box(e.shape, e.box, kUnitBox), distances[order[k]], e.source_index});
    }
    return out;
}

std::vector<InitCandidate> select_texture_init(const GrayImage& image, const FaceBox& box, const Gallery& gallery,
                                               std::size_t count)
{
    return select_texture_init(histogram_matrix(image, box, gallery.config), gallery, count);
}

} // namespace ricpr
