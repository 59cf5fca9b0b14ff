#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ricpr/image.hpp"
#include "ricpr/shape.hpp"

namespace ricpr {

/// Circular LBP operator with P samples on a circle of radius Q.
struct LbpConfig {
    int points = 8;
    double radius = 1.0;
    bool uniform = true;
    int blocks_per_side = 8;
    /// Face crops are resampled to analysis_size x analysis_size before blocking.
    int analysis_size = 128;
    /// Smallest accepted source box side, in pixels.
    double min_box_side = 8.0;

    void validate() const;
    /// Number of histogram bins: P(P-1)+3 for the uniform operator, 2^P otherwise.
    int label_count() const;
    int block_count() const { return blocks_per_side * blocks_per_side; }

    friend bool operator==(const LbpConfig&, const LbpConfig&) = default;
};

/// m x n matrix of per-block label histograms.
class HistogramMatrix {
public:
    HistogramMatrix() = default;
    HistogramMatrix(int rows, int cols);
    HistogramMatrix(int rows, int cols, std::vector<std::uint32_t> counts);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::uint32_t at(int i, int j) const { return counts_[static_cast<std::size_t>(i) * cols_ + j]; }
    std::uint32_t& at(int i, int j) { return counts_[static_cast<std::size_t>(i) * cols_ + j]; }
    std::uint64_t row_sum(int i) const;
    std::uint64_t total() const;
    const std::vector<std::uint32_t>& counts() const { return counts_; }

    friend bool operator==(const HistogramMatrix&, const HistogramMatrix&) = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<std::uint32_t> counts_;
};

/// Maps a raw P-bit pattern to its histogram label.
class LbpMapping {
public:
    explicit LbpMapping(const LbpConfig& config);
    int label(std::uint32_t pattern) const { return table_[pattern]; }
    int label_count() const { return label_count_; }
    int miscellaneous_label() const { return label_count_ - 1; }

private:
    std::vector<int> table_;
    int label_count_ = 0;
};

/// Number of circular 0/1 transitions in a P-bit pattern.
int circular_transitions(std::uint32_t pattern, int bits);

/// Raw P-bit pattern at an integer pixel; bit p is set when the p-th neighbour is >= the centre.
/// Neighbours sit at angle 2*pi*p/P, bilinearly interpolated off the pixel grid.
std::uint32_t lbp_pattern(const FloatImage& image, int x, int y, const LbpConfig& config);
int lbp_label(const FloatImage& image, int x, int y, const LbpConfig& config);
int lbp_label(const GrayImage& image, int x, int y, const LbpConfig& config);

/// Resampled crop: analysis_size plus a border of ceil(radius)+1 pixels on every side, so every
/// analysis pixel can be labelled. Pixels outside the raster replicate the border.
FloatImage analysis_crop(const GrayImage& image, const FaceBox& box, const LbpConfig& config);
int analysis_margin(const LbpConfig& config);

HistogramMatrix histogram_matrix(const GrayImage& image, const FaceBox& box, const LbpConfig& config);

/// d = 1 - rho, Pearson correlation over all entries of both matrices taken as one sample vector.
double pearson_distance(const HistogramMatrix& a, const HistogramMatrix& b);

/// Extension point for texture descriptors other than LBP. Any descriptor that
/// yields a fixed-size histogram matrix can populate a gallery.
class TextureDescriptor {
public:
    virtual ~TextureDescriptor() = default;
    virtual std::string name() const = 0;
    virtual HistogramMatrix compute(const GrayImage& image, const FaceBox& box) const = 0;
};

class LbpDescriptor final : public TextureDescriptor {
public:
    explicit LbpDescriptor(LbpConfig config = {});
    std::string name() const override { return "lbp-u2"; }
    HistogramMatrix compute(const GrayImage& image, const FaceBox& box) const override;
    const LbpConfig& config() const { return config_; }

private:
    LbpConfig config_;
};

struct GalleryEntry {
    std::size_t source_index = 0;
    HistogramMatrix histogram;
    /// Ground truth in image coordinates of the training record.
    AnnotatedShape shape;
    FaceBox box;
};

struct Gallery {
    std::string descriptor = "lbp-u2";
    LbpConfig config;
    std::vector<GalleryEntry> entries;
};

/// A training shape proposed as a starting point. The shape is expressed in the
/// unit box frame of the training face: (x - box.x) / box.width, likewise for y.
struct InitCandidate {
    AnnotatedShape shape;
    double distance = 0.0;
    std::size_t source_index = 0;
};

/// The `count` gallery shapes with smallest correlation distance, ascending, ties by lower
/// source index. `exclude_source` drops one record (leave-one-out on training data).
std::vector<InitCandidate> select_texture_init(const HistogramMatrix& query, const Gallery& gallery, std::size_t count,
                                               std::optional<std::size_t> exclude_source = std::nullopt);
std::vector<InitCandidate> select_texture_init(const GrayImage& image, const FaceBox& box, const Gallery& gallery,
                                               std::size_t count);

/// Correlation distance to every gallery entry, in gallery order.
std::vector<double> gallery_distances(const HistogramMatrix& query, const Gallery& gallery);

} // namespace ricpr
