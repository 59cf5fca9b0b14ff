#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ricpr {

inline constexpr std::size_t kNumLandmarks = 29;
inline constexpr std::size_t kNumFiducials = 5;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Landmark {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Landmark&, const Landmark&) = default;
};

bool is_finite(const Landmark& p);

/// Axis-aligned face box in image pixels, (x, y) is the top-left corner.
struct FaceBox {
    double x = 0.0;
    double y = 0.0;
    double width = 0.0;
    double height = 0.0;

    bool valid() const;
    Landmark center() const { return {x + 0.5 * width, y + 0.5 * height}; }
    double diagonal() const;
    /// Box scaled by `factor` about its own center.
    FaceBox scaled(double factor) const;

    friend bool operator==(const FaceBox&, const FaceBox&) = default;
};

/// Frame in which box-relative shapes are stored.
inline constexpr FaceBox kUnitBox{0.0, 0.0, 1.0, 1.0};

/// 29 landmarks plus occlusion state, in the canonical order documented in
/// docs/landmarks.md (see dataset_io.hpp).
struct AnnotatedShape {
    std::array<Landmark, kNumLandmarks> points{};
    std::array<bool, kNumLandmarks> occluded{};

    bool all_finite() const;
    /// Builds a shape from dynamically sized input; throws on arity mismatch.
    static AnnotatedShape from_vectors(std::span<const Landmark> points, std::span<const bool> occluded);

    friend bool operator==(const AnnotatedShape&, const AnnotatedShape&) = default;
};

/// Pupils, nose tip and mouth corners. "Left" is image-left.
struct FiducialFive {
    Landmark left_pupil;
    Landmark right_pupil;
    Landmark nose_tip;
    Landmark mouth_left;
    Landmark mouth_right;

    std::array<Landmark, kNumFiducials> as_array() const;
    static FiducialFive from_array(std::span<const Landmark> pts);
    /// Throws if any point is non-finite or the pupils are not ordered left to right.
    void validate() const;

    friend bool operator==(const FiducialFive&, const FiducialFive&) = default;
};

/// Which of the 29 landmark indices make up each fiducial point. Eye groups are
/// averaged; the remaining entries are single indices.
struct LandmarkIndexMap {
    std::vector<std::size_t> left_eye{16};
    std::vector<std::size_t> right_eye{17};
    std::size_t nose_tip = 20;
    std::size_t mouth_left = 22;
    std::size_t mouth_right = 23;

    /// Throws if an index is out of range or an eye group is empty.
    void validate() const;
};

const LandmarkIndexMap& default_index_map();

/// Affine map taking `from_box` corners to `to_box` corners, applied to every point.
AnnotatedShape normalize_to_box(const AnnotatedShape& shape, const FaceBox& from_box, const FaceBox& to_box);
Landmark map_between_boxes(const Landmark& p, const FaceBox& from_box, const FaceBox& to_box);

FiducialFive fiducials_from_ground_truth(const AnnotatedShape& shape, const LandmarkIndexMap& index_map = default_index_map());

/// Eye centers used as the inter-ocular normalizer.
std::pair<Landmark, Landmark> eye_centers(const AnnotatedShape& shape, const LandmarkIndexMap& index_map = default_index_map());

/// 2D similarity x' = [a -b; b a] x + t.
struct Similarity2D {
    double a = 1.0;
    double b = 0.0;
    double tx = 0.0;
    double ty = 0.0;

    Landmark apply(const Landmark& p) const { return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty}; }
    /// Linear part only (rotation and scale).
    Landmark apply_linear(const Landmark& v) const { return {a * v.x - b * v.y, b * v.x + a * v.y}; }
    Similarity2D inverse() const;
    double scale() const;
    double angle() const;
};

/// Least-squares similarity taking `from` onto `to` (equal, non-zero sizes).
Similarity2D fit_similarity(std::span<const Landmark> from, std::span<const Landmark> to);

Landmark centroid(std::span<const Landmark> pts);

} // namespace ricpr
