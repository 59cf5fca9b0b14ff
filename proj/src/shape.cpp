#include "ricpr/shape.hpp"

#include <cmath>

namespace ricpr {

bool is_finite(const Landmark& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

bool FaceBox::valid() const
{
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(width) && std::isfinite(height) && width > 0.0 &&
           height > 0.0;
}

double FaceBox::diagonal() const { return std::hypot(width, height); }

FaceBox FaceBox::scaled(double factor) const
{
    const Landmark c = center();
    return {c.x - 0.5 * factor * width, c.y - 0.5 * factor * height, factor * width, factor * height};
}

bool AnnotatedShape::all_finite() const
{
    for (const auto& p : points) {
        if (!is_finite(p)) {
            return false;
        }
    }
    return true;
}

AnnotatedShape AnnotatedShape::from_vectors(std::span<const Landmark> pts, std::span<const bool> occ)
{
    if (pts.size() != kNumLandmarks || occ.size() != kNumLandmarks) {
        throw Error("shape arity mismatch: expected 29 points and 29 flags, got " + std::to_string(pts.size()) +
                    " points and " + std::to_string(occ.size()) + " flags");
    }
    AnnotatedShape s;
    for (std::size_t i = 0; i < kNumLandmarks; ++i) {
        s.points[i] = pts[i];
        s.occluded[i] = occ[i];
    }
    return s;
}

std::array<Landmark, kNumFiducials> FiducialFive::as_array() const
{
    return {left_pupil, right_pupil, nose_tip, mouth_left, mouth_right};
}

FiducialFive FiducialFive::from_array(std::span<const Landmark> pts)
{
    if (pts.size() != kNumFiducials) {
        throw Error("fiducial arity mismatch: expected 5 points, got " + std::to_string(pts.size()));
    }
    return {pts[0], pts[1], pts[2], pts[3], pts[4]};
}

void FiducialFive::validate() const
{
    for (const auto& p : as_array()) {
        if (!is_finite(p)) {
            throw Error("fiducial point is not finite");
        }
    }
    if (!(left_pupil.x < right_pupil.x)) {
        throw Error("left pupil must lie left of the right pupil");
    }
}

void LandmarkIndexMap::validate() const
{
    if (left_eye.empty() || right_eye.empty()) {
        throw Error("landmark index map: eye groups must be non-empty");
    }
    auto check = [](std::size_t i) {
        if (i >= kNumLandmarks) {
            throw Error("landmark index map: index " + std::to_string(i) + " out of range [0, 29)");
        }
    };
    for (auto i : left_eye) check(i);
    for (auto i : right_eye) check(i);
    check(nose_tip);
    check(mouth_left);
    check(mouth_right);
}

const LandmarkIndexMap& default_index_map()
{
    static const LandmarkIndexMap map{};
    return map;
}

Landmark map_between_boxes(const Landmark& p, const FaceBox& from_box, const FaceBox& to_box)
{
    const double u = (p.x - from_box.x) / from_box.width;
    const double v = (p.y - from_box.y) / from_box.height;
    return {to_box.x + u * to_box.width, to_box.y + v * to_box.height};
}

AnnotatedShape normalize_to_box(const AnnotatedShape& shape, const FaceBox& from_box, const FaceBox& to_box)
{
    if (!from_box.valid() || !to_box.valid()) {
        throw Error("normalize_to_box: degenerate face box");
    }
    AnnotatedShape out = shape;
    for (auto& p : out.points) {
        p = map_between_boxes(p, from_box, to_box);
    }
    return out;
}

namespace {

Landmark group_mean(const AnnotatedShape& shape, const std::vector<std::size_t>& group)
{
    Landmark m;
    for (auto i : group) {
        m.x += shape.points[i].x;
        m.y += shape.points[i].y;
    }
    m.x /= static_cast<double>(group.size());
    m.y /= static_cast<double>(group.size());
    return m;
}

} // namespace

FiducialFive fiducials_from_ground_truth(const AnnotatedShape& shape, const LandmarkIndexMap& index_map)
{
    index_map.validate();
    return {group_mean(shape, index_map.left_eye), group_mean(shape, index_map.right_eye),
            shape.points[index_map.nose_tip], shape.points[index_map.mouth_left], shape.points[index_map.mouth_right]};
}

std::pair<Landmark, Landmark> eye_centers(const AnnotatedShape& shape, const LandmarkIndexMap& index_map)
{
    index_map.validate();
    return {group_mean(shape, index_map.left_eye), group_mean(shape, index_map.right_eye)};
}

Similarity2D Similarity2D::inverse() const
{
    const double n = a * a + b * b;
    Similarity2D inv{a / n, -b / n, 0.0, 0.0};
    const Landmark t = inv.apply_linear({tx, ty});
    inv.tx = -t.x;
    inv.ty = -t.y;
    return inv;
}

double Similarity2D::scale() const { return std::hypot(a, b); }

double Similarity2D::angle() const { return std::atan2(b, a); }

Landmark centroid(std::span<const Landmark> pts)
{
    Landmark c;
    if (pts.empty()) {
        return c;
    }
    for (const auto& p : pts) {
        c.x += p.x;
        c.y += p.y;
    }
    c.x /= static_cast<double>(pts.size());
    c.y /= static_cast<double>(pts.size());
    return c;
}

Similarity2D fit_similarity(std::span<const Landmark> from, std::span<const Landmark> to)
{
    if (from.size() != to.size() || from.empty()) {
        throw Error("fit_similarity: point sets must be non-empty and of equal size");
    }
    const Landmark cf = centroid(from);
    const Landmark ct = centroid(to);
    double sxx = 0.0;
    double num_a = 0.0;
    double num_b = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        const double fx = from[i].x - cf.x;
        const double fy = from[i].y - cf.y;
        const double tx = to[i].x - ct.x;
        const double ty = to[i].y - ct.y;
        sxx += fx * fx + fy * fy;
        num_a += fx * tx + fy * ty;
        num_b += fx * ty - fy * tx;
    }
    Similarity2D s;
    if (sxx <= 0.0) {
        s.a = 1.0;
        s.b = 0.0;
    } else {
        s.a = num_a / sxx;
        s.b = num_b / sxx;
    }
    const Landmark r = s.apply_linear(cf);
    s.tx = ct.x - r.x;
    s.ty = ct.y - r.y;
    return s;
}

} // namespace ricpr
