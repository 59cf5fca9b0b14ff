#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ricpr/shape.hpp"

namespace ricpr {

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Point3&, const Point3&) = default;
};

/// 3D face shape in model units, centered at the origin. Model axes: x to image right,
/// y to image down, z away from the camera (the nose tip has negative z).
struct MeanShape3D {
    std::vector<int> ids;
    std::vector<Point3> points;

    std::size_t arity() const { return points.size(); }
    /// Throws unless arity is 5 or 29, ids match points and the centroid is at the origin.
    void validate() const;
    /// Same points translated so their centroid is the origin.
    static MeanShape3D centered(std::vector<Point3> points);

    friend bool operator==(const MeanShape3D&, const MeanShape3D&) = default;
};

/// Built-in 29-point mean face (see data/mean_shape_29.txt).
MeanShape3D default_mean_shape29();
/// The five fiducial points of a 29-point shape, re-centered. Eye groups are averaged.
MeanShape3D fiducial_subset(const MeanShape3D& mean29, const LandmarkIndexMap& index_map = default_index_map());

/// Pinhole camera with square pixels and zero skew.
struct CameraModel {
    double focal = 1.0;
    Landmark principal;

    /// focal = box width, principal point = box center.
    static CameraModel from_box(const FaceBox& box);
};

struct FacePose {
    /// Axis-angle rotation vector, radians; model -> camera.
    std::array<double, 3> rotation{};
    std::array<double, 3> translation{};
    CameraModel camera;
    /// RMS reprojection error of the fiducial correspondences, pixels.
    double reprojection_rms = 0.0;
    /// Set when reprojection_rms exceeds PnpOptions::residual_warn_ratio * focal.
    bool residual_warning = false;
};

struct PnpOptions {
    double residual_warn_ratio = 0.02;
    int refine_iterations = 30;
};

/// EPnP followed by Gauss-Newton refinement of the reprojection error.
FacePose estimate_pose(const MeanShape3D& mean5, const FiducialFive& fiducials, const CameraModel& camera,
                       const PnpOptions& options = {});

/// Generic EPnP entry point for n >= 4 correspondences.
FacePose solve_pnp(std::span<const Point3> model, std::span<const Landmark> image, const CameraModel& camera,
                   const PnpOptions& options = {});

std::array<double, 9> rotation_matrix(const std::array<double, 3>& rotation_vector);
std::array<double, 3> rotation_vector(const std::array<double, 9>& matrix);
/// Geodesic angle between two rotations, radians.
double rotation_angle_between(const std::array<double, 3>& a, const std::array<double, 3>& b);

/// Pinhole projection of every model point; throws when a point lies on or behind the camera plane.
std::vector<Landmark> project_points(std::span<const Point3> points, const FacePose& pose);

struct ProjectionOptions {
    /// Output points are clamped to the face box scaled by this factor about its center.
    double box_margin = 1.2;
    /// Each landmark is flagged occluded independently with this probability.
    double occlusion_rate = 0.23;
    LandmarkIndexMap index_map = default_index_map();
};

struct ProjectedShape {
    AnnotatedShape shape;
    /// RMS distance between the aligned fiducial subset and the target fiducials, pixels.
    double alignment_rms = 0.0;
};

ProjectedShape project_shape(const MeanShape3D& mean29, const FacePose& pose, const FaceBox& box,
                             const FiducialFive& fiducials, std::mt19937_64& rng,
                             const ProjectionOptions& options = {});

/// 3D variants of mean29 whose (x, y) come from frontal 2D training shapes.
std::vector<MeanShape3D> frontal_variants(std::span<const AnnotatedShape> frontal_shapes, const MeanShape3D& mean29);

struct PoseInitResult {
    FacePose pose;
    std::vector<ProjectedShape> shapes;
};

/// Estimates the pose once from mean5, then projects the first `count` variants.
PoseInitResult pose_init_shapes(const FaceBox& box, const FiducialFive& fiducials, const MeanShape3D& mean5,
                                std::span<const MeanShape3D> variants, std::size_t count, std::uint64_t seed,
                                const ProjectionOptions& options = {});

/// Uniform double in [0, 1) from 53 random bits; stable across standard libraries.
double uniform01(std::mt19937_64& rng);
/// Standard normal deviate (Box-Muller over uniform01).
double gaussian(std::mt19937_64& rng);
/// Uniform index in [0, n), n > 0.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

} // namespace ricpr
