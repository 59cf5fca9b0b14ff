#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "ricpr/dataset_io.hpp"
#include "ricpr/image.hpp"
#include "ricpr/shape.hpp"

namespace ricpr {

/// Procedural face images for tests and desk-scale experiments. Each face is the 3D
/// mean shape under a random head pose and a random 2D affine perturbation, rendered as
/// Gaussian blobs over a shaded ellipse, with optional textured occluder rectangles.
struct SynthConfig {
    std::size_t count = 200;
    int image_size = 128;
    /// Inter-pupil distance of an unperturbed face, pixels.
    double eye_distance = 34.0;
    double max_yaw_deg = 25.0;
    double max_pitch_deg = 15.0;
    double max_roll_deg = 15.0;
    /// Per-axis scale in [1 - s, 1 + s] and shear in [-s, s].
    double affine_jitter = 0.1;
    /// Per-landmark Gaussian jitter, fraction of the eye distance.
    double landmark_jitter = 0.02;
    double occluder_probability = 0.6;
    double pixel_noise = 3.0;
    /// Fiducials are the ground-truth five points plus this much Gaussian noise, pixels.
    double fiducial_noise = 1.0;
    double test_fraction = 0.0;
    std::uint64_t seed = 1;
};

struct SynthSample {
    GrayImage image;
    DatasetRecord record;
};

std::vector<SynthSample> generate_synthetic(const SynthConfig& config);
/// Renders `shape` (image coordinates) into a size x size raster.
GrayImage render_face(const AnnotatedShape& shape, int size, std::mt19937_64& rng, double pixel_noise);

/// Writes images as PNG under out_dir/images and the manifest to out_dir/manifest.jsonl.
DatasetManifest write_synthetic_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

} // namespace ricpr
