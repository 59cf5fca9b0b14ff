#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ricpr/image.hpp"
#include "ricpr/pose_init.hpp"
#include "ricpr/shape.hpp"

namespace ricpr {

inline constexpr int kNumZones = 9;
/// Shape updates hold 29 x-deltas followed by 29 y-deltas.
inline constexpr std::size_t kShapeDims = 2 * kNumLandmarks;

using ZoneOcclusion = std::array<double, kNumZones>;

/// One sampling position anchored to a landmark. The offset is expressed in the
/// unit-box frame of the mean shape and co-transforms with the current estimate.
struct FeatureAnchor {
    std::uint8_t landmark = 0;
    double dx = 0.0;
    double dy = 0.0;

    friend bool operator==(const FeatureAnchor&, const FeatureAnchor&) = default;
};

/// Pixel-difference feature: intensity at `first` minus intensity at `second`.
struct ShapeIndexedFeature {
    FeatureAnchor first;
    FeatureAnchor second;

    friend bool operator==(const ShapeIndexedFeature&, const ShapeIndexedFeature&) = default;
};

/// Depth-D fern; bit d of the bin index is set when feature d exceeds threshold d.
struct Fern {
    std::vector<ShapeIndexedFeature> features;
    std::vector<double> thresholds;
    int output_dims = static_cast<int>(kShapeDims);
    /// (1 << depth) * output_dims values, bin-major.
    std::vector<double> bins;

    int depth() const { return static_cast<int>(features.size()); }
    std::size_t bin_count() const { return std::size_t{1} << features.size(); }
    std::size_t bin_index(std::span<const double> feature_values) const;
    std::span<const double> output(std::size_t bin) const
    {
        return {bins.data() + bin * static_cast<std::size_t>(output_dims), static_cast<std::size_t>(output_dims)};
    }

    friend bool operator==(const Fern&, const Fern&) = default;
};

struct ZoneRegressor {
    int zone = 0;
    Fern fern;

    friend bool operator==(const ZoneRegressor&, const ZoneRegressor&) = default;
};

/// K primitive regressors, each a vote of eta zone regressors, plus per-landmark visibility ferns.
struct CascadeStage {
    std::vector<std::vector<ZoneRegressor>> ferns;
    std::vector<Fern> visibility;

    friend bool operator==(const CascadeStage&, const CascadeStage&) = default;
};

struct CascadeConfig {
    int stages = 100;
    int ferns = 15;
    int eta = 4;
    int depth = 5;
    int pool_size = 400;
    /// Initial shapes per training sample.
    int augment = 10;
    int visibility_ferns = 1;
    double shrinkage = 1000.0;
    double vote_epsilon = 0.05;
    /// Maximum anchor offset, unit-box units of the mean shape.
    double feature_radius = 0.15;
    std::uint64_t seed = 0;

    void validate() const;

    friend bool operator==(const CascadeConfig&, const CascadeConfig&) = default;
};

struct FernCascadeModel {
    CascadeConfig config;
    /// Mean training shape in the unit-box frame.
    std::array<Landmark, kNumLandmarks> mean_shape{};
    /// Zone of each landmark's mean-shape position.
    std::array<std::uint8_t, kNumLandmarks> landmark_zone{};
    std::vector<CascadeStage> stages;
    /// Occlusion rate of the training set, used to seed random occlusion flags.
    double mean_occlusion_rate = 0.23;
    MeanShape3D mean_shape29;
    MeanShape3D mean_shape5;
    std::vector<MeanShape3D> pose_variants;

    friend bool operator==(const FernCascadeModel&, const FernCascadeModel&) = default;
};

/// Row-major index of the 3x3 grid cell over `box` containing `point`; outside points clamp.
int zone_of(const Landmark& point, const FaceBox& box);

/// Fraction of landmarks flagged occluded in each zone; empty zones report 0.
ZoneOcclusion estimate_zone_occlusion(const AnnotatedShape& shape, const FaceBox& box);

/// Normalized vote weights: (1 - occ(zone_i)) + epsilon, scaled to sum to one.
std::vector<double> vote_weights(const ZoneOcclusion& zone_occlusion, std::span<const int> zones, double epsilon);

/// Occlusion-weighted vote of the eta zone regressors of one primitive regressor.
/// `feature_values[i]` holds the fern inputs of regressor i.
std::vector<double> weighted_update(const ZoneOcclusion& zone_occlusion, std::span<const ZoneRegressor> regressors,
                                    std::span<const std::vector<double>> feature_values, double epsilon);

/// Similarity taking the current shape (unit-box frame of `box`) onto the mean shape.
Similarity2D shape_to_mean(const AnnotatedShape& shape, const FaceBox& box,
                           const std::array<Landmark, kNumLandmarks>& mean_shape);

/// Image position of an anchor under the current shape estimate.
Landmark anchor_position(const FeatureAnchor& anchor, const AnnotatedShape& shape, const FaceBox& box,
                         const Similarity2D& mean_to_shape);

/// Feature values for `shape`; sampling uses the nearest pixel, clamped at the border.
std::vector<double> extract_features(const GrayImage& image, const AnnotatedShape& shape, const FaceBox& box,
                                     const std::array<Landmark, kNumLandmarks>& mean_shape,
                                     std::span<const ShapeIndexedFeature> features);

struct CascadeResult {
    AnnotatedShape shape;
    /// Visibility regression output clamped to [0, 1]; a landmark is occluded when >= 0.5.
    std::array<double, kNumLandmarks> occlusion_scores{};
    /// Shape after `checkpoint_stage` stages, when requested.
    std::optional<AnnotatedShape> checkpoint;
};

CascadeResult run_cascade_detailed(const FernCascadeModel& model, const GrayImage& image, const FaceBox& box,
                                   const AnnotatedShape& initial, std::optional<int> checkpoint_stage = std::nullopt);
AnnotatedShape run_cascade(const FernCascadeModel& model, const GrayImage& image, const FaceBox& box,
                           const AnnotatedShape& initial);

/// Number of stages making up the first 10% of the cascade (at least one when stages > 0).
int early_checkpoint_stage(const FernCascadeModel& model);

struct TrainingSample {
    const GrayImage* image = nullptr;
    FaceBox box;
    AnnotatedShape truth;
    /// Record id used in error messages.
    std::size_t id = 0;
};

/// Supplies starting shapes (image coordinates of the sample's box) for training augmentation.
class InitProvider {
public:
    virtual ~InitProvider() = default;
    virtual std::vector<AnnotatedShape> initial_shapes(std::span<const TrainingSample> samples, std::size_t sample,
                                                       std::size_t count, std::mt19937_64& rng) const = 0;
};

/// Ground truth of other training samples moved into this sample's box. With a single
/// sample, the mean shape under a random similarity perturbation is used instead.
class RandomInitProvider final : public InitProvider {
public:
    std::vector<AnnotatedShape> initial_shapes(std::span<const TrainingSample> samples, std::size_t sample,
                                               std::size_t count, std::mt19937_64& rng) const override;
};

/// Pairs each augmented sample with a fixed list of initial shapes.
class FixedInitProvider final : public InitProvider {
public:
    explicit FixedInitProvider(std::vector<std::vector<AnnotatedShape>> shapes) : shapes_(std::move(shapes)) {}
    std::vector<AnnotatedShape> initial_shapes(std::span<const TrainingSample> samples, std::size_t sample,
                                               std::size_t count, std::mt19937_64& rng) const override;

private:
    std::vector<std::vector<AnnotatedShape>> shapes_;
};

struct TrainingResult {
    FernCascadeModel model;
    /// Mean inter-ocular-normalized error over augmented samples; entry 0 is before stage 1.
    std::vector<double> error_trace;
};

struct TrainingOptions {
    int workers = 1;
    std::function<void(int stage, double error)> on_stage;
};

TrainingResult train_cascade(std::span<const TrainingSample> samples, const InitProvider& init_provider,
                             const CascadeConfig& config, const TrainingOptions& options = {});

/// Unit-box mean of the training ground truth.
std::array<Landmark, kNumLandmarks> mean_unit_shape(std::span<const TrainingSample> samples);

/// Mean over landmarks of the L2 error divided by the inter-ocular distance of `truth`.
double normalized_error(const AnnotatedShape& prediction, const AnnotatedShape& truth,
                        const LandmarkIndexMap& index_map = default_index_map());

void save_model(const FernCascadeModel& model, const std::filesystem::path& path);
FernCascadeModel load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const FernCascadeModel& model);
FernCascadeModel deserialize_model(std::span<const std::uint8_t> bytes);

} // namespace ricpr
