#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ricpr/cascade.hpp"
#include "ricpr/dataset_io.hpp"
#include "ricpr/fusion.hpp"
#include "ricpr/pose_init.hpp"
#include "ricpr/texture_init.hpp"

namespace ricpr {

struct PipelineConfig {
    std::size_t l_texture = 5;
    std::size_t l_pose = 5;
    FusionConfig fusion;
    PnpOptions pnp;
    LandmarkIndexMap index_map = default_index_map();
    /// Use ground-truth-derived fiducials even when the record carries detected ones.
    bool fiducials_from_truth = false;
    std::uint64_t seed = 0;
    /// Keep the shape after the first 10% of stages for every prediction.
    bool keep_checkpoints = false;
};

struct InitialShape {
    AnnotatedShape shape;
    /// Correlation distance for texture initials; NaN for pose initials.
    double distance = 0.0;
    std::size_t source_index = 0;
};

struct ImageInference {
    ResultRecord result;
    std::vector<InitialShape> texture_inits;
    std::vector<InitialShape> pose_inits;
    std::vector<CascadeResult> texture_preds;
    std::vector<CascadeResult> pose_preds;
    std::vector<std::string> warnings;
};

/// Mixes the run seed with a record position; every per-record generator is seeded this way.
std::uint64_t record_seed(std::uint64_t seed, std::size_t index);

/// Which fiducials drive pose initialization for a record; empty when none are available.
std::optional<FiducialFive> select_fiducials(const DatasetRecord& record, const PipelineConfig& config,
                                             std::vector<std::string>& warnings);

/// Texture and pose initial shapes, cascade on each, then fusion.
ImageInference infer_image(const FernCascadeModel& model, const Gallery& gallery, const GrayImage& image,
                           const DatasetRecord& record, std::size_t record_index, const PipelineConfig& config);

/// Texture initial shapes in the image frame of `box`.
std::vector<InitialShape> texture_initial_shapes(const Gallery& gallery, const GrayImage& image, const FaceBox& box,
                                                 std::size_t count,
                                                 std::optional<std::size_t> exclude_source = std::nullopt);

/// `count` gallery shapes drawn uniformly without replacement and moved into `box`.
std::vector<InitialShape> random_initial_shapes(const Gallery& gallery, const FaceBox& box, std::size_t count,
                                                std::uint64_t seed);

/// Initial shapes drawn from the texture gallery (nearest neighbours of each sample,
/// itself excluded). Falls back to random donors when the gallery cannot serve a sample.
class TextureInitProvider final : public InitProvider {
public:
    TextureInitProvider(const Gallery& gallery, std::vector<HistogramMatrix> sample_histograms,
                        std::vector<std::optional<std::size_t>> gallery_source);
    std::vector<AnnotatedShape> initial_shapes(std::span<const TrainingSample> samples, std::size_t sample,
                                               std::size_t count, std::mt19937_64& rng) const override;

private:
    const Gallery& gallery_;
    std::vector<HistogramMatrix> histograms_;
    std::vector<std::optional<std::size_t>> sources_;
};

/// Mean shape as variant 0, then variants built from the `count - 1` training shapes whose
/// ground-truth pose is closest to frontal.
std::vector<MeanShape3D> select_pose_variants(std::span<const TrainingSample> samples, const MeanShape3D& mean29,
                                              const MeanShape3D& mean5, std::size_t count,
                                              const LandmarkIndexMap& index_map = default_index_map());

} // namespace ricpr
