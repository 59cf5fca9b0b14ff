#include "ricpr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ricpr {

std::uint64_t record_seed(std::uint64_t seed, std::size_t index)
{
    // splitmix64 finalizer over (seed, index)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::optional<FiducialFive> select_fiducials(const DatasetRecord& record, const PipelineConfig& config,
                                             std::vector<std::string>& warnings)
{
    if (record.fiducials && !config.fiducials_from_truth) {
        return record.fiducials;
    }
    if (record.truth) {
        if (!config.fiducials_from_truth) {
            warnings.push_back("no detected fiducials; using ground-truth-derived fiducials");
        }
        FiducialFive f = fiducials_from_ground_truth(*record.truth, config.index_map);
        try {
            f.validate();
            return f;
        } catch (const Error& e) {
            warnings.push_back(std::string("ground-truth fiducials unusable: ") + e.what());
            return std::nullopt;
        }
    }
    warnings.push_back("no fiducials and no ground truth; pose-correlated initialization skipped");
    return std::nullopt;
}

std::vector<InitialShape> texture_initial_shapes(const Gallery& gallery, const GrayImage& image, const FaceBox& box,
                                                 std::size_t count, std::optional<std::size_t> exclude_source)
{
    const LbpDescriptor descriptor(gallery.config);
    const HistogramMatrix query = descriptor.compute(image, box);
    std::vector<InitialShape> out;
    for (const auto& c : select_texture_init(query, gallery, count, exclude_source)) {
        out.push_back({normalize_to_box(c.shape, kUnitBox, box), c.distance, c.source_index});
    }
    return out;
}

std::vector<InitialShape> random_initial_shapes(const Gallery& gallery, const FaceBox& box, std::size_t count,
                                                std::uint64_t seed)
{
    if (gallery.entries.empty()) {
        throw Error("random_initial_shapes: empty gallery");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(gallery.entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    count = std::min(count, order.size());
    std::vector<InitialShape> out;
    for (std::size_t k = 0; k < count; ++k) {
        std::swap(order[k], order[k + uniform_index(rng, order.size() - k)]);
        const auto& e = gallery.entries[order[k]];
        out.push_back({normalize_to_box(e.shape, e.box, box), std::numeric_limits<double>::quiet_NaN(), e.source_index});
    }
    return out;
}

ImageInference infer_image(const FernCascadeModel& model, const Gallery& gallery, const GrayImage& image,
                           const DatasetRecord& record, std::size_t record_index, const PipelineConfig& config)
{
    ImageInference out;
    out.result.id = record.id;
    const FaceBox& box = record.box;

    if (config.l_texture > 0) {
        if (gallery.entries.empty()) {
            out.warnings.push_back("empty gallery; texture-correlated initialization skipped");
        } else {
            const std::size_t count = std::min(config.l_texture, gallery.entries.size());
            if (count < config.l_texture) {
                out.warnings.push_back("gallery holds only " + std::to_string(count) + " entries");
            }
            out.texture_inits = texture_initial_shapes(gallery, image, box, count);
        }
    }

    if (config.l_pose > 0) {
        if (auto fiducials = select_fiducials(record, config, out.warnings)) {
            std::vector<MeanShape3D> variants = model.pose_variants;
            if (variants.empty()) {
                variants.push_back(model.mean_shape29);
            }
            const std::size_t available = variants.size();
            for (std::size_t k = available; k < config.l_pose; ++k) {
                variants.push_back(variants[k % available]);
            }
            ProjectionOptions popts;
            popts.occlusion_rate = model.mean_occlusion_rate;
            popts.index_map = config.index_map;
            try {
                const auto pose = pose_init_shapes(box, *fiducials, model.mean_shape5, variants, config.l_pose,
                                                   record_seed(config.seed, record_index), popts);
                if (pose.pose.residual_warning) {
                    out.warnings.push_back("pose reprojection residual above threshold");
                }
                for (const auto& s : pose.shapes) {
                    out.pose_inits.push_back({s.shape, std::numeric_limits<double>::quiet_NaN(), 0});
                }
            } catch (const Error& e) {
                out.warnings.push_back(std::string("pose-correlated initialization failed: ") + e.what());
            }
        }
    }
    if (out.texture_inits.empty() && out.pose_inits.empty()) {
        throw Error("record '" + record.id + "': no initial shapes available");
    }

    std::optional<int> checkpoint;
    if (config.keep_checkpoints) {
        checkpoint = early_checkpoint_stage(model);
    }
    PredictionSet preds;
    preds.normalizer = box.diagonal();
    for (const auto& init : out.texture_inits) {
        out.texture_preds.push_back(run_cascade_detailed(model, image, box, init.shape, checkpoint));
        preds.texture_preds.push_back(out.texture_preds.back().shape);
    }
    for (const auto& init : out.pose_inits) {
        out.pose_preds.push_back(run_cascade_detailed(model, image, box, init.shape, checkpoint));
        preds.pose_preds.push_back(out.pose_preds.back().shape);
    }
    const FusionResult fused = fuse(preds, config.fusion);

    // Occlusion scores average the cascade outputs that fed the final median.
    std::vector<const CascadeResult*> used;
    auto take_family = [&](const std::vector<CascadeResult>& family) {
        for (std::size_t i = 0; i < family.size(); ++i) {
            if (std::find(fused.report.dropped.begin(), fused.report.dropped.end(), i) == fused.report.dropped.end()) {
                used.push_back(&family[i]);
            }
        }
    };
    switch (fused.report.branch) {
    case FusionBranch::Texture:
        take_family(out.texture_preds);
        break;
    case FusionBranch::Pose:
        take_family(out.pose_preds);
        break;
    default:
        for (const auto& r : out.texture_preds) {
            used.push_back(&r);
        }
        for (const auto& r : out.pose_preds) {
            used.push_back(&r);
        }
    }
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        double sum = 0.0;
        for (const auto* r : used) {
            sum += r->occlusion_scores[j];
        }
        out.result.occlusion_scores[j] = std::clamp(sum / static_cast<double>(used.size()), 0.0, 1.0);
    }
    out.result.shape = fused.shape;
    out.result.fusion = fused.report;
    out.result.fusion.warnings.insert(out.result.fusion.warnings.begin(), out.warnings.begin(), out.warnings.end());
    return out;
}

TextureInitProvider::TextureInitProvider(const Gallery& gallery, std::vector<HistogramMatrix> sample_histograms,
                                         std::vector<std::optional<std::size_t>> gallery_source)
    : gallery_(gallery), histograms_(std::move(sample_histograms)), sources_(std::move(gallery_source))
{
    if (histograms_.size() != sources_.size()) {
        throw Error("TextureInitProvider: histogram and source lists differ in length");
    }
}

std::vector<AnnotatedShape> TextureInitProvider::initial_shapes(std::span<const TrainingSample> samples,
                                                                std::size_t sample, std::size_t count,
                                                                std::mt19937_64& rng) const
{
    const auto& target = samples[sample];
    std::vector<AnnotatedShape> out;
    if (sample < histograms_.size() && histograms_[sample].rows() > 0) {
        const std::size_t others = gallery_.entries.size() - (sources_[sample] ? 1 : 0);
        for (const auto& c :
             select_texture_init(histograms_[sample], gallery_, std::min(count, others), sources_[sample])) {
            out.push_back(normalize_to_box(c.shape, kUnitBox, target.box));
        }
    }
    if (out.size() < count) {
        const auto extra = RandomInitProvider{}.initial_shapes(samples, sample, count - out.size(), rng);
        out.insert(out.end(), extra.begin(), extra.end());
    }
    return out;
}

std::vector<MeanShape3D> select_pose_variants(std::span<const TrainingSample> samples, const MeanShape3D& mean29,
                                              const MeanShape3D& mean5, std::size_t count,
                                              const LandmarkIndexMap& index_map)
{
    std::vector<MeanShape3D> out{mean29};
    if (count <= 1) {
        return out;
    }
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        try {
            const FiducialFive f = fiducials_from_ground_truth(samples[i].truth, index_map);
            f.validate();
            const FacePose pose = estimate_pose(mean5, f, CameraModel::from_box(samples[i].box));
            const auto& r = pose.rotation;
            ranked.emplace_back(std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]), i);
        } catch (const Error&) {
            // Degenerate annotations cannot serve as frontal references.
        }
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<AnnotatedShape> frontal;
    for (std::size_t k = 0; k < ranked.size() && frontal.size() + 1 < count; ++k) {
        frontal.push_back(samples[ranked[k].second].truth);
    }
    if (!frontal.empty()) {
        for (auto& v : frontal_variants(frontal, mean29)) {
            out.push_back(std::move(v));
        }
    }
    return out;
}

} // namespace ricpr
