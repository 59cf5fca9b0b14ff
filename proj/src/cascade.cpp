#include "ricpr/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>

#include "ricpr/parallel.hpp"

namespace ricpr {

namespace {

Landmark to_unit(const Landmark& p, const FaceBox& box) { return {(p.x - box.x) / box.width, (p.y - box.y) / box.height}; }

std::array<Landmark, kNumLandmarks> unit_points(const AnnotatedShape& shape, const FaceBox& box)
{
    std::array<Landmark, kNumLandmarks> out;
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        out[j] = to_unit(shape.points[j], box);
    }
    return out;
}

double sample_pixel(const GrayImage& image, const Landmark& p)
{
    const double x = std::clamp(p.x, 0.0, static_cast<double>(image.width() - 1));
    const double y = std::clamp(p.y, 0.0, static_cast<double>(image.height() - 1));
    return image.at(static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y)));
}

void apply_update(AnnotatedShape& shape, const FaceBox& box, const Similarity2D& mean_to_shape,
                  std::span<const double> delta)
{
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        const Landmark v = mean_to_shape.apply_linear({delta[j], delta[kNumLandmarks + j]});
        shape.points[j].x += v.x * box.width;
        shape.points[j].y += v.y * box.height;
    }
}

void apply_visibility(std::array<double, kNumLandmarks>& scores, AnnotatedShape& shape, std::span<const double> delta)
{
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        scores[j] = std::clamp(scores[j] + delta[j], 0.0, 1.0);
        shape.occluded[j] = scores[j] >= 0.5;
    }
}

} // namespace

void CascadeConfig::validate() const
{
    if (stages < 0 || ferns < 1 || eta < 1 || depth < 1 || depth > 16 || pool_size < 2 || augment < 1 ||
        visibility_ferns < 0) {
        throw Error("CascadeConfig: invalid dimensions (stages >= 0, ferns/eta/augment >= 1, 1 <= depth <= 16, "
                    "pool >= 2)");
    }
    if (!(shrinkage >= 0.0) || !(vote_epsilon >= 0.0) || !(feature_radius >= 0.0)) {
        throw Error("CascadeConfig: shrinkage, vote epsilon and feature radius must be non-negative");
    }
}

std::size_t Fern::bin_index(std::span<const double> feature_values) const
{
    std::size_t bin = 0;
    for (std::size_t d = 0; d < features.size(); ++d) {
        if (feature_values[d] > thresholds[d]) {
            bin |= std::size_t{1} << d;
        }
    }
    return bin;
}

int zone_of(const Landmark& point, const FaceBox& box)
{
    auto cell = [](double v) {
        if (!(v >= 0.0)) {
            return 0;
        }
        return std::min(static_cast<int>(std::floor(3.0 * v)), 2);
    };
    const int col = cell((point.x - box.x) / box.width);
    const int row = cell((point.y - box.y) / box.height);
    return row * 3 + col;
}

ZoneOcclusion estimate_zone_occlusion(const AnnotatedShape& shape, const FaceBox& box)
{
    std::array<int, kNumZones> total{};
    std::array<int, kNumZones> occluded{};
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        const int z = zone_of(shape.points[j], box);
        ++total[z];
        if (shape.occluded[j]) {
            ++occluded[z];
        }
    }
    ZoneOcclusion out{};
    for (int z = 0; z < kNumZones; ++z) {
        out[z] = total[z] == 0 ? 0.0 : static_cast<double>(occluded[z]) / total[z];
    }
    return out;
}

std::vector<double> vote_weights(const ZoneOcclusion& zone_occlusion, std::span<const int> zones, double epsilon)
{
    std::vector<double> w(zones.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < zones.size(); ++i) {
        w[i] = std::max(0.0, 1.0 - zone_occlusion[zones[i]]) + epsilon;
        sum += w[i];
    }
    for (auto& v : w) {
        v = sum > 0.0 ? v / sum : 1.0 / static_cast<double>(zones.size());
    }
    return w;
}

std::vector<double> weighted_update(const ZoneOcclusion& zone_occlusion, std::span<const ZoneRegressor> regressors,
                                    std::span<const std::vector<double>> feature_values, double epsilon)
{
    if (regressors.empty() || feature_values.size() != regressors.size()) {
        throw Error("weighted_update: need one feature vector per regressor and at least one regressor");
    }
    std::vector<int> zones;
    zones.reserve(regressors.size());
    for (const auto& r : regressors) {
        zones.push_back(r.zone);
    }
    const auto w = vote_weights(zone_occlusion, zones, epsilon);
    std::vector<double> delta(static_cast<std::size_t>(regressors.front().fern.output_dims), 0.0);
    for (std::size_t i = 0; i < regressors.size(); ++i) {
        const auto& fern = regressors[i].fern;
        const auto out = fern.output(fern.bin_index(feature_values[i]));
        for (std::size_t d = 0; d < delta.size(); ++d) {
            delta[d] += w[i] * out[d];
        }
    }
    return delta;
}

Similarity2D shape_to_mean(const AnnotatedShape& shape, const FaceBox& box,
                           const std::array<Landmark, kNumLandmarks>& mean_shape)
{
    const auto unit = unit_points(shape, box);
    return fit_similarity(unit, mean_shape);
}

Landmark anchor_position(const FeatureAnchor& anchor, const AnnotatedShape& shape, const FaceBox& box,
                         const Similarity2D& mean_to_shape)
{
    const Landmark v = mean_to_shape.apply_linear({anchor.dx, anchor.dy});
    const Landmark& p = shape.points[anchor.landmark];
    return {p.x + v.x * box.width, p.y + v.y * box.height};
}

std::vector<double> extract_features(const GrayImage& image, const AnnotatedShape& shape, const FaceBox& box,
                                     const std::array<Landmark, kNumLandmarks>& mean_shape,
                                     std::span<const ShapeIndexedFeature> features)
{
    const Similarity2D mean_to_shape = shape_to_mean(shape, box, mean_shape).inverse();
    std::vector<double> values;
    values.reserve(features.size());
    for (const auto& f : features) {
        values.push_back(sample_pixel(image, anchor_position(f.first, shape, box, mean_to_shape)) -
                         sample_pixel(image, anchor_position(f.second, shape, box, mean_to_shape)));
    }
    return values;
}

int early_checkpoint_stage(const FernCascadeModel& model)
{
    const int t = static_cast<int>(model.stages.size());
    if (t == 0) {
        return 0;
    }
    return std::max(1, static_cast<int>(std::ceil(0.1 * t)));
}

CascadeResult run_cascade_detailed(const FernCascadeModel& model, const GrayImage& image, const FaceBox& box,
                                   const AnnotatedShape& initial, std::optional<int> checkpoint_stage)
{
    if (!box.valid()) {
        throw Error("run_cascade: invalid face box");
    }
    if (!initial.all_finite()) {
        throw Error("run_cascade: initial shape has non-finite coordinates");
    }
    if (image.empty()) {
        throw Error("run_cascade: empty image");
    }
    CascadeResult result;
    result.shape = initial;
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        result.occlusion_scores[j] = initial.occluded[j] ? 1.0 : 0.0;
    }
    if (checkpoint_stage && *checkpoint_stage == 0) {
        result.checkpoint = result.shape;
    }
    const double eps = model.config.vote_epsilon;
    std::vector<double> delta(kShapeDims);
    std::vector<double> vis_delta(kNumLandmarks);
    for (std::size_t t = 0; t < model.stages.size(); ++t) {
        const auto& stage = model.stages[t];
        const Similarity2D mean_to_shape = shape_to_mean(result.shape, box, model.mean_shape).inverse();
        const ZoneOcclusion occ = estimate_zone_occlusion(result.shape, box);
        auto feature_values = [&](const Fern& fern) {
            std::vector<double> values;
            values.reserve(fern.features.size());
            for (const auto& f : fern.features) {
                values.push_back(sample_pixel(image, anchor_position(f.first, result.shape, box, mean_to_shape)) -
                                 sample_pixel(image, anchor_position(f.second, result.shape, box, mean_to_shape)));
            }
            return values;
        };
        std::fill(delta.begin(), delta.end(), 0.0);
        for (const auto& members : stage.ferns) {
            std::vector<std::vector<double>> values;
            values.reserve(members.size());
            for (const auto& m : members) {
                values.push_back(feature_values(m.fern));
            }
            const auto d = weighted_update(occ, members, values, eps);
            for (std::size_t k = 0; k < kShapeDims; ++k) {
                delta[k] += d[k];
            }
        }
        std::fill(vis_delta.begin(), vis_delta.end(), 0.0);
        for (const auto& fern : stage.visibility) {
            const auto out = fern.output(fern.bin_index(feature_values(fern)));
            for (std::size_t k = 0; k < kNumLandmarks; ++k) {
                vis_delta[k] += out[k];
            }
        }
        apply_update(result.shape, box, mean_to_shape, delta);
        if (!stage.visibility.empty()) {
            apply_visibility(result.occlusion_scores, result.shape, vis_delta);
        }
        if (checkpoint_stage && static_cast<std::size_t>(*checkpoint_stage) == t + 1) {
            result.checkpoint = result.shape;
        }
    }
    return result;
}

AnnotatedShape run_cascade(const FernCascadeModel& model, const GrayImage& image, const FaceBox& box,
                           const AnnotatedShape& initial)
{
    return run_cascade_detailed(model, image, box, initial).shape;
}

double normalized_error(const AnnotatedShape& prediction, const AnnotatedShape& truth, const LandmarkIndexMap& index_map)
{
    const auto [left, right] = eye_centers(truth, index_map);
    const double iod = std::hypot(left.x - right.x, left.y - right.y);
    if (!(iod > 0.0)) {
        throw Error("normalized_error: zero inter-ocular distance");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        sum += std::hypot(prediction.points[j].x - truth.points[j].x, prediction.points[j].y - truth.points[j].y);
    }
    return sum / static_cast<double>(kNumLandmarks) / iod;
}

std::array<Landmark, kNumLandmarks> mean_unit_shape(std::span<const TrainingSample> samples)
{
    if (samples.empty()) {
        throw Error("mean_unit_shape: empty training set");
    }
    std::array<Landmark, kNumLandmarks> mean{};
    for (const auto& s : samples) {
        const auto unit = unit_points(s.truth, s.box);
        for (std::size_t j = 0; j < kNumLandmarks; ++j) {
            mean[j].x += unit[j].x;
            mean[j].y += unit[j].y;
        }
    }
    for (auto& p : mean) {
        p.x /= static_cast<double>(samples.size());
        p.y /= static_cast<double>(samples.size());
    }
    return mean;
}

std::vector<AnnotatedShape> RandomInitProvider::initial_shapes(std::span<const TrainingSample> samples,
                                                               std::size_t sample, std::size_t count,
                                                               std::mt19937_64& rng) const
{
    const auto& target = samples[sample];
    std::vector<AnnotatedShape> out;
    out.reserve(count);
    if (samples.size() == 1) {
        const auto mean = mean_unit_shape(samples);
        const Landmark c = centroid(mean);
        for (std::size_t k = 0; k < count; ++k) {
            const double scale = 0.9 + 0.2 * uniform01(rng);
            const double angle = 0.3 * (uniform01(rng) - 0.5);
            const double tx = 0.16 * (uniform01(rng) - 0.5);
            const double ty = 0.16 * (uniform01(rng) - 0.5);
            AnnotatedShape s;
            for (std::size_t j = 0; j < kNumLandmarks; ++j) {
                const double x = mean[j].x - c.x;
                const double y = mean[j].y - c.y;
                const double u = c.x + tx + scale * (std::cos(angle) * x - std::sin(angle) * y);
                const double v = c.y + ty + scale * (std::sin(angle) * x + std::cos(angle) * y);
                s.points[j] = {target.box.x + u * target.box.width, target.box.y + v * target.box.height};
            }
            out.push_back(s);
        }
        return out;
    }
    // Donors are drawn without replacement, reshuffling once every donor has been used.
    std::vector<std::size_t> donors;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i != sample) {
            donors.push_back(i);
        }
    }
    for (std::size_t k = 0; k < count; ++k) {
        if (k % donors.size() == 0) {
            for (std::size_t i = donors.size(); i > 1; --i) {
                std::swap(donors[i - 1], donors[uniform_index(rng, i)]);
            }
        }
        const auto& donor = samples[donors[k % donors.size()]];
        out.push_back(normalize_to_box(donor.truth, donor.box, target.box));
    }
    return out;
}

std::vector<AnnotatedShape> FixedInitProvider::initial_shapes(std::span<const TrainingSample>, std::size_t sample,
                                                              std::size_t count, std::mt19937_64&) const
{
    if (sample >= shapes_.size() || shapes_[sample].size() < count) {
        throw Error("FixedInitProvider: not enough initial shapes for sample " + std::to_string(sample));
    }
    return {shapes_[sample].begin(), shapes_[sample].begin() + static_cast<std::ptrdiff_t>(count)};
}

namespace {

using PixelMatrix = Eigen::MatrixXd;

struct FernFit {
    Fern fern;
    std::vector<std::size_t> sample_bins;
};

// Correlation-based feature selection over pairs of pool pixels, then shrunken bin means.
FernFit fit_fern(const Eigen::MatrixXd& targets, const PixelMatrix& pixels, const Eigen::MatrixXd& pixel_cov, std::span<const std::size_t> candidates,
                 std::span<const FeatureAnchor> pool, int depth, double shrinkage, std::mt19937_64& rng)
{
    const Eigen::Index n = targets.rows();
    const Eigen::Index dims = targets.cols();
    FernFit fit;
    fit.fern.output_dims = static_cast<int>(dims);
    Eigen::MatrixXd values(n, depth);
    for (int d = 0; d < depth; ++d) {
        Eigen::VectorXd direction(dims);
        for (Eigen::Index k = 0; k < dims; ++k) {
            direction(k) = gaussian(rng);
        }
        direction.normalize();
        const Eigen::VectorXd projected = targets * direction;
        const Eigen::VectorXd y = projected.array() - projected.mean();
        const double var_y = y.squaredNorm() / static_cast<double>(n);

        std::vector<double> cov_y(candidates.size());
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const auto col = static_cast<Eigen::Index>(candidates[c]);
            cov_y[c] = (pixels.col(col).dot(y)) / static_cast<double>(n);
        }
        std::size_t best_i = 0;
        std::size_t best_j = candidates.size() > 1 ? 1 : 0;
        double best = -1.0;
        if (var_y > 1e-18) {
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                const auto pi = static_cast<Eigen::Index>(candidates[i]);
                for (std::size_t j = 0; j < candidates.size(); ++j) {
                    if (i == j) {
                        continue;
                    }
                    const auto pj = static_cast<Eigen::Index>(candidates[j]);
                    const double var = pixel_cov(pi, pi) + pixel_cov(pj, pj) - 2.0 * pixel_cov(pi, pj);
                    if (var <= 1e-12) {
                        continue;
                    }
                    const double corr = (cov_y[i] - cov_y[j]) / std::sqrt(var * var_y);
                    if (corr > best) {
                        best = corr;
                        best_i = i;
                        best_j = j;
                    }
                }
            }
        }
        if (best < 0.0) {
            best_i = uniform_index(rng, candidates.size());
            best_j = uniform_index(rng, candidates.size());
        }
        const auto ci = static_cast<Eigen::Index>(candidates[best_i]);
        const auto cj = static_cast<Eigen::Index>(candidates[best_j]);
        values.col(d) = pixels.col(ci) - pixels.col(cj);
        std::vector<double> sorted(values.col(d).data(), values.col(d).data() + n);
        const double q = 0.25 + 0.5 * uniform01(rng);
        const auto nth = static_cast<std::ptrdiff_t>(q * static_cast<double>(n - 1));
        std::nth_element(sorted.begin(), sorted.begin() + nth, sorted.end());
        fit.fern.features.push_back({pool[candidates[best_i]], pool[candidates[best_j]]});
        fit.fern.thresholds.push_back(sorted[static_cast<std::size_t>(nth)]);
    }

    const std::size_t bins = std::size_t{1} << depth;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(bins), dims);
    std::vector<double> counts(bins, 0.0);
    fit.sample_bins.resize(static_cast<std::size_t>(n));
    std::vector<double> row(static_cast<std::size_t>(depth));
    for (Eigen::Index s = 0; s < n; ++s) {
        for (int d = 0; d < depth; ++d) {
            row[d] = values(s, d);
        }
        const std::size_t b = fit.fern.bin_index(row);
        fit.sample_bins[static_cast<std::size_t>(s)] = b;
        sums.row(static_cast<Eigen::Index>(b)) += targets.row(s);
        counts[b] += 1.0;
    }
    fit.fern.bins.assign(bins * static_cast<std::size_t>(dims), 0.0);
    for (std::size_t b = 0; b < bins; ++b) {
        if (counts[b] == 0.0) {
            continue;
        }
        const double denom = counts[b] + shrinkage;
        for (Eigen::Index k = 0; k < dims; ++k) {
            fit.fern.bins[b * static_cast<std::size_t>(dims) + static_cast<std::size_t>(k)] =
                sums(static_cast<Eigen::Index>(b), k) / denom;
        }
    }
    return fit;
}

struct Augmented {
    std::size_t sample;
    AnnotatedShape current;
    std::array<double, kNumLandmarks> scores{};
};

double trace_error(std::span<const Augmented> aug, std::span<const TrainingSample> samples)
{
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& a : aug) {
        const auto& truth = samples[a.sample].truth;
        const auto [l, r] = eye_centers(truth);
        if (std::hypot(l.x - r.x, l.y - r.y) > 0.0) {
            sum += normalized_error(a.current, truth);
            ++used;
        }
    }
    return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

} // namespace

TrainingResult train_cascade(std::span<const TrainingSample> samples, const InitProvider& init_provider,
                             const CascadeConfig& config, const TrainingOptions& options)
{
    config.validate();
    if (samples.empty()) {
        throw Error("train_cascade: empty training set");
    }
    for (const auto& s : samples) {
        if (s.image == nullptr || s.image->empty()) {
            throw Error("train_cascade: sample " + std::to_string(s.id) + " has no image");
        }
        if (!s.box.valid()) {
            throw Error("train_cascade: sample " + std::to_string(s.id) + " has an invalid face box");
        }
        if (!s.truth.all_finite()) {
            throw Error("train_cascade: sample " + std::to_string(s.id) + " has non-finite ground truth");
        }
    }

    std::mt19937_64 rng(config.seed);
    TrainingResult result;
    FernCascadeModel& model = result.model;
    model.config = config;
    model.mean_shape = mean_unit_shape(samples);
    model.mean_shape29 = default_mean_shape29();
    model.mean_shape5 = fiducial_subset(model.mean_shape29);
    std::array<std::vector<std::uint8_t>, kNumZones> zone_landmarks;
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        model.landmark_zone[j] = static_cast<std::uint8_t>(zone_of(model.mean_shape[j], kUnitBox));
        zone_landmarks[model.landmark_zone[j]].push_back(static_cast<std::uint8_t>(j));
    }
    std::vector<int> live_zones;
    for (int z = 0; z < kNumZones; ++z) {
        if (!zone_landmarks[z].empty()) {
            live_zones.push_back(z);
        }
    }

    double occluded = 0.0;
    for (const auto& s : samples) {
        occluded += static_cast<double>(std::count(s.truth.occluded.begin(), s.truth.occluded.end(), true));
    }
    model.mean_occlusion_rate = occluded / static_cast<double>(samples.size() * kNumLandmarks);

    std::vector<Augmented> aug;
    aug.reserve(samples.size() * static_cast<std::size_t>(config.augment));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto inits = init_provider.initial_shapes(samples, i, static_cast<std::size_t>(config.augment), rng);
        for (const auto& init : inits) {
            if (!init.all_finite()) {
                throw Error("train_cascade: non-finite initial shape for sample " + std::to_string(samples[i].id));
            }
            Augmented a{i, init, {}};
            for (std::size_t j = 0; j < kNumLandmarks; ++j) {
                a.scores[j] = init.occluded[j] ? 1.0 : 0.0;
            }
            aug.push_back(a);
        }
    }
    const auto n = static_cast<Eigen::Index>(aug.size());
    result.error_trace.push_back(trace_error(aug, samples));
    if (options.on_stage) {
        options.on_stage(0, result.error_trace.back());
    }

    Eigen::MatrixXd targets(n, static_cast<Eigen::Index>(kShapeDims));
    Eigen::MatrixXd vis_targets(n, static_cast<Eigen::Index>(kNumLandmarks));
    std::vector<Similarity2D> mean_to_shape(aug.size());
    std::vector<ZoneOcclusion> zone_occ(aug.size());

    for (int t = 0; t < config.stages; ++t) {
        parallel_for(aug.size(), options.workers, [&](std::size_t s) {
            const auto& a = aug[s];
            const auto& sample = samples[a.sample];
            const Similarity2D to_mean = shape_to_mean(a.current, sample.box, model.mean_shape);
            mean_to_shape[s] = to_mean.inverse();
            zone_occ[s] = estimate_zone_occlusion(a.current, sample.box);
            const auto cur = unit_points(a.current, sample.box);
            const auto truth = unit_points(sample.truth, sample.box);
            for (std::size_t j = 0; j < kNumLandmarks; ++j) {
                const Landmark r = to_mean.apply_linear({truth[j].x - cur[j].x, truth[j].y - cur[j].y});
                targets(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = r.x;
                targets(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(kNumLandmarks + j)) = r.y;
                vis_targets(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) =
                    (sample.truth.occluded[j] ? 1.0 : 0.0) - a.scores[j];
            }
        });
        for (Eigen::Index s = 0; s < n; ++s) {
            if (!targets.row(s).allFinite()) {
                throw Error("train_cascade: non-finite residual for sample " +
                            std::to_string(samples[aug[static_cast<std::size_t>(s)].sample].id));
            }
        }

        // Feature pool, stratified over the zones that contain landmarks.
        std::vector<FeatureAnchor> pool;
        std::vector<int> pool_zone;
        std::array<std::vector<std::size_t>, kNumZones> zone_pool;
        const int per_zone = std::max(2, config.pool_size / static_cast<int>(live_zones.size()));
        for (int z : live_zones) {
            for (int k = 0; k < per_zone; ++k) {
                const auto& lms = zone_landmarks[z];
                const std::uint8_t lm = lms[uniform_index(rng, lms.size())];
                const double r = config.feature_radius * std::sqrt(uniform01(rng));
                const double a = 2.0 * std::numbers::pi * uniform01(rng);
                zone_pool[z].push_back(pool.size());
                pool.push_back({lm, r * std::cos(a), r * std::sin(a)});
                pool_zone.push_back(z);
            }
        }
        const auto pool_n = static_cast<Eigen::Index>(pool.size());
        PixelMatrix pixels(n, pool_n);
        parallel_for(aug.size(), options.workers, [&](std::size_t s) {
            const auto& a = aug[s];
            const auto& sample = samples[a.sample];
            for (Eigen::Index p = 0; p < pool_n; ++p) {
                pixels(static_cast<Eigen::Index>(s), p) = sample_pixel(
                    *sample.image, anchor_position(pool[static_cast<std::size_t>(p)], a.current, sample.box,
                                                   mean_to_shape[s]));
            }
        });
        const Eigen::VectorXd means = pixels.colwise().mean().transpose();
        const PixelMatrix centered = pixels.rowwise() - means.transpose();
        const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

        CascadeStage stage;
        Eigen::MatrixXd stage_delta = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(kShapeDims));
        for (int k = 0; k < config.ferns; ++k) {
            std::vector<int> zones(live_zones);
            for (std::size_t i = zones.size(); i > 1; --i) {
                std::swap(zones[i - 1], zones[uniform_index(rng, i)]);
            }
            std::vector<ZoneRegressor> members;
            std::vector<std::vector<std::size_t>> member_bins;
            for (int i = 0; i < config.eta; ++i) {
                const int zone = zones[static_cast<std::size_t>(i) % zones.size()];
                auto fit = fit_fern(targets, pixels, cov, zone_pool[zone], pool, config.depth,
                                    config.shrinkage, rng);
                members.push_back({zone, std::move(fit.fern)});
                member_bins.push_back(std::move(fit.sample_bins));
            }
            std::vector<int> member_zones;
            for (const auto& m : members) {
                member_zones.push_back(m.zone);
            }
            for (Eigen::Index s = 0; s < n; ++s) {
                const auto w = vote_weights(zone_occ[static_cast<std::size_t>(s)], member_zones, config.vote_epsilon);
                // Same accumulation order as weighted_update so training and inference agree bitwise.
                std::array<double, kShapeDims> vote{};
                for (std::size_t i = 0; i < members.size(); ++i) {
                    const auto out = members[i].fern.output(member_bins[i][static_cast<std::size_t>(s)]);
                    for (std::size_t d = 0; d < kShapeDims; ++d) {
                        vote[d] += w[i] * out[d];
                    }
                }
                for (std::size_t d = 0; d < kShapeDims; ++d) {
                    targets(s, static_cast<Eigen::Index>(d)) -= vote[d];
                    stage_delta(s, static_cast<Eigen::Index>(d)) += vote[d];
                }
            }
            stage.ferns.push_back(std::move(members));
        }

        Eigen::MatrixXd vis_delta = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(kNumLandmarks));
        std::vector<std::size_t> all_pool(pool.size());
        std::iota(all_pool.begin(), all_pool.end(), std::size_t{0});
        for (int v = 0; v < config.visibility_ferns; ++v) {
            auto fit = fit_fern(vis_targets, pixels, cov, all_pool, pool, config.depth, config.shrinkage, rng);
            for (Eigen::Index s = 0; s < n; ++s) {
                const auto out = fit.fern.output(fit.sample_bins[static_cast<std::size_t>(s)]);
                for (std::size_t d = 0; d < kNumLandmarks; ++d) {
                    vis_targets(s, static_cast<Eigen::Index>(d)) -= out[d];
                    vis_delta(s, static_cast<Eigen::Index>(d)) += out[d];
                }
            }
            stage.visibility.push_back(std::move(fit.fern));
        }

        for (std::size_t s = 0; s < aug.size(); ++s) {
            auto& a = aug[s];
            const auto& box = samples[a.sample].box;
            std::array<double, kShapeDims> d{};
            for (std::size_t k = 0; k < kShapeDims; ++k) {
                d[k] = stage_delta(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k));
            }
            apply_update(a.current, box, mean_to_shape[s], d);
            if (config.visibility_ferns > 0) {
                std::array<double, kNumLandmarks> vd{};
                for (std::size_t k = 0; k < kNumLandmarks; ++k) {
                    vd[k] = vis_delta(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k));
                }
                apply_visibility(a.scores, a.current, vd);
            }
        }
        model.stages.push_back(std::move(stage));
        result.error_trace.push_back(trace_error(aug, samples));
        if (options.on_stage) {
            options.on_stage(t + 1, result.error_trace.back());
        }
    }
    return result;
}

} // namespace ricpr
