#include "ricpr/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ricpr {

namespace {

double median_of(std::vector<double> v)
{
    const std::size_t n = v.size();
    std::sort(v.begin(), v.end());
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_distance(const AnnotatedShape& a, const AnnotatedShape& b)
{
    double sum = 0.0;
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        sum += std::hypot(a.points[j].x - b.points[j].x, a.points[j].y - b.points[j].y);
    }
    return sum / static_cast<double>(kNumLandmarks);
}

} // namespace

void FusionConfig::validate() const
{
    if (!(zeta > 0.0)) {
        throw Error("FusionConfig: zeta must be positive");
    }
    if (!(outlier_multiplier > 0.0)) {
        throw Error("FusionConfig: outlier multiplier must be positive");
    }
}

std::string to_string(FusionBranch branch)
{
    switch (branch) {
    case FusionBranch::AllAgree:
        return "all-agree";
    case FusionBranch::Texture:
        return "texture";
    case FusionBranch::Pose:
        return "pose";
    case FusionBranch::Fallback:
        return "fallback";
    }
    return "unknown";
}

FusionBranch fusion_branch_from_string(const std::string& name)
{
    for (auto b : {FusionBranch::AllAgree, FusionBranch::Texture, FusionBranch::Pose, FusionBranch::Fallback}) {
        if (to_string(b) == name) {
            return b;
        }
    }
    throw Error("unknown fusion branch '" + name + "'");
}

double prediction_variance(const std::vector<AnnotatedShape>& preds, double normalizer)
{
    if (preds.empty()) {
        throw Error("prediction_variance: no predictions");
    }
    if (!(normalizer > 0.0)) {
        throw Error("prediction_variance: normalizer must be positive");
    }
    if (preds.size() == 1) {
        return 0.0;
    }
    const double n = static_cast<double>(preds.size());
    double total = 0.0;
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        // Offsets from the first prediction keep identical inputs at exactly zero.
        const Landmark ref = preds.front().points[j];
        double mx = 0.0;
        double my = 0.0;
        for (const auto& p : preds) {
            mx += p.points[j].x - ref.x;
            my += p.points[j].y - ref.y;
        }
        mx /= n;
        my /= n;
        double var = 0.0;
        for (const auto& p : preds) {
            const double dx = p.points[j].x - ref.x - mx;
            const double dy = p.points[j].y - ref.y - my;
            var += dx * dx + dy * dy;
        }
        total += var / n;
    }
    return std::sqrt(total / static_cast<double>(kNumLandmarks)) / normalizer;
}

AnnotatedShape median_shape(const std::vector<AnnotatedShape>& preds)
{
    if (preds.empty()) {
        throw Error("median_shape: no predictions");
    }
    AnnotatedShape out;
    std::vector<double> xs(preds.size());
    std::vector<double> ys(preds.size());
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        std::size_t occluded = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            xs[i] = preds[i].points[j].x;
            ys[i] = preds[i].points[j].y;
            occluded += preds[i].occluded[j] ? 1 : 0;
        }
        out.points[j] = {median_of(xs), median_of(ys)};
        out.occluded[j] = 2 * occluded >= preds.size();
    }
    return out;
}

FusionResult fuse(const PredictionSet& preds, const FusionConfig& config)
{
    config.validate();
    std::vector<AnnotatedShape> all;
    all.insert(all.end(), preds.texture_preds.begin(), preds.texture_preds.end());
    all.insert(all.end(), preds.pose_preds.begin(), preds.pose_preds.end());
    if (all.empty()) {
        throw Error("fuse: prediction set is empty");
    }
    for (const auto& p : all) {
        if (!p.all_finite()) {
            throw Error("fuse: prediction with non-finite coordinates");
        }
    }

    FusionResult result;
    auto& report = result.report;
    report.variance = prediction_variance(all, preds.normalizer);
    const double inf = std::numeric_limits<double>::infinity();
    report.texture_variance =
        preds.texture_preds.empty() ? inf : prediction_variance(preds.texture_preds, preds.normalizer);
    report.pose_variance = preds.pose_preds.empty() ? inf : prediction_variance(preds.pose_preds, preds.normalizer);

    if (report.variance < config.zeta) {
        report.branch = FusionBranch::AllAgree;
        result.shape = median_shape(all);
        return result;
    }

    const std::vector<AnnotatedShape>* family = nullptr;
    if (preds.texture_preds.empty() || preds.pose_preds.empty()) {
        report.warnings.push_back("one initialization family is empty; fusing the other alone");
    }
    if (report.texture_variance <= report.pose_variance) {
        report.branch = FusionBranch::Texture;
        family = &preds.texture_preds;
    } else {
        report.branch = FusionBranch::Pose;
        family = &preds.pose_preds;
    }
    if (family->empty()) {
        report.branch = FusionBranch::Fallback;
        report.warnings.push_back("chosen family is empty; using the median of all predictions");
        result.shape = median_shape(all);
        return result;
    }

    const AnnotatedShape center = median_shape(*family);
    std::vector<double> deviation;
    deviation.reserve(family->size());
    for (const auto& p : *family) {
        deviation.push_back(mean_distance(p, center));
    }
    const double mad = median_of(deviation);
    std::vector<AnnotatedShape> kept;
    for (std::size_t i = 0; i < family->size(); ++i) {
        if (deviation[i] > config.outlier_multiplier * mad) {
            report.dropped.push_back(i);
        } else {
            kept.push_back((*family)[i]);
        }
    }
    result.shape = median_shape(kept);
    return result;
}

bool early_goodness(const std::vector<AnnotatedShape>& partial_preds, double normalizer, const FusionConfig& config)
{
    config.validate();
    return prediction_variance(partial_preds, normalizer) < config.zeta;
}

} // namespace ricpr
