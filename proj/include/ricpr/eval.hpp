#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ricpr/shape.hpp"

namespace ricpr {

struct NmeResult {
    /// Per-image error for included images, in input order.
    std::vector<double> per_image;
    /// Input positions of images kept / dropped for zero inter-ocular distance.
    std::vector<std::size_t> included;
    std::vector<std::size_t> excluded;
    std::vector<std::string> warnings;
    /// Mean of per_image; 0 when nothing is included.
    double mean = 0.0;
};

/// Mean over images of (mean landmark L2 error / inter-ocular distance).
NmeResult nme(std::span<const AnnotatedShape> preds, std::span<const AnnotatedShape> truths,
              const LandmarkIndexMap& index_map = default_index_map());

/// Fraction of errors <= each threshold. Thresholds must be non-decreasing.
std::vector<double> ced_curve(std::span<const double> errors, std::span<const double> thresholds);
/// n+1 evenly spaced thresholds from 0 to max_error.
std::vector<double> ced_thresholds(double max_error = 0.25, int steps = 250);

using OcclusionScores = std::array<double, kNumLandmarks>;
using OcclusionFlags = std::array<bool, kNumLandmarks>;

struct PrPoint {
    double threshold = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    /// 1 when nothing is predicted positive.
    double precision = 1.0;
    /// 0 when there are no positives (see OcclusionPr::recall_undefined).
    double recall = 0.0;
};

struct OcclusionPr {
    std::vector<PrPoint> points;
    double target_precision = 0.8;
    /// Highest recall among points with precision >= target_precision.
    double recall_at_precision = 0.0;
    /// Set when no operating point reaches the target precision.
    bool no_operating_point = false;
    /// Set when the ground truth holds no occluded landmark.
    bool recall_undefined = false;
    std::string pooling = "pooled-landmarks";
};

/// A landmark is predicted occluded when its score >= threshold. Counts are pooled over
/// every landmark of every image.
OcclusionPr occlusion_pr(std::span<const OcclusionScores> scores, std::span<const OcclusionFlags> truth,
                         std::span<const double> thresholds, double target_precision = 0.8);
/// Sorted distinct score values, the sweep that visits every distinct operating point.
std::vector<double> pr_thresholds(std::span<const OcclusionScores> scores);

struct FpsStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> runs;
    std::size_t images = 0;
};

/// images / seconds
double frames_per_second(std::size_t images, double seconds);

/// Calls process(i) for every image, `repeats` times after one untimed warm-up pass.
FpsStats measure_fps(std::size_t images, const std::function<void(std::size_t)>& process, int repeats = 3);
/// Mean and population standard deviation of per-run FPS values.
FpsStats summarize_fps(std::span<const double> runs, std::size_t images);

struct EvalSummary {
    std::size_t images = 0;
    NmeResult nme;
    std::vector<double> ced_thresholds;
    std::vector<double> ced;
    OcclusionPr pr;
    std::optional<FpsStats> fps;
};

/// NME is reported both raw and x100 (the x10^-2 table convention).
std::string summary_json(const EvalSummary& summary);
std::string ced_csv(std::span<const double> thresholds, std::span<const double> fractions);
std::string pr_csv(const OcclusionPr& pr);
/// Fixed axes: NME 0..0.25 against fraction 0..1.
std::string ced_svg(std::span<const double> thresholds, std::span<const double> fractions);
/// Fixed axes: recall 0..1 against precision 0..1.
std::string pr_svg(const OcclusionPr& pr);

} // namespace ricpr
