#pragma once

#include <string>
#include <vector>

#include "ricpr/shape.hpp"

namespace ricpr {

/// Cascade outputs from the two initialization families for one face.
struct PredictionSet {
    std::vector<AnnotatedShape> texture_preds;
    std::vector<AnnotatedShape> pose_preds;
    /// Spread normalizer in pixels (face-box diagonal).
    double normalizer = 1.0;
};

struct FusionConfig {
    double zeta = 0.08;
    /// Members farther than c times the median deviation from the family median are dropped.
    double outlier_multiplier = 1.5;

    void validate() const;
};

enum class FusionBranch { AllAgree, Texture, Pose, Fallback };

std::string to_string(FusionBranch branch);
FusionBranch fusion_branch_from_string(const std::string& name);

struct FusionReport {
    FusionBranch branch = FusionBranch::AllAgree;
    double variance = 0.0;
    double texture_variance = 0.0;
    double pose_variance = 0.0;
    /// Indices into the chosen family that were rejected as outliers.
    std::vector<std::size_t> dropped;
    std::vector<std::string> warnings;
    std::string normalizer = "box_diagonal";

    friend bool operator==(const FusionReport&, const FusionReport&) = default;
};

struct FusionResult {
    AnnotatedShape shape;
    FusionReport report;
};

/// sqrt(mean over landmarks of the summed x/y population variance across predictions) / normalizer.
double prediction_variance(const std::vector<AnnotatedShape>& preds, double normalizer);

/// Per-coordinate median; occlusion by majority vote, ties count as occluded.
AnnotatedShape median_shape(const std::vector<AnnotatedShape>& preds);

FusionResult fuse(const PredictionSet& preds, const FusionConfig& config = {});

/// True when the spread of partially regressed predictions is below zeta.
bool early_goodness(const std::vector<AnnotatedShape>& partial_preds, double normalizer,
                    const FusionConfig& config = {});

} // namespace ricpr
