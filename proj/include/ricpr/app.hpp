#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ricpr/cascade.hpp"
#include "ricpr/pipeline.hpp"

namespace ricpr {

/// Bad or missing command-line input; maps to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

struct RunConfig {
    std::string subcommand;
    std::filesystem::path manifest;
    std::filesystem::path model;
    std::filesystem::path gallery;
    std::filesystem::path out;
    std::filesystem::path results;
    std::optional<std::uint64_t> seed;
    int workers = 1;
    std::size_t l_texture = 5;
    std::size_t l_pose = 5;
    CascadeConfig cascade;
    double zeta = 0.08;
    bool plot_svg = false;

    // train
    std::string train_init = "random";
    std::size_t pose_variants = 10;
    std::filesystem::path mean_shape;
    // infer / init-analyze
    std::string split = "test";
    bool gt_fiducials = false;
    std::vector<double> zeta_sweep;
    // evaluate
    int fps_repeats = 0;
    // convert
    std::filesystem::path shapes_file;
    std::filesystem::path boxes_file;
    std::filesystem::path images_file;
    bool one_based = false;
    // synth
    std::size_t synth_count = 200;
    double test_fraction = 0.25;
    int image_size = 128;
    std::filesystem::path index_map_file;
};

/// Parses argv and runs the subcommand. Returns 0 on success, 1 on runtime failure,
/// 2 on usage errors. Progress goes to `log`, machine-readable output to files.
int run_cli(int argc, const char* const* argv, std::ostream& log);

void cmd_convert(const RunConfig& config, std::ostream& log);
void cmd_gallery_build(const RunConfig& config, std::ostream& log);
void cmd_train(const RunConfig& config, std::ostream& log);
/// Returns the number of records that failed.
std::size_t cmd_infer(const RunConfig& config, std::ostream& log);
void cmd_evaluate(const RunConfig& config, std::ostream& log);
void cmd_init_analyze(const RunConfig& config, std::ostream& log);
void cmd_plot(const RunConfig& config, std::ostream& log);
void cmd_synth(const RunConfig& config, std::ostream& log);

/// JSON object {"left_eye":[..], "right_eye":[..], "nose_tip":i, "mouth_left":i, "mouth_right":i}.
LandmarkIndexMap load_index_map(const std::filesystem::path& path);

} // namespace ricpr
