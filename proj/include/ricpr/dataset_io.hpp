#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ricpr/fusion.hpp"
#include "ricpr/image.hpp"
#include "ricpr/pose_init.hpp"
#include "ricpr/shape.hpp"

namespace ricpr {

enum class Split { Train, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

/// One manifest row. Landmark order is the canonical 29-point order in docs/landmarks.md.
struct DatasetRecord {
    /// Explicit "id" field, or the zero-based row index when absent.
    std::string id;
    std::filesystem::path image;
    FaceBox box;
    std::optional<AnnotatedShape> truth;
    std::optional<FiducialFive> fiducials;
    Split split = Split::Train;
    /// One-based line in the source file; 0 for in-memory records.
    std::size_t line = 0;
};

struct DatasetManifest {
    /// Relative image paths resolve against this directory.
    std::filesystem::path base_dir;
    std::vector<DatasetRecord> records;

    std::filesystem::path resolve(const DatasetRecord& record) const;
    std::vector<std::size_t> indices(Split split) const;
};

/// JSON-lines manifest, one object per non-blank line:
/// {"image", "box":[x,y,w,h], "landmarks":[[x,y]x29], "occluded":[bool x29], "fiducials":[[x,y]x5]?, "split", "id"?}
/// Landmarks and occluded may be omitted together for inference-only rows.
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {});
std::string format_manifest(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// PNG or JPEG decoded to 8-bit gray with BT.601 luma.
GrayImage load_image_gray(const std::filesystem::path& path);
void save_image_png(const GrayImage& image, const std::filesystem::path& path);

struct ResultRecord {
    std::string id;
    AnnotatedShape shape;
    std::array<double, kNumLandmarks> occlusion_scores{};
    FusionReport fusion;
    /// Absent in deterministic outputs; wall-clock timings go to a sidecar file instead.
    std::optional<double> timing_ms;

    friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

std::string format_result(const ResultRecord& record);
ResultRecord parse_result(const std::string& line);
/// Throws before writing anything when a record holds a non-finite value, naming the record id.
void write_results(const std::vector<ResultRecord>& results, const std::filesystem::path& path);
std::vector<ResultRecord> read_results(const std::filesystem::path& path);

/// Text format:
///   ricpr-mean-shape version 1
///   arity N
///   <id> <x> <y> <z>   (N rows)
MeanShape3D load_mean_shape(const std::filesystem::path& path);
MeanShape3D parse_mean_shape(const std::string& text);
std::string format_mean_shape(const MeanShape3D& shape);
void save_mean_shape(const MeanShape3D& shape, const std::filesystem::path& path);

/// COFW export recipe: each shape row holds 29 x values, 29 y values and 29 occlusion flags
/// (87 numbers); each box row holds x y w h. Separators may be spaces, tabs or commas.
struct CofwConversion {
    std::string shapes_text;
    std::string boxes_text;
    std::vector<std::string> image_paths;
    Split split = Split::Train;
    /// Subtract one from coordinates exported from one-based tooling.
    bool one_based = false;
    std::string id_prefix;
};

DatasetManifest convert_cofw(const CofwConversion& input);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

} // namespace ricpr
