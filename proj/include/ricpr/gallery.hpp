#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ricpr/dataset_io.hpp"
#include "ricpr/texture_init.hpp"

namespace ricpr {

struct RecordError {
    std::size_t index = 0;
    std::string id;
    std::string message;
};

struct GalleryBuildResult {
    Gallery gallery;
    /// Records that could not be read or described; they are left out of the gallery.
    std::vector<RecordError> errors;
};

/// One entry per train-split record with ground truth, in manifest order. Records are
/// processed in parallel; output order does not depend on the worker count.
GalleryBuildResult build_gallery(const DatasetManifest& manifest, const LbpConfig& config = {}, int workers = 1);

/// Binary layout (little-endian):
///   "RICPRGAL" u32 version=1
///   str descriptor; i32 points; f64 radius; u8 uniform; i32 blocks_per_side; i32 analysis_size; f64 min_box_side
///   u64 entry count; per entry:
///     u64 source_index; f64 box x,y,w,h; i32 rows; i32 cols; u32 counts[rows*cols];
///     29 x (f64 x, f64 y, u8 occluded)
///   "END."
std::vector<std::uint8_t> serialize_gallery(const Gallery& gallery);
Gallery deserialize_gallery(std::span<const std::uint8_t> bytes);
void save_gallery(const Gallery& gallery, const std::filesystem::path& path);
Gallery load_gallery(const std::filesystem::path& path);

} // namespace ricpr
