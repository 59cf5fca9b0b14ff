#include "ricpr/gallery.hpp"

#include <optional>

#include "binary_io.hpp"
#include "ricpr/parallel.hpp"

namespace ricpr {

namespace {

constexpr std::uint32_t kGalleryVersion = 1;

} // namespace

GalleryBuildResult build_gallery(const DatasetManifest& manifest, const LbpConfig& config, int workers)
{
    config.validate();
    const LbpDescriptor descriptor(config);
    std::vector<std::size_t> rows;
    for (std::size_t i : manifest.indices(Split::Train)) {
        rows.push_back(i);
    }
    std::vector<std::optional<GalleryEntry>> entries(rows.size());
    std::vector<std::string> errors(rows.size());
    parallel_for(rows.size(), workers, [&](std::size_t k) {
        const DatasetRecord& rec = manifest.records[rows[k]];
        try {
            if (!rec.truth) {
                throw Error("train record has no ground-truth landmarks");
            }
            const GrayImage image = load_image_gray(manifest.resolve(rec));
            GalleryEntry e;
            e.source_index = rows[k];
            e.histogram = descriptor.compute(image, rec.box);
            e.shape = *rec.truth;
            e.box = rec.box;
            entries[k] = std::move(e);
        } catch (const std::exception& ex) {
            errors[k] = ex.what();
        }
    });
    GalleryBuildResult result;
    result.gallery.descriptor = descriptor.name();
    result.gallery.config = config;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (entries[k]) {
            result.gallery.entries.push_back(std::move(*entries[k]));
        } else {
            result.errors.push_back({rows[k], manifest.records[rows[k]].id, errors[k]});
        }
    }
    return result;
}

std::vector<std::uint8_t> serialize_gallery(const Gallery& gallery)
{
    detail::ByteWriter w;
    w.bytes("RICPRGAL");
    w.u32(kGalleryVersion);
    w.str(gallery.descriptor);
    const LbpConfig& c = gallery.config;
    w.i32(c.points);
    w.f64(c.radius);
    w.u8(c.uniform ? 1 : 0);
    w.i32(c.blocks_per_side);
    w.i32(c.analysis_size);
    w.f64(c.min_box_side);
    w.u64(gallery.entries.size());
    for (const auto& e : gallery.entries) {
        w.u64(e.source_index);
        w.f64(e.box.x);
        w.f64(e.box.y);
        w.f64(e.box.width);
        w.f64(e.box.height);
        w.i32(e.histogram.rows());
        w.i32(e.histogram.cols());
        for (std::uint32_t v : e.histogram.counts()) {
            w.u32(v);
        }
        for (std::size_t j = 0; j < kNumLandmarks; ++j) {
            w.f64(e.shape.points[j].x);
            w.f64(e.shape.points[j].y);
            w.u8(e.shape.occluded[j] ? 1 : 0);
        }
    }
    w.bytes("END.");
    return w.take();
}

Gallery deserialize_gallery(std::span<const std::uint8_t> bytes)
{
    detail::ByteReader r(bytes, "gallery");
    r.expect("RICPRGAL");
    const std::uint32_t version = r.u32();
    if (version != kGalleryVersion) {
        throw Error("gallery: unsupported version " + std::to_string(version) + " (this build reads version " +
                    std::to_string(kGalleryVersion) + ")");
    }
    Gallery g;
    g.descriptor = r.str();
    g.config.points = r.i32();
    g.config.radius = r.f64();
    g.config.uniform = r.u8() != 0;
    g.config.blocks_per_side = r.i32();
    g.config.analysis_size = r.i32();
    g.config.min_box_side = r.f64();
    g.config.validate();
    const std::size_t n = r.count(r.u64(), 8);
    g.entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        GalleryEntry e;
        e.source_index = r.u64();
        e.box = {r.f64(), r.f64(), r.f64(), r.f64()};
        const int rows = r.i32();
        const int cols = r.i32();
        if (rows <= 0 || cols <= 0) {
            throw Error("gallery: entry " + std::to_string(i) + " has invalid histogram size");
        }
        const std::size_t cells = r.count(static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols), 4);
        std::vector<std::uint32_t> counts(cells);
        for (auto& v : counts) {
            v = r.u32();
        }
        e.histogram = HistogramMatrix(rows, cols, std::move(counts));
        for (std::size_t j = 0; j < kNumLandmarks; ++j) {
            e.shape.points[j].x = r.f64();
            e.shape.points[j].y = r.f64();
            e.shape.occluded[j] = r.u8() != 0;
        }
        if (!e.box.valid() || !e.shape.all_finite()) {
            throw Error("gallery: entry " + std::to_string(i) + " has an invalid box or shape");
        }
        g.entries.push_back(std::move(e));
    }
    r.expect("END.");
    if (!r.at_end()) {
        throw Error("gallery: trailing bytes after end marker");
    }
    return g;
}

void save_gallery(const Gallery& gallery, const std::filesystem::path& path)
{
    detail::write_file_bytes(path, serialize_gallery(gallery));
}

Gallery load_gallery(const std::filesystem::path& path)
{
    return deserialize_gallery(detail::read_file_bytes(path));
}

} // namespace ricpr
