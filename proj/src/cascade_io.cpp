#include <cmath>

#include "binary_io.hpp"
#include "ricpr/cascade.hpp"

// Model file layout (all integers and doubles little-endian):
//   "RICPRMDL" u32 version
//   "CONF" config block
//   "MEAN" 29 x (f64 x, f64 y), 29 x u8 zone, f64 mean occlusion rate
//   "STAG" u32 stage count, then per stage: u32 K, u32 eta, ferns, u32 V, visibility ferns
//   "SH3D" mean29, mean5, u32 variant count, variants
//   "END."
// A fern is: u32 depth, i32 output dims, depth x (feature, f64 threshold), bins as f64.

namespace ricpr {

namespace {

constexpr std::uint32_t kModelVersion = 1;

void write_anchor(detail::ByteWriter& w, const FeatureAnchor& a)
{
    w.u8(a.landmark);
    w.f64(a.dx);
    w.f64(a.dy);
}

FeatureAnchor read_anchor(detail::ByteReader& r)
{
    FeatureAnchor a;
    a.landmark = r.u8();
    if (a.landmark >= kNumLandmarks) {
        throw Error("model file: feature anchor landmark out of range");
    }
    a.dx = r.f64();
    a.dy = r.f64();
    return a;
}

void write_fern(detail::ByteWriter& w, const Fern& f)
{
    w.u32(static_cast<std::uint32_t>(f.features.size()));
    w.i32(f.output_dims);
    for (std::size_t d = 0; d < f.features.size(); ++d) {
        write_anchor(w, f.features[d].first);
        write_anchor(w, f.features[d].second);
        w.f64(f.thresholds[d]);
    }
    for (double v : f.bins) {
        w.f64(v);
    }
}

Fern read_fern(detail::ByteReader& r)
{
    Fern f;
    const std::uint32_t depth = r.u32();
    if (depth > 16) {
        throw Error("model file: fern depth " + std::to_string(depth) + " exceeds 16");
    }
    f.output_dims = r.i32();
    if (f.output_dims != static_cast<int>(kShapeDims) && f.output_dims != static_cast<int>(kNumLandmarks)) {
        throw Error("model file: unexpected fern output size " + std::to_string(f.output_dims));
    }
    for (std::uint32_t d = 0; d < depth; ++d) {
        ShapeIndexedFeature feature;
        feature.first = read_anchor(r);
        feature.second = read_anchor(r);
        f.features.push_back(feature);
        f.thresholds.push_back(r.f64());
    }
    const std::size_t n = r.count((std::uint64_t{1} << depth) * static_cast<std::uint64_t>(f.output_dims), 8);
    f.bins.resize(n);
    for (auto& v : f.bins) {
        v = r.f64();
        if (!std::isfinite(v)) {
            throw Error("model file: non-finite fern update");
        }
    }
    return f;
}

void write_shape3d(detail::ByteWriter& w, const MeanShape3D& s)
{
    w.u32(static_cast<std::uint32_t>(s.points.size()));
    for (std::size_t i = 0; i < s.points.size(); ++i) {
        w.i32(s.ids[i]);
        w.f64(s.points[i].x);
        w.f64(s.points[i].y);
        w.f64(s.points[i].z);
    }
}

MeanShape3D read_shape3d(detail::ByteReader& r)
{
    MeanShape3D s;
    const std::size_t n = r.count(r.u32(), 28);
    for (std::size_t i = 0; i < n; ++i) {
        s.ids.push_back(r.i32());
        Point3 p;
        p.x = r.f64();
        p.y = r.f64();
        p.z = r.f64();
        s.points.push_back(p);
    }
    s.validate();
    return s;
}

} // namespace

std::vector<std::uint8_t> serialize_model(const FernCascadeModel& model)
{
    detail::ByteWriter w;
    w.bytes("RICPRMDL");
    w.u32(kModelVersion);

    const auto& c = model.config;
    w.bytes("CONF");
    w.i32(c.stages);
    w.i32(c.ferns);
    w.i32(c.eta);
    w.i32(c.depth);
    w.i32(c.pool_size);
    w.i32(c.augment);
    w.i32(c.visibility_ferns);
    w.f64(c.shrinkage);
    w.f64(c.vote_epsilon);
    w.f64(c.feature_radius);
    w.u64(c.seed);

    w.bytes("MEAN");
    for (const auto& p : model.mean_shape) {
        w.f64(p.x);
        w.f64(p.y);
    }
    for (auto z : model.landmark_zone) {
        w.u8(z);
    }
    w.f64(model.mean_occlusion_rate);

    w.bytes("STAG");
    w.u32(static_cast<std::uint32_t>(model.stages.size()));
    for (const auto& stage : model.stages) {
        w.u32(static_cast<std::uint32_t>(stage.ferns.size()));
        for (const auto& members : stage.ferns) {
            w.u32(static_cast<std::uint32_t>(members.size()));
            for (const auto& m : members) {
                w.u8(static_cast<std::uint8_t>(m.zone));
                write_fern(w, m.fern);
            }
        }
        w.u32(static_cast<std::uint32_t>(stage.visibility.size()));
        for (const auto& f : stage.visibility) {
            write_fern(w, f);
        }
    }

    w.bytes("SH3D");
    write_shape3d(w, model.mean_shape29);
    write_shape3d(w, model.mean_shape5);
    w.u32(static_cast<std::uint32_t>(model.pose_variants.size()));
    for (const auto& v : model.pose_variants) {
        write_shape3d(w, v);
    }
    w.bytes("END.");
    return w.take();
}

FernCascadeModel deserialize_model(std::span<const std::uint8_t> bytes)
{
    detail::ByteReader r(bytes, "model file");
    r.expect("RICPRMDL");
    const std::uint32_t version = r.u32();
    if (version != kModelVersion) {
        throw Error("model file: unsupported version " + std::to_string(version) + " (this build reads version " +
                    std::to_string(kModelVersion) + ")");
    }
    FernCascadeModel model;
    auto& c = model.config;
    r.expect("CONF");
    c.stages = r.i32();
    c.ferns = r.i32();
    c.eta = r.i32();
    c.depth = r.i32();
    c.pool_size = r.i32();
    c.augment = r.i32();
    c.visibility_ferns = r.i32();
    c.shrinkage = r.f64();
    c.vote_epsilon = r.f64();
    c.feature_radius = r.f64();
    c.seed = r.u64();
    c.validate();

    r.expect("MEAN");
    for (auto& p : model.mean_shape) {
        p.x = r.f64();
        p.y = r.f64();
    }
    for (auto& z : model.landmark_zone) {
        z = r.u8();
        if (z >= kNumZones) {
            throw Error("model file: landmark zone out of range");
        }
    }
    model.mean_occlusion_rate = r.f64();

    r.expect("STAG");
    const std::size_t stages = r.count(r.u32(), 8);
    for (std::size_t t = 0; t < stages; ++t) {
        CascadeStage stage;
        const std::size_t k = r.count(r.u32(), 4);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t eta = r.count(r.u32(), 9);
            if (eta == 0) {
                throw Error("model file: primitive regressor without zone regressors");
            }
            std::vector<ZoneRegressor> members;
            for (std::size_t e = 0; e < eta; ++e) {
                ZoneRegressor m;
                m.zone = r.u8();
                if (m.zone >= kNumZones) {
                    throw Error("model file: regressor zone out of range");
                }
                m.fern = read_fern(r);
                if (m.fern.output_dims != static_cast<int>(kShapeDims)) {
                    throw Error("model file: shape fern with wrong output size");
                }
                members.push_back(std::move(m));
            }
            stage.ferns.push_back(std::move(members));
        }
        const std::size_t v = r.count(r.u32(), 8);
        for (std::size_t i = 0; i < v; ++i) {
            stage.visibility.push_back(read_fern(r));
            if (stage.visibility.back().output_dims != static_cast<int>(kNumLandmarks)) {
                throw Error("model file: visibility fern with wrong output size");
            }
        }
        model.stages.push_back(std::move(stage));
    }

    r.expect("SH3D");
    model.mean_shape29 = read_shape3d(r);
    model.mean_shape5 = read_shape3d(r);
    const std::size_t variants = r.count(r.u32(), 4);
    for (std::size_t i = 0; i < variants; ++i) {
        model.pose_variants.push_back(read_shape3d(r));
    }
    r.expect("END.");
    if (!r.at_end()) {
        throw Error("model file: trailing bytes after end marker");
    }
    return model;
}

void save_model(const FernCascadeModel& model, const std::filesystem::path& path)
{
    detail::write_file_bytes(path, serialize_model(model));
}

FernCascadeModel load_model(const std::filesystem::path& path)
{
    return deserialize_model(detail::read_file_bytes(path));
}

} // namespace ricpr
