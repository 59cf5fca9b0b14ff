#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>

#include "ricpr/app.hpp"
#include "ricpr/eval.hpp"
#include "ricpr/fusion.hpp"
#include "ricpr/pose_init.hpp"
#include "ricpr/texture_init.hpp"

namespace py = pybind11;
using namespace ricpr;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using U32 = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;
using Bool = py::array_t<bool, py::array::c_style | py::array::forcecast>;

FaceBox as_box(const std::array<double, 4>& b) { return {b[0], b[1], b[2], b[3]}; }

void require_shape(const py::buffer_info& info, std::vector<py::ssize_t> dims, const char* what)
{
    if (info.shape != dims) {
        std::string expected;
        for (auto d : dims) {
            expected += (expected.empty() ? "" : ", ") + std::to_string(d);
        }
        throw py::value_error(std::string(what) + ": expected array of shape (" + expected + ")");
    }
}

// (n, 29, 2) points plus optional (n, 29) occlusion flags.
std::vector<AnnotatedShape> shapes_from(const F64& points, const std::optional<Bool>& occluded, const char* what)
{
    const auto info = points.request();
    if (info.ndim != 3 || info.shape[1] != static_cast<py::ssize_t>(kNumLandmarks) || info.shape[2] != 2) {
        throw py::value_error(std::string(what) + ": expected array of shape (n, 29, 2)");
    }
    const auto n = static_cast<std::size_t>(info.shape[0]);
    const double* p = points.data();
    const bool* occ = nullptr;
    if (occluded) {
        require_shape(occluded->request(), {info.shape[0], static_cast<py::ssize_t>(kNumLandmarks)}, what);
        occ = occluded->data();
    }
    std::vector<AnnotatedShape> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < kNumLandmarks; ++j) {
            out[i].points[j] = {p[(i * kNumLandmarks + j) * 2], p[(i * kNumLandmarks + j) * 2 + 1]};
            out[i].occluded[j] = occ != nullptr && occ[i * kNumLandmarks + j];
        }
    }
    return out;
}

F64 points_of(const AnnotatedShape& s)
{
    F64 out({static_cast<py::ssize_t>(kNumLandmarks), py::ssize_t{2}});
    auto m = out.mutable_unchecked<2>();
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        m(j, 0) = s.points[j].x;
        m(j, 1) = s.points[j].y;
    }
    return out;
}

Bool flags_of(const AnnotatedShape& s)
{
    Bool out(static_cast<py::ssize_t>(kNumLandmarks));
    auto m = out.mutable_unchecked<1>();
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        m(j) = s.occluded[j];
    }
    return out;
}

GrayImage image_from(const U8& image)
{
    const auto info = image.request();
    if (info.ndim != 2) {
        throw py::value_error("image: expected a 2-D uint8 array");
    }
    const auto h = static_cast<int>(info.shape[0]);
    const auto w = static_cast<int>(info.shape[1]);
    return {w, h, std::vector<std::uint8_t>(image.data(), image.data() + static_cast<std::size_t>(w) * h)};
}

HistogramMatrix matrix_from(const U32& m)
{
    const auto info = m.request();
    if (info.ndim != 2) {
        throw py::value_error("histogram matrix: expected a 2-D array");
    }
    return {static_cast<int>(info.shape[0]), static_cast<int>(info.shape[1]),
            std::vector<std::uint32_t>(m.data(), m.data() + info.size)};
}

} // namespace

PYBIND11_MODULE(_ricpr, m)
{
    m.doc() = "Face alignment with texture- and pose-correlated initialization";
    py::register_exception<Error>(m, "RicprError", PyExc_RuntimeError);

    m.attr("NUM_LANDMARKS") = kNumLandmarks;

    m.def(
        "normalize_to_box",
        [](const F64& points, const std::array<double, 4>& from_box, const std::array<double, 4>& to_box) {
            const auto info = points.request();
            require_shape(info, {static_cast<py::ssize_t>(kNumLandmarks), 2}, "points");
            AnnotatedShape s;
            for (std::size_t j = 0; j < kNumLandmarks; ++j) {
                s.points[j] = {points.data()[2 * j], points.data()[2 * j + 1]};
            }
            return points_of(normalize_to_box(s, as_box(from_box), as_box(to_box)));
        },
        py::arg("points"), py::arg("from_box"), py::arg("to_box"),
        "Map (29, 2) points from one [x, y, w, h] box to another.");

    m.def(
        "lbp_histogram",
        [](const U8& image, const std::array<double, 4>& box, int points, double radius, int blocks_per_side,
           int analysis_size) {
            LbpConfig c;
            c.points = points;
            c.radius = radius;
            c.blocks_per_side = blocks_per_side;
            c.analysis_size = analysis_size;
            const HistogramMatrix h = histogram_matrix(image_from(image), as_box(box), c);
            U32 out({h.rows(), h.cols()});
            std::copy(h.counts().begin(), h.counts().end(), out.mutable_data());
            return out;
        },
        py::arg("image"), py::arg("box"), py::arg("points") = 8, py::arg("radius") = 1.0,
        py::arg("blocks_per_side") = 8, py::arg("analysis_size") = 128,
        "Uniform LBP histogram matrix (blocks x labels) of the face box.");

    m.def(
        "pearson_distance",
        [](const U32& a, const U32& b) { return pearson_distance(matrix_from(a), matrix_from(b)); },
        py::arg("a"), py::arg("b"), "1 - Pearson correlation of two histogram matrices.");

    m.def(
        "estimate_pose",
        [](const F64& fiducials, const std::array<double, 4>& box) {
            require_shape(fiducials.request(), {5, 2}, "fiducials");
            std::vector<Landmark> pts;
            for (std::size_t i = 0; i < 5; ++i) {
                pts.push_back({fiducials.data()[2 * i], fiducials.data()[2 * i + 1]});
            }
            const FacePose pose = estimate_pose(fiducial_subset(default_mean_shape29()), FiducialFive::from_array(pts),
                                                CameraModel::from_box(as_box(box)));
            py::dict d;
            d["rotation"] = pose.rotation;
            d["translation"] = pose.translation;
            d["reprojection_rms"] = pose.reprojection_rms;
            d["residual_warning"] = pose.residual_warning;
            return d;
        },
        py::arg("fiducials"), py::arg("box"),
        "Head pose from (5, 2) fiducials (pupils, nose tip, mouth corners) with the built-in mean shape.");

    m.def(
        "fuse",
        [](const F64& texture, const F64& pose, double normalizer, double zeta, double outlier_multiplier,
           const std::optional<Bool>& texture_occluded, const std::optional<Bool>& pose_occluded) {
            PredictionSet set{shapes_from(texture, texture_occluded, "texture"), shapes_from(pose, pose_occluded, "pose"),
                              normalizer};
            FusionConfig c;
            c.zeta = zeta;
            c.outlier_multiplier = outlier_multiplier;
            const FusionResult r = fuse(set, c);
            py::dict d;
            d["points"] = points_of(r.shape);
            d["occluded"] = flags_of(r.shape);
            d["branch"] = to_string(r.report.branch);
            d["variance"] = r.report.variance;
            d["texture_variance"] = r.report.texture_variance;
            d["pose_variance"] = r.report.pose_variance;
            d["dropped"] = r.report.dropped;
            d["warnings"] = r.report.warnings;
            return d;
        },
        py::arg("texture"), py::arg("pose"), py::arg("normalizer"), py::arg("zeta") = 0.08,
        py::arg("outlier_multiplier") = 1.5, py::arg("texture_occluded") = py::none(),
        py::arg("pose_occluded") = py::none(),
        "Variance-gated fusion of (n, 29, 2) texture and (m, 29, 2) pose predictions.");

    m.def(
        "prediction_variance",
        [](const F64& preds, double normalizer) {
            return prediction_variance(shapes_from(preds, std::nullopt, "preds"), normalizer);
        },
        py::arg("preds"), py::arg("normalizer"));

    m.def(
        "nme",
        [](const F64& preds, const F64& truths) {
            const auto p = shapes_from(preds, std::nullopt, "preds");
            const auto t = shapes_from(truths, std::nullopt, "truths");
            const NmeResult r = nme(p, t);
            py::dict d;
            d["mean"] = r.mean;
            d["per_image"] = r.per_image;
            d["excluded"] = r.excluded;
            d["warnings"] = r.warnings;
            return d;
        },
        py::arg("preds"), py::arg("truths"), "Inter-ocular normalized mean error over images.");

    m.def(
        "ced_curve",
        [](const std::vector<double>& errors, const std::optional<std::vector<double>>& thresholds) {
            const auto th = thresholds ? *thresholds : ced_thresholds();
            return py::make_tuple(th, ced_curve(errors, th));
        },
        py::arg("errors"), py::arg("thresholds") = py::none(),
        "Returns (thresholds, fractions); defaults to 251 thresholds over [0, 0.25].");

    m.def(
        "occlusion_pr",
        [](const F64& scores, const Bool& flags, const std::optional<std::vector<double>>& thresholds,
           double target_precision) {
            const auto si = scores.request();
            if (si.ndim != 2 || si.shape[1] != static_cast<py::ssize_t>(kNumLandmarks)) {
                throw py::value_error("scores: expected array of shape (n, 29)");
            }
            require_shape(flags.request(), si.shape, "flags");
            const auto n = static_cast<std::size_t>(si.shape[0]);
            std::vector<OcclusionScores> s(n);
            std::vector<OcclusionFlags> f(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < kNumLandmarks; ++j) {
                    s[i][j] = scores.data()[i * kNumLandmarks + j];
                    f[i][j] = flags.data()[i * kNumLandmarks + j];
                }
            }
            const auto th = thresholds ? *thresholds : pr_thresholds(s);
            const OcclusionPr pr = occlusion_pr(s, f, th, target_precision);
            std::vector<double> t, precision, recall;
            for (const auto& p : pr.points) {
                t.push_back(p.threshold);
                precision.push_back(p.precision);
                recall.push_back(p.recall);
            }
            py::dict d;
            d["thresholds"] = t;
            d["precision"] = precision;
            d["recall"] = recall;
            d["recall_at_precision"] = pr.recall_at_precision;
            d["no_operating_point"] = pr.no_operating_point;
            d["recall_undefined"] = pr.recall_undefined;
            return d;
        },
        py::arg("scores"), py::arg("flags"), py::arg("thresholds") = py::none(), py::arg("target_precision") = 0.8,
        "Pooled occlusion precision/recall; score >= threshold means predicted occluded.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<std::string> all{"ricpr"};
            all.insert(all.end(), args.begin(), args.end());
            std::vector<const char*> argv;
            for (const auto& a : all) {
                argv.push_back(a.c_str());
            }
            py::gil_scoped_release release;
            return run_cli(static_cast<int>(argv.size()), argv.data(), std::cerr);
        },
        py::arg("args"), "Run a command-line subcommand in-process; returns the exit code.");
}
