#include "ricpr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Dense>

#include "ricpr/pose_init.hpp"

namespace ricpr {

namespace {

using Mat3 = std::array<double, 9>;

double uniform(std::mt19937_64& rng, double lo, double hi)
{
    return lo + (hi - lo) * uniform01(rng);
}

struct Blob {
    double sigma;
    double amplitude;
};

/// Appearance per landmark; sigma in eye distances, amplitude in gray levels.
Blob landmark_blob(std::size_t j)
{
    if (j < 8) {
        return {0.06, -55.0};
    }
    if (j < 16) {
        return {0.05, -35.0};
    }
    if (j < 18) {
        return {0.07, -90.0};
    }
    if (j < 22) {
        return {0.06, -30.0};
    }
    if (j < 28) {
        return {0.07, -50.0};
    }
    return {0.10, -25.0};
}

Mat3 multiply(const Mat3& a, const Mat3& b)
{
    Mat3 c{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (int k = 0; k < 3; ++k) {
                c[3 * i + j] += a[3 * i + k] * b[3 * k + j];
            }
        }
    }
    return c;
}

/// Least-squares 2D affine [a b tx; c d ty] taking `from` onto `to`.
Eigen::Matrix<double, 2, 3> fit_affine(std::span<const Landmark> from, std::span<const Landmark> to)
{
    Eigen::MatrixXd a(from.size(), 3);
    Eigen::MatrixXd b(from.size(), 2);
    for (std::size_t i = 0; i < from.size(); ++i) {
        a.row(static_cast<Eigen::Index>(i)) << from[i].x, from[i].y, 1.0;
        b.row(static_cast<Eigen::Index>(i)) << to[i].x, to[i].y;
    }
    const Eigen::MatrixXd sol = a.colPivHouseholderQr().solve(b);
    Eigen::Matrix<double, 2, 3> m;
    m.row(0) << sol(0, 0), sol(1, 0), sol(2, 0);
    m.row(1) << sol(0, 1), sol(1, 1), sol(2, 1);
    return m;
}

struct Occluder {
    double x0, y0, x1, y1;
    int pattern;
    double level;
    double period;
    double phase;

    bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    double value(int x, int y, std::mt19937_64& rng) const
    {
        switch (pattern) {
        case 0:
            return level + 12.0 * gaussian(rng);
        case 1:
            return level + 45.0 * std::sin(2.0 * std::numbers::pi * (x + phase) / period);
        default:
            return level + ((((x / static_cast<int>(period)) + (y / static_cast<int>(period))) % 2 == 0) ? 35.0 : -35.0);
        }
    }
};

struct Scene {
    Eigen::Matrix<double, 2, 3> model_to_image;
    double skin = 160.0;
    double shade = 0.0;
    double background = 100.0;
    double bg_fx = 0.05;
    double bg_fy = 0.03;
    double bg_amp = 20.0;
    std::vector<Occluder> occluders;
};

GrayImage render(const AnnotatedShape& shape, int size, const Scene& scene, double eye_px, std::mt19937_64& rng,
                 double pixel_noise)
{
    std::vector<double> canvas(static_cast<std::size_t>(size) * size);
    Eigen::Matrix2d lin = scene.model_to_image.leftCols<2>();
    const Eigen::Vector2d t = scene.model_to_image.col(2);
    if (std::abs(lin.determinant()) < 1e-12) {
        lin = Eigen::Matrix2d::Identity() * eye_px;
    }
    const Eigen::Matrix2d inv = lin.inverse();
    // Face ellipse in mean-shape model units: centre (0, 0.1), radii (1.0, 1.25).
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const Eigen::Vector2d m = inv * (Eigen::Vector2d(x, y) - t);
            const double r = std::hypot(m.x() / 1.0, (m.y() - 0.1) / 1.25);
            const double bg = scene.background + scene.bg_amp * std::sin(scene.bg_fx * x + scene.bg_fy * y * 1.7);
            const double face = scene.skin + scene.shade * m.x();
            const double wface = std::clamp((1.05 - r) / 0.1, 0.0, 1.0);
            canvas[static_cast<std::size_t>(y) * size + x] = wface * face + (1.0 - wface) * bg;
        }
    }
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        const Blob blob = landmark_blob(j);
        const double sigma = std::max(blob.sigma * eye_px, 0.7);
        const int reach = static_cast<int>(std::ceil(3.0 * sigma));
        const int cx = static_cast<int>(std::lround(shape.points[j].x));
        const int cy = static_cast<int>(std::lround(shape.points[j].y));
        for (int y = std::max(0, cy - reach); y <= std::min(size - 1, cy + reach); ++y) {
            for (int x = std::max(0, cx - reach); x <= std::min(size - 1, cx + reach); ++x) {
                const double dx = x - shape.points[j].x;
                const double dy = y - shape.points[j].y;
                canvas[static_cast<std::size_t>(y) * size + x] +=
                    blob.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            }
        }
    }
    for (const auto& occ : scene.occluders) {
        for (int y = std::max(0, static_cast<int>(occ.y0)); y < std::min(size, static_cast<int>(std::ceil(occ.y1))); ++y) {
            for (int x = std::max(0, static_cast<int>(occ.x0)); x < std::min(size, static_cast<int>(std::ceil(occ.x1)));
                 ++x) {
                if (occ.contains(x, y)) {
                    canvas[static_cast<std::size_t>(y) * size + x] = occ.value(x, y, rng);
                }
            }
        }
    }
    GrayImage image(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double v = canvas[static_cast<std::size_t>(y) * size + x] + pixel_noise * gaussian(rng);
            image.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return image;
}

std::vector<Landmark> frontal_model_2d()
{
    const MeanShape3D mean = default_mean_shape29();
    std::vector<Landmark> out;
    for (const auto& p : mean.points) {
        out.push_back({p.x, p.y});
    }
    return out;
}

Scene random_scene(std::mt19937_64& rng, double yaw)
{
    Scene s;
    s.skin = uniform(rng, 135.0, 195.0);
    s.shade = 30.0 * yaw + uniform(rng, -8.0, 8.0);
    s.background = uniform(rng, 40.0, 215.0);
    s.bg_fx = uniform(rng, 0.02, 0.3);
    s.bg_fy = uniform(rng, 0.02, 0.3);
    s.bg_amp = uniform(rng, 5.0, 30.0);
    return s;
}

SynthSample make_sample(const SynthConfig& c, std::size_t index, std::mt19937_64& rng)
{
    static const MeanShape3D mean = default_mean_shape29();
    static const std::vector<Landmark> model2d = frontal_model_2d();
    constexpr double deg = std::numbers::pi / 180.0;

    const double yaw = uniform(rng, -c.max_yaw_deg, c.max_yaw_deg) * deg;
    const double pitch = uniform(rng, -c.max_pitch_deg, c.max_pitch_deg) * deg;
    const double roll = uniform(rng, -c.max_roll_deg, c.max_roll_deg) * deg;
    const Mat3 rot = multiply(rotation_matrix({0.0, 0.0, roll}),
                              multiply(rotation_matrix({0.0, yaw, 0.0}), rotation_matrix({pitch, 0.0, 0.0})));
    const double sx = 1.0 + uniform(rng, -c.affine_jitter, c.affine_jitter);
    const double sy = 1.0 + uniform(rng, -c.affine_jitter, c.affine_jitter);
    const double shear = uniform(rng, -c.affine_jitter, c.affine_jitter);
    const double scale = c.eye_distance * uniform(rng, 0.9, 1.1);
    const double half = 0.5 * c.image_size;
    const Landmark center{half + uniform(rng, -0.05, 0.05) * c.image_size,
                          half + uniform(rng, -0.05, 0.05) * c.image_size};
    constexpr double depth = 8.0;

    AnnotatedShape truth;
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        const Point3& p = mean.points[j];
        const double X = rot[0] * p.x + rot[1] * p.y + rot[2] * p.z;
        const double Y = rot[3] * p.x + rot[4] * p.y + rot[5] * p.z;
        const double Z = rot[6] * p.x + rot[7] * p.y + rot[8] * p.z;
        const double u = depth * X / (depth + Z) + c.landmark_jitter * gaussian(rng);
        const double v = depth * Y / (depth + Z) + c.landmark_jitter * gaussian(rng);
        const double ax = sx * u + shear * v;
        const double ay = sy * v;
        truth.points[j] = {center.x + scale * ax, center.y + scale * ay};
    }

    double minx = truth.points[0].x, maxx = minx, miny = truth.points[0].y, maxy = miny;
    for (const auto& p : truth.points) {
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
    }
    const double side = 1.25 * std::max(maxx - minx, maxy - miny) * uniform(rng, 0.97, 1.03);
    const double bcx = 0.5 * (minx + maxx) + uniform(rng, -0.03, 0.03) * side;
    const double bcy = 0.5 * (miny + maxy) + uniform(rng, -0.03, 0.03) * side;
    const FaceBox box{bcx - 0.5 * side, bcy - 0.5 * side, side, side};

    Scene scene = random_scene(rng, yaw);
    scene.model_to_image = fit_affine(model2d, truth.points);
    if (uniform01(rng) < c.occluder_probability) {
        const int n = uniform01(rng) < 0.25 ? 2 : 1;
        for (int k = 0; k < n; ++k) {
            Occluder o{};
            const double w = uniform(rng, 0.25, 0.5) * side;
            const double h = uniform(rng, 0.25, 0.5) * side;
            o.x0 = box.x + uniform(rng, 0.0, side - w);
            o.y0 = box.y + uniform(rng, 0.0, side - h);
            o.x1 = o.x0 + w;
            o.y1 = o.y0 + h;
            o.pattern = static_cast<int>(uniform01(rng) * 3.0);
            o.level = uniform(rng, 40.0, 220.0);
            o.period = std::floor(uniform(rng, 3.0, 8.0));
            o.phase = uniform(rng, 0.0, 8.0);
            scene.occluders.push_back(o);
        }
    }
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        for (const auto& o : scene.occluders) {
            if (o.contains(truth.points[j].x, truth.points[j].y)) {
                truth.occluded[j] = true;
            }
        }
    }

    SynthSample s;
    s.image = render(truth, c.image_size, scene, scale, rng, c.pixel_noise);
    s.record.id = "synth-" + std::to_string(index);
    s.record.box = box;
    s.record.truth = truth;
    const FiducialFive exact = fiducials_from_ground_truth(truth);
    for (int attempt = 0;; ++attempt) {
        auto pts = exact.as_array();
        for (auto& p : pts) {
            p.x += c.fiducial_noise * gaussian(rng);
            p.y += c.fiducial_noise * gaussian(rng);
        }
        FiducialFive f = FiducialFive::from_array(pts);
        if (f.left_pupil.x < f.right_pupil.x || attempt > 20) {
            s.record.fiducials = f.left_pupil.x < f.right_pupil.x ? f : exact;
            break;
        }
    }
    return s;
}

} // namespace

GrayImage render_face(const AnnotatedShape& shape, int size, std::mt19937_64& rng, double pixel_noise)
{
    static const std::vector<Landmark> model2d = frontal_model_2d();
    Scene scene = random_scene(rng, 0.0);
    scene.model_to_image = fit_affine(model2d, shape.points);
    const auto [l, r] = eye_centers(shape);
    return render(shape, size, scene, std::max(std::hypot(l.x - r.x, l.y - r.y), 1.0), rng, pixel_noise);
}

std::vector<SynthSample> generate_synthetic(const SynthConfig& config)
{
    if (config.image_size < 16) {
        throw Error("synthetic: image size must be at least 16");
    }
    if (!(config.test_fraction >= 0.0 && config.test_fraction <= 1.0)) {
        throw Error("synthetic: test fraction must lie in [0, 1]");
    }
    std::mt19937_64 rng(config.seed);
    const auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction * static_cast<double>(config.count)));
    std::vector<SynthSample> out;
    out.reserve(config.count);
    for (std::size_t i = 0; i < config.count; ++i) {
        SynthSample s = make_sample(config, i, rng);
        s.record.split = i + n_test >= config.count ? Split::Test : Split::Train;
        out.push_back(std::move(s));
    }
    return out;
}

DatasetManifest write_synthetic_dataset(const SynthConfig& config, const std::filesystem::path& out_dir)
{
    const auto samples = generate_synthetic(config);
    std::filesystem::create_directories(out_dir / "images");
    DatasetManifest manifest;
    manifest.base_dir = out_dir;
    for (const auto& s : samples) {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.png", manifest.records.size());
        DatasetRecord rec = s.record;
        rec.image = std::filesystem::path("images") / name;
        save_image_png(s.image, out_dir / rec.image);
        manifest.records.push_back(std::move(rec));
    }
    save_manifest(manifest, out_dir / "manifest.jsonl");
    return manifest;
}

} // namespace ricpr
