#include "ricpr/pose_init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

namespace ricpr {

namespace {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

Vec3 to_eigen(const Point3& p) { return {p.x, p.y, p.z}; }

Mat3 to_matrix(const std::array<double, 9>& m)
{
    Mat3 r;
    r << m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8];
    return r;
}

std::array<double, 9> from_matrix(const Mat3& r)
{
    return {r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0), r(2, 1), r(2, 2)};
}

Mat3 rodrigues(const Vec3& v)
{
    const double angle = v.norm();
    if (angle < 1e-15) {
        return Mat3::Identity();
    }
    return Eigen::AngleAxisd(angle, v / angle).toRotationMatrix();
}

Vec3 log_rotation(const Mat3& r)
{
    const Eigen::AngleAxisd aa(r);
    return aa.axis() * aa.angle();
}

// Control-point formulation of Lepetit, Moreno-Noguer and Fua.
class Epnp {
public:
    Epnp(std::span<const Point3> model, std::span<const Landmark> image, const CameraModel& camera)
        : n_(model.size()), camera_(camera)
    {
        world_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            world_[i] = to_eigen(model[i]);
        }
        image_.assign(image.begin(), image.end());
        choose_control_points();
        compute_barycentric();
    }

    struct Solution {
        Mat3 rotation;
        Vec3 translation;
        double error;
    };

    std::vector<Solution> solve() const
    {
        Eigen::MatrixXd m(2 * n_, 12);
        for (std::size_t i = 0; i < n_; ++i) {
            const double u = image_[i].x;
            const double v = image_[i].y;
            for (int j = 0; j < 4; ++j) {
                const double a = alphas_(static_cast<Eigen::Index>(i), j);
                m(2 * i, 3 * j) = a * camera_.focal;
                m(2 * i, 3 * j + 1) = 0.0;
                m(2 * i, 3 * j + 2) = a * (camera_.principal.x - u);
                m(2 * i + 1, 3 * j) = 0.0;
                m(2 * i + 1, 3 * j + 1) = a * camera_.focal;
                m(2 * i + 1, 3 * j + 2) = a * (camera_.principal.y - v);
            }
        }
        const Eigen::Matrix<double, 12, 12> mtm = m.transpose() * m;
        const Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> eig(mtm);
        // Eigenvalues ascend, so columns 0..3 span the (approximate) null space.
        Eigen::Matrix<double, 12, 4> null_space;
        for (int k = 0; k < 4; ++k) {
            null_space.col(k) = eig.eigenvectors().col(k);
        }

        Eigen::Matrix<double, 6, 10> l;
        Eigen::Matrix<double, 6, 1> rho;
        compute_l6x10(null_space, l);
        compute_rho(rho);

        std::vector<Solution> out;
        const std::array<Eigen::Vector4d, 3> starts{find_betas_1(l, rho), find_betas_2(l, rho), find_betas_3(l, rho)};
        for (Eigen::Vector4d betas : starts) {
            gauss_newton(l, rho, betas);
            out.push_back(compute_pose(null_space, betas));
        }
        return out;
    }

private:
    void choose_control_points()
    {
        Vec3 c0 = Vec3::Zero();
        for (const auto& p : world_) {
            c0 += p;
        }
        c0 /= static_cast<double>(n_);
        Eigen::MatrixXd centered(n_, 3);
        for (std::size_t i = 0; i < n_; ++i) {
            centered.row(static_cast<Eigen::Index>(i)) = (world_[i] - c0).transpose();
        }
        const Mat3 cov = centered.transpose() * centered;
        const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        controls_[0] = c0;
        for (int k = 0; k < 3; ++k) {
            const double lambda = std::max(eig.eigenvalues()(2 - k), 0.0);
            controls_[k + 1] = c0 + std::sqrt(lambda / static_cast<double>(n_)) * eig.eigenvectors().col(2 - k);
        }
        const double spread = std::sqrt(std::max(eig.eigenvalues()(2), 0.0));
        if (spread <= 0.0 || std::sqrt(std::max(eig.eigenvalues()(0), 0.0)) < 1e-6 * spread) {
            throw Error("estimate_pose: model points are coplanar or degenerate");
        }
    }

    void compute_barycentric()
    {
        Mat3 cc;
        for (int k = 0; k < 3; ++k) {
            cc.col(k) = controls_[k + 1] - controls_[0];
        }
        const Mat3 inv = cc.inverse();
        alphas_.resize(static_cast<Eigen::Index>(n_), 4);
        for (std::size_t i = 0; i < n_; ++i) {
            const Vec3 a = inv * (world_[i] - controls_[0]);
            const auto r = static_cast<Eigen::Index>(i);
            alphas_(r, 1) = a(0);
            alphas_(r, 2) = a(1);
            alphas_(r, 3) = a(2);
            alphas_(r, 0) = 1.0 - a(0) - a(1) - a(2);
        }
    }

    static constexpr std::array<std::array<int, 2>, 6> kPairs{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

    static void compute_l6x10(const Eigen::Matrix<double, 12, 4>& v, Eigen::Matrix<double, 6, 10>& l)
    {
        for (int row = 0; row < 6; ++row) {
            const auto [a, b] = kPairs[row];
            std::array<Vec3, 4> dv;
            for (int k = 0; k < 4; ++k) {
                dv[k] = v.block<3, 1>(3 * a, k) - v.block<3, 1>(3 * b, k);
            }
            l(row, 0) = dv[0].dot(dv[0]);
            l(row, 1) = 2.0 * dv[0].dot(dv[1]);
            l(row, 2) = dv[1].dot(dv[1]);
            l(row, 3) = 2.0 * dv[0].dot(dv[2]);
            l(row, 4) = 2.0 * dv[1].dot(dv[2]);
            l(row, 5) = dv[2].dot(dv[2]);
            l(row, 6) = 2.0 * dv[0].dot(dv[3]);
            l(row, 7) = 2.0 * dv[1].dot(dv[3]);
            l(row, 8) = 2.0 * dv[2].dot(dv[3]);
            l(row, 9) = dv[3].dot(dv[3]);
        }
    }

    void compute_rho(Eigen::Matrix<double, 6, 1>& rho) const
    {
        for (int row = 0; row < 6; ++row) {
            const auto [a, b] = kPairs[row];
            rho(row) = (controls_[a] - controls_[b]).squaredNorm();
        }
    }

    template <int Cols>
    static Eigen::Matrix<double, Cols, 1> least_squares(const Eigen::Matrix<double, 6, 10>& l,
                                                        const Eigen::Matrix<double, 6, 1>& rho,
                                                        const std::array<int, Cols>& cols)
    {
        Eigen::Matrix<double, 6, Cols> sub;
        for (int k = 0; k < Cols; ++k) {
            sub.col(k) = l.col(cols[k]);
        }
        return sub.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(rho);
    }

    // betas_approx_1 = [B11 B12 B13 B14]
    static Eigen::Vector4d find_betas_1(const Eigen::Matrix<double, 6, 10>& l, const Eigen::Matrix<double, 6, 1>& rho)
    {
        const Eigen::Vector4d b4 = least_squares<4>(l, rho, {0, 1, 3, 6});
        Eigen::Vector4d betas;
        if (b4(0) < 0.0) {
            betas(0) = std::sqrt(-b4(0));
            betas(1) = -b4(1) / betas(0);
            betas(2) = -b4(2) / betas(0);
            betas(3) = -b4(3) / betas(0);
        } else {
            betas(0) = std::sqrt(b4(0));
            betas(1) = b4(1) / betas(0);
            betas(2) = b4(2) / betas(0);
            betas(3) = b4(3) / betas(0);
        }
        return sanitize(betas);
    }

    // betas_approx_2 = [B11 B12 B22]
    static Eigen::Vector4d find_betas_2(const Eigen::Matrix<double, 6, 10>& l, const Eigen::Matrix<double, 6, 1>& rho)
    {
        const Eigen::Vector3d b3 = least_squares<3>(l, rho, {0, 1, 2});
        Eigen::Vector4d betas = Eigen::Vector4d::Zero();
        if (b3(0) < 0.0) {
            betas(0) = std::sqrt(-b3(0));
            betas(1) = b3(2) < 0.0 ? std::sqrt(-b3(2)) : 0.0;
        } else {
            betas(0) = std::sqrt(b3(0));
            betas(1) = b3(2) > 0.0 ? std::sqrt(b3(2)) : 0.0;
        }
        if (b3(1) < 0.0) {
            betas(0) = -betas(0);
        }
        return sanitize(betas);
    }

    // betas_approx_3 = [B11 B12 B22 B13 B23]
    static Eigen::Vector4d find_betas_3(const Eigen::Matrix<double, 6, 10>& l, const Eigen::Matrix<double, 6, 1>& rho)
    {
        const Eigen::Matrix<double, 5, 1> b5 = least_squares<5>(l, rho, {0, 1, 2, 3, 4});
        Eigen::Vector4d betas = Eigen::Vector4d::Zero();
        if (b5(0) < 0.0) {
            betas(0) = std::sqrt(-b5(0));
            betas(1) = b5(2) < 0.0 ? std::sqrt(-b5(2)) : 0.0;
        } else {
            betas(0) = std::sqrt(b5(0));
            betas(1) = b5(2) > 0.0 ? std::sqrt(b5(2)) : 0.0;
        }
        if (b5(1) < 0.0) {
            betas(0) = -betas(0);
        }
        betas(2) = betas(0) != 0.0 ? b5(3) / betas(0) : 0.0;
        return sanitize(betas);
    }

    static Eigen::Vector4d sanitize(Eigen::Vector4d betas)
    {
        for (int k = 0; k < 4; ++k) {
            if (!std::isfinite(betas(k))) {
                betas(k) = 0.0;
            }
        }
        return betas;
    }

    static void gauss_newton(const Eigen::Matrix<double, 6, 10>& l, const Eigen::Matrix<double, 6, 1>& rho,
                             Eigen::Vector4d& betas)
    {
        for (int iter = 0; iter < 10; ++iter) {
            Eigen::Matrix<double, 6, 4> a;
            Eigen::Matrix<double, 6, 1> b;
            for (int i = 0; i < 6; ++i) {
                const auto r = l.row(i);
                a(i, 0) = 2 * r(0) * betas(0) + r(1) * betas(1) + r(3) * betas(2) + r(6) * betas(3);
                a(i, 1) = r(1) * betas(0) + 2 * r(2) * betas(1) + r(4) * betas(2) + r(7) * betas(3);
                a(i, 2) = r(3) * betas(0) + r(4) * betas(1) + 2 * r(5) * betas(2) + r(8) * betas(3);
                a(i, 3) = r(6) * betas(0) + r(7) * betas(1) + r(8) * betas(2) + 2 * r(9) * betas(3);
                b(i) = rho(i) - (r(0) * betas(0) * betas(0) + r(1) * betas(0) * betas(1) + r(2) * betas(1) * betas(1) +
                                 r(3) * betas(0) * betas(2) + r(4) * betas(1) * betas(2) + r(5) * betas(2) * betas(2) +
                                 r(6) * betas(0) * betas(3) + r(7) * betas(1) * betas(3) + r(8) * betas(2) * betas(3) +
                                 r(9) * betas(3) * betas(3));
            }
            const Eigen::Vector4d dx = a.colPivHouseholderQr().solve(b);
            if (!dx.allFinite()) {
                break;
            }
            betas += dx;
        }
    }

    Solution compute_pose(const Eigen::Matrix<double, 12, 4>& v, const Eigen::Vector4d& betas) const
    {
        Eigen::Matrix<double, 12, 1> ccs = v * betas;
        std::vector<Vec3> pcs(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            Vec3 p = Vec3::Zero();
            for (int j = 0; j < 4; ++j) {
                p += alphas_(static_cast<Eigen::Index>(i), j) * ccs.segment<3>(3 * j);
            }
            pcs[i] = p;
        }
        if (pcs[0].z() < 0.0) {
            for (auto& p : pcs) {
                p = -p;
            }
        }
        // Absolute orientation between world points and recovered camera-frame points.
        Vec3 cw = Vec3::Zero();
        Vec3 cc = Vec3::Zero();
        for (std::size_t i = 0; i < n_; ++i) {
            cw += world_[i];
            cc += pcs[i];
        }
        cw /= static_cast<double>(n_);
        cc /= static_cast<double>(n_);
        Mat3 abt = Mat3::Zero();
        for (std::size_t i = 0; i < n_; ++i) {
            abt += (pcs[i] - cc) * (world_[i] - cw).transpose();
        }
        const Eigen::JacobiSVD<Mat3> svd(abt, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat3 r = svd.matrixU() * svd.matrixV().transpose();
        if (r.determinant() < 0.0) {
            Mat3 d = Mat3::Identity();
            d(2, 2) = -1.0;
            r = svd.matrixU() * d * svd.matrixV().transpose();
        }
        const Vec3 t = cc - r * cw;
        return {r, t, reprojection_rms(r, t)};
    }

public:
    double reprojection_rms(const Mat3& r, const Vec3& t) const
    {
        double sum = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            const Vec3 pc = r * world_[i] + t;
            if (pc.z() <= 0.0) {
                return std::numeric_limits<double>::infinity();
            }
            const double u = camera_.principal.x + camera_.focal * pc.x() / pc.z();
            const double v = camera_.principal.y + camera_.focal * pc.y() / pc.z();
            sum += (u - image_[i].x) * (u - image_[i].x) + (v - image_[i].y) * (v - image_[i].y);
        }
        return std::sqrt(sum / static_cast<double>(n_));
    }

    // Levenberg-Marquardt on (rotation vector, translation) against the pixel residuals.
    Solution refine(const Solution& start, int iterations) const
    {
        using Vec6 = Eigen::Matrix<double, 6, 1>;
        auto residuals = [&](const Vec6& x, Eigen::VectorXd& res) {
            const Mat3 r = rodrigues(x.head<3>());
            res.resize(static_cast<Eigen::Index>(2 * n_));
            for (std::size_t i = 0; i < n_; ++i) {
                const Vec3 pc = r * world_[i] + x.tail<3>();
                if (pc.z() <= 0.0) {
                    return false;
                }
                res(2 * i) = camera_.principal.x + camera_.focal * pc.x() / pc.z() - image_[i].x;
                res(2 * i + 1) = camera_.principal.y + camera_.focal * pc.y() / pc.z() - image_[i].y;
            }
            return true;
        };
        Vec6 x;
        x << log_rotation(start.rotation), start.translation;
        Eigen::VectorXd res;
        if (!residuals(x, res)) {
            return start;
        }
        double cost = res.squaredNorm();
        double lambda = 1e-3;
        Eigen::MatrixXd jac(static_cast<Eigen::Index>(2 * n_), 6);
        Eigen::VectorXd res_step;
        for (int iter = 0; iter < iterations; ++iter) {
            for (int k = 0; k < 6; ++k) {
                const double h = 1e-7 * std::max(1.0, std::abs(x(k)));
                Vec6 xp = x;
                Vec6 xm = x;
                xp(k) += h;
                xm(k) -= h;
                Eigen::VectorXd rp;
                Eigen::VectorXd rm;
                if (!residuals(xp, rp) || !residuals(xm, rm)) {
                    return from_params(x, cost);
                }
                jac.col(k) = (rp - rm) / (2.0 * h);
            }
            const Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
            const Vec6 jtr = jac.transpose() * res;
            bool improved = false;
            for (int attempt = 0; attempt < 8; ++attempt) {
                Eigen::Matrix<double, 6, 6> a = jtj;
                a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
                const Vec6 step = a.ldlt().solve(-jtr);
                const Vec6 candidate = x + step;
                if (step.allFinite() && residuals(candidate, res_step) && res_step.squaredNorm() < cost) {
                    const double gain = cost - res_step.squaredNorm();
                    x = candidate;
                    res = res_step;
                    cost = res.squaredNorm();
                    lambda = std::max(lambda * 0.3, 1e-12);
                    improved = gain > 1e-20 * std::max(cost, 1.0);
                    break;
                }
                lambda *= 10.0;
            }
            if (!improved) {
                break;
            }
        }
        return from_params(x, cost);
    }

private:
    Solution from_params(const Eigen::Matrix<double, 6, 1>& x, double cost) const
    {
        return {rodrigues(x.head<3>()), x.tail<3>(), std::sqrt(cost / static_cast<double>(n_))};
    }

    std::size_t n_;
    CameraModel camera_;
    std::vector<Vec3> world_;
    std::vector<Landmark> image_;
    std::array<Vec3, 4> controls_;
    Eigen::MatrixXd alphas_;
};

void check_image_configuration(std::span<const Landmark> image)
{
    const Landmark c = centroid(image);
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (const auto& p : image) {
        if (!is_finite(p)) {
            throw Error("estimate_pose: non-finite image point");
        }
        sxx += (p.x - c.x) * (p.x - c.x);
        sxy += (p.x - c.x) * (p.y - c.y);
        syy += (p.y - c.y) * (p.y - c.y);
    }
    const double tr = sxx + syy;
    const double det = sxx * syy - sxy * sxy;
    const double disc = std::sqrt(std::max(0.25 * tr * tr - det, 0.0));
    const double large = 0.5 * tr + disc;
    const double small = 0.5 * tr - disc;
    if (large <= 1e-12 || small <= 1e-6 * large) {
        throw Error("estimate_pose: image points are coincident or collinear");
    }
    for (std::size_t i = 0; i < image.size(); ++i) {
        for (std::size_t j = i + 1; j < image.size(); ++j) {
            if (std::hypot(image[i].x - image[j].x, image[i].y - image[j].y) < 1e-6 * std::sqrt(large)) {
                throw Error("estimate_pose: coincident image points");
            }
        }
    }
}

} // namespace

void MeanShape3D::validate() const
{
    if (points.size() != 5 && points.size() != kNumLandmarks) {
        throw Error("MeanShape3D: arity must be 5 or 29, got " + std::to_string(points.size()));
    }
    if (ids.size() != points.size()) {
        throw Error("MeanShape3D: id count does not match point count");
    }
    Point3 c;
    double extent = 0.0;
    for (const auto& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
            throw Error("MeanShape3D: non-finite coordinate");
        }
        c.x += p.x;
        c.y += p.y;
        c.z += p.z;
        extent = std::max({extent, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    }
    const double n = static_cast<double>(points.size());
    if (std::abs(c.x / n) > 1e-9 * std::max(1.0, extent) || std::abs(c.y / n) > 1e-9 * std::max(1.0, extent) ||
        std::abs(c.z / n) > 1e-9 * std::max(1.0, extent)) {
        throw Error("MeanShape3D: centroid is not at the origin");
    }
}

MeanShape3D MeanShape3D::centered(std::vector<Point3> pts)
{
    Point3 c;
    for (const auto& p : pts) {
        c.x += p.x;
        c.y += p.y;
        c.z += p.z;
    }
    const double n = static_cast<double>(pts.size());
    MeanShape3D s;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        s.ids.push_back(static_cast<int>(i));
        s.points.push_back({pts[i].x - c.x / n, pts[i].y - c.y / n, pts[i].z - c.z / n});
    }
    return s;
}

MeanShape3D default_mean_shape29()
{
    // Inter-pupil distance 1; proportions follow a generic adult head model.
    static const std::vector<Point3> raw{
        {-0.80, -0.38, 0.10},  {0.80, -0.38, 0.10},   {-0.22, -0.40, -0.12}, {0.22, -0.40, -0.12},
        {-0.52, -0.50, -0.05}, {0.52, -0.50, -0.05},  {-0.50, -0.36, -0.04}, {0.50, -0.36, -0.04},
        {-0.78, 0.02, 0.12},   {0.78, 0.02, 0.12},    {-0.24, 0.02, 0.02},   {0.24, 0.02, 0.02},
        {-0.50, -0.09, -0.02}, {0.50, -0.09, -0.02},  {-0.50, 0.09, 0.00},   {0.50, 0.09, 0.00},
        {-0.50, 0.00, -0.03},  {0.50, 0.00, -0.03},   {-0.20, 0.55, -0.22},  {0.20, 0.55, -0.22},
        {0.00, 0.52, -0.48},   {0.00, 0.66, -0.30},   {-0.42, 1.00, -0.10},  {0.42, 1.00, -0.10},
        {0.00, 0.88, -0.26},   {0.00, 0.98, -0.22},   {0.00, 1.02, -0.22},   {0.00, 1.14, -0.22},
        {0.00, 1.50, -0.12},
    };
    return MeanShape3D::centered(raw);
}

namespace {

std::vector<Point3> fiducial_points(const MeanShape3D& mean29, const LandmarkIndexMap& index_map)
{
    auto mean_of = [&](const std::vector<std::size_t>& group) {
        Point3 m;
        for (auto i : group) {
            m.x += mean29.points[i].x;
            m.y += mean29.points[i].y;
            m.z += mean29.points[i].z;
        }
        const double n = static_cast<double>(group.size());
        return Point3{m.x / n, m.y / n, m.z / n};
    };
    return {mean_of(index_map.left_eye), mean_of(index_map.right_eye), mean29.points[index_map.nose_tip],
            mean29.points[index_map.mouth_left], mean29.points[index_map.mouth_right]};
}

Point3 fiducial_centroid(const MeanShape3D& mean29, const LandmarkIndexMap& index_map)
{
    Point3 c;
    for (const auto& p : fiducial_points(mean29, index_map)) {
        c.x += p.x / kNumFiducials;
        c.y += p.y / kNumFiducials;
        c.z += p.z / kNumFiducials;
    }
    return c;
}

} // namespace

MeanShape3D fiducial_subset(const MeanShape3D& mean29, const LandmarkIndexMap& index_map)
{
    if (mean29.arity() != kNumLandmarks) {
        throw Error("fiducial_subset: expected a 29-point mean shape");
    }
    index_map.validate();
    return MeanShape3D::centered(fiducial_points(mean29, index_map));
}

CameraModel CameraModel::from_box(const FaceBox& box)
{
    if (!box.valid()) {
        throw Error("CameraModel: invalid face box");
    }
    return {box.width, box.center()};
}

std::array<double, 9> rotation_matrix(const std::array<double, 3>& v) { return from_matrix(rodrigues({v[0], v[1], v[2]})); }

std::array<double, 3> rotation_vector(const std::array<double, 9>& m)
{
    const Vec3 v = log_rotation(to_matrix(m));
    return {v(0), v(1), v(2)};
}

double rotation_angle_between(const std::array<double, 3>& a, const std::array<double, 3>& b)
{
    const Mat3 ra = rodrigues({a[0], a[1], a[2]});
    const Mat3 rb = rodrigues({b[0], b[1], b[2]});
    const Mat3 rel = ra.transpose() * rb;
    const double c = std::clamp(0.5 * (rel.trace() - 1.0), -1.0, 1.0);
    // acos loses precision near zero; use the skew part there.
    const Vec3 s{rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1)};
    return std::atan2(0.5 * s.norm(), c);
}

FacePose solve_pnp(std::span<const Point3> model, std::span<const Landmark> image, const CameraModel& camera,
                   const PnpOptions& options)
{
    if (model.size() != image.size() || model.size() < 4) {
        throw Error("estimate_pose: need at least 4 matched correspondences");
    }
    if (!(camera.focal > 0.0)) {
        throw Error("estimate_pose: focal length must be positive");
    }
    check_image_configuration(image);
    const Epnp epnp(model, image, camera);
    const auto candidates = epnp.solve();
    bool have = false;
    Epnp::Solution best{};
    for (const auto& c : candidates) {
        if (!c.rotation.allFinite() || !c.translation.allFinite()) {
            continue;
        }
        const auto refined = epnp.refine(c, options.refine_iterations);
        if (!have || refined.error < best.error) {
            best = refined;
            have = true;
        }
    }
    if (!have || !std::isfinite(best.error)) {
        throw Error("estimate_pose: no valid PnP solution (points behind camera or degenerate)");
    }
    FacePose pose;
    const Vec3 v = log_rotation(best.rotation);
    pose.rotation = {v(0), v(1), v(2)};
    pose.translation = {best.translation(0), best.translation(1), best.translation(2)};
    pose.camera = camera;
    pose.reprojection_rms = best.error;
    pose.residual_warning = best.error > options.residual_warn_ratio * camera.focal;
    return pose;
}

FacePose estimate_pose(const MeanShape3D& mean5, const FiducialFive& fiducials, const CameraModel& camera,
                       const PnpOptions& options)
{
    if (mean5.arity() != kNumFiducials) {
        throw Error("estimate_pose: expected a 5-point mean shape");
    }
    fiducials.validate();
    const auto image = fiducials.as_array();
    return solve_pnp(mean5.points, image, camera, options);
}

std::vector<Landmark> project_points(std::span<const Point3> points, const FacePose& pose)
{
    const Mat3 r = rodrigues({pose.rotation[0], pose.rotation[1], pose.rotation[2]});
    const Vec3 t{pose.translation[0], pose.translation[1], pose.translation[2]};
    std::vector<Landmark> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        const Vec3 pc = r * to_eigen(p) + t;
        if (!(pc.z() > 0.0)) {
            throw Error("project_shape: point projects behind the camera");
        }
        out.push_back({pose.camera.principal.x + pose.camera.focal * pc.x() / pc.z(),
                       pose.camera.principal.y + pose.camera.focal * pc.y() / pc.z()});
    }
    return out;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double gaussian(std::mt19937_64& rng)
{
    const double u1 = std::max(uniform01(rng), 1e-300);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n)
{
    return std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)), n - 1);
}

ProjectedShape project_shape(const MeanShape3D& mean29, const FacePose& pose, const FaceBox& box,
                             const FiducialFive& fiducials, std::mt19937_64& rng, const ProjectionOptions& options)
{
    if (mean29.arity() != kNumLandmarks) {
        throw Error("project_shape: expected a 29-point mean shape");
    }
    options.index_map.validate();
    if (!box.valid()) {
        throw Error("project_shape: invalid face box");
    }
    // The pose was estimated for the centered fiducial subset, so project in that frame.
    const Point3 offset = fiducial_centroid(mean29, options.index_map);
    std::vector<Point3> shifted(mean29.points);
    for (auto& p : shifted) {
        p = {p.x - offset.x, p.y - offset.y, p.z - offset.z};
    }
    const auto projected = project_points(shifted, pose);
    AnnotatedShape raw;
    std::copy(projected.begin(), projected.end(), raw.points.begin());
    const auto source = fiducials_from_ground_truth(raw, options.index_map).as_array();
    const auto target = fiducials.as_array();
    const Similarity2D align = fit_similarity(source, target);

    ProjectedShape out;
    double sq = 0.0;
    for (std::size_t i = 0; i < kNumFiducials; ++i) {
        const Landmark q = align.apply(source[i]);
        sq += (q.x - target[i].x) * (q.x - target[i].x) + (q.y - target[i].y) * (q.y - target[i].y);
    }
    out.alignment_rms = std::sqrt(sq / kNumFiducials);

    const FaceBox limit = box.scaled(options.box_margin);
    for (std::size_t i = 0; i < kNumLandmarks; ++i) {
        const Landmark q = align.apply(raw.points[i]);
        out.shape.points[i] = {std::clamp(q.x, limit.x, limit.x + limit.width),
                               std::clamp(q.y, limit.y, limit.y + limit.height)};
        out.shape.occluded[i] = uniform01(rng) < options.occlusion_rate;
    }
    return out;
}

std::vector<MeanShape3D> frontal_variants(std::span<const AnnotatedShape> frontal_shapes, const MeanShape3D& mean29)
{
    if (mean29.arity() != kNumLandmarks) {
        throw Error("frontal_variants: expected a 29-point mean shape");
    }
    if (frontal_shapes.empty()) {
        return {mean29};
    }
    double mean_sq = 0.0;
    for (const auto& p : mean29.points) {
        mean_sq += p.x * p.x + p.y * p.y;
    }
    std::vector<MeanShape3D> out;
    out.reserve(frontal_shapes.size());
    for (const auto& s : frontal_shapes) {
        const Landmark c = centroid(s.points);
        double sq = 0.0;
        for (const auto& p : s.points) {
            sq += (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y);
        }
        if (!(sq > 0.0)) {
            throw Error("frontal_variants: degenerate frontal shape");
        }
        const double scale = std::sqrt(mean_sq / sq);
        std::vector<Point3> pts(kNumLandmarks);
        for (std::size_t i = 0; i < kNumLandmarks; ++i) {
            pts[i] = {(s.points[i].x - c.x) * scale, (s.points[i].y - c.y) * scale, mean29.points[i].z};
        }
        MeanShape3D v = MeanShape3D::centered(std::move(pts));
        v.ids = mean29.ids;
        out.push_back(std::move(v));
    }
    return out;
}

PoseInitResult pose_init_shapes(const FaceBox& box, const FiducialFive& fiducials, const MeanShape3D& mean5,
                                std::span<const MeanShape3D> variants, std::size_t count, std::uint64_t seed,
                                const ProjectionOptions& options)
{
    if (count > variants.size()) {
        throw Error("pose_init_shapes: requested " + std::to_string(count) + " shapes from " +
                    std::to_string(variants.size()) + " variants");
    }
    PoseInitResult result;
    result.pose = estimate_pose(mean5, fiducials, CameraModel::from_box(box));
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < count; ++k) {
        result.shapes.push_back(project_shape(variants[k], result.pose, box, fiducials, rng, options));
    }
    return result;
}

} // namespace ricpr
