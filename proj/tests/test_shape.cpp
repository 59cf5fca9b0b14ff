#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ricpr/shape.hpp"

using namespace ricpr;

namespace {

AnnotatedShape grid_shape()
{
    AnnotatedShape s;
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        s.points[j] = {10.0 + 3.0 * static_cast<double>(j % 6), 20.0 + 4.0 * static_cast<double>(j / 6)};
        s.occluded[j] = j % 3 == 0;
    }
    return s;
}

} // namespace

TEST(NormalizeToBox, IdentityBoxesLeaveShapeUnchanged)
{
    const FaceBox box{5, 7, 40, 30};
    const auto s = grid_shape();
    EXPECT_EQ(normalize_to_box(s, box, box), s);
}

TEST(NormalizeToBox, DoublingTheBoxDoublesOffsetsFromTheOrigin)
{
    const FaceBox a{10, 20, 100, 50};
    const FaceBox b{10, 20, 200, 100};
    const auto s = grid_shape();
    const auto r = normalize_to_box(s, a, b);
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        EXPECT_DOUBLE_EQ(r.points[j].x, 10 + 2 * (s.points[j].x - 10));
        EXPECT_DOUBLE_EQ(r.points[j].y, 20 + 2 * (s.points[j].y - 20));
    }
}

TEST(NormalizeToBox, CentreMapsToCentre)
{
    const FaceBox a{-3, 4, 12, 9};
    const FaceBox b{100, 50, 31, 17};
    const Landmark c = map_between_boxes(a.center(), a, b);
    EXPECT_NEAR(c.x, b.center().x, 1e-12);
    EXPECT_NEAR(c.y, b.center().y, 1e-12);
}

TEST(NormalizeToBox, RoundTripAndFlagsPreserved)
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(1, 300);
    for (int trial = 0; trial < 200; ++trial) {
        const FaceBox a{u(rng), u(rng), u(rng), u(rng)};
        const FaceBox b{u(rng), u(rng), u(rng), u(rng)};
        const auto s = oracle::random_shape(rng, -50, 400);
        const auto back = normalize_to_box(normalize_to_box(s, a, b), b, a);
        for (std::size_t j = 0; j < kNumLandmarks; ++j) {
            EXPECT_NEAR(back.points[j].x, s.points[j].x, 1e-9);
            EXPECT_NEAR(back.points[j].y, s.points[j].y, 1e-9);
        }
        EXPECT_EQ(back.occluded, s.occluded);
    }
}

TEST(NormalizeToBox, DegenerateBoxIsAnError)
{
    const auto s = grid_shape();
    EXPECT_THROW(normalize_to_box(s, FaceBox{0, 0, 0, 10}, FaceBox{0, 0, 1, 1}), Error);
    EXPECT_THROW(normalize_to_box(s, FaceBox{0, 0, 1, 1}, FaceBox{0, 0, 5, -1}), Error);
}

TEST(Fiducials, SingleIndexEyeGroupReturnsLandmarkVerbatim)
{
    const auto s = grid_shape();
    const auto f = fiducials_from_ground_truth(s);
    EXPECT_EQ(f.left_pupil, s.points[16]);
    EXPECT_EQ(f.right_pupil, s.points[17]);
    EXPECT_EQ(f.nose_tip, s.points[20]);
    EXPECT_EQ(f.mouth_left, s.points[22]);
    EXPECT_EQ(f.mouth_right, s.points[23]);
}

TEST(Fiducials, EyeGroupIsAveraged)
{
    AnnotatedShape s;
    s.points[0] = {0, 0};
    s.points[1] = {2, 0};
    LandmarkIndexMap m;
    m.left_eye = {0, 1};
    const auto f = fiducials_from_ground_truth(s, m);
    EXPECT_EQ(f.left_pupil, (Landmark{1, 0}));
}

TEST(Fiducials, FullShapeMatchesHandAveraging)
{
    const auto s = grid_shape();
    LandmarkIndexMap m;
    m.left_eye = {8, 10, 12, 14};
    m.right_eye = {9, 11, 13, 15};
    m.nose_tip = 20;
    m.mouth_left = 22;
    m.mouth_right = 23;
    const auto f = fiducials_from_ground_truth(s, m);
    // indices 8,10,12,14 sit at columns 2,4,0,2 of rows 1,1,2,2
    EXPECT_DOUBLE_EQ(f.left_pupil.x, (16.0 + 22.0 + 10.0 + 16.0) / 4.0);
    EXPECT_DOUBLE_EQ(f.left_pupil.y, (24.0 + 24.0 + 28.0 + 28.0) / 4.0);
    EXPECT_DOUBLE_EQ(f.right_pupil.x, (19.0 + 25.0 + 13.0 + 19.0) / 4.0);
    EXPECT_DOUBLE_EQ(f.right_pupil.y, 26.0);
    EXPECT_EQ(f.nose_tip, s.points[20]);
}

TEST(Fiducials, IndexOutOfRangeIsAnError)
{
    LandmarkIndexMap m;
    m.nose_tip = 29;
    EXPECT_THROW(fiducials_from_ground_truth(grid_shape(), m), Error);
    LandmarkIndexMap empty;
    empty.left_eye.clear();
    EXPECT_THROW(fiducials_from_ground_truth(grid_shape(), empty), Error);
}

TEST(Fiducials, ValidateRequiresOrderedPupils)
{
    FiducialFive f{{10, 0}, {5, 0}, {7, 5}, {5, 9}, {10, 9}};
    EXPECT_THROW(f.validate(), Error);
    std::swap(f.left_pupil, f.right_pupil);
    EXPECT_NO_THROW(f.validate());
}

TEST(AnnotatedShape, FromVectorsChecksArity)
{
    std::vector<Landmark> pts(28);
    std::array<bool, 28> flags{};
    EXPECT_THROW(AnnotatedShape::from_vectors(pts, flags), Error);
    std::vector<Landmark> ok(29);
    std::array<bool, 29> ok_flags{};
    ok_flags[3] = true;
    EXPECT_TRUE(AnnotatedShape::from_vectors(ok, ok_flags).occluded[3]);
}

TEST(Similarity, FitRecoversKnownTransform)
{
    std::mt19937_64 rng(11);
    const Similarity2D truth{1.3 * std::cos(0.4), 1.3 * std::sin(0.4), 5.0, -2.0};
    std::vector<Landmark> from, to;
    for (int i = 0; i < 7; ++i) {
        const Landmark p{std::uniform_real_distribution<double>(-5, 5)(rng), std::uniform_real_distribution<double>(-5, 5)(rng)};
        from.push_back(p);
        to.push_back(truth.apply(p));
    }
    const auto fit = fit_similarity(from, to);
    EXPECT_NEAR(fit.a, truth.a, 1e-12);
    EXPECT_NEAR(fit.b, truth.b, 1e-12);
    EXPECT_NEAR(fit.tx, truth.tx, 1e-12);
    EXPECT_NEAR(fit.ty, truth.ty, 1e-12);
    const auto inv = fit.inverse();
    const Landmark q = inv.apply(fit.apply({3, 4}));
    EXPECT_NEAR(q.x, 3, 1e-12);
    EXPECT_NEAR(q.y, 4, 1e-12);
}
