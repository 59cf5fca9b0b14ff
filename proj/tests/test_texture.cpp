#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ricpr/dataset_io.hpp"
#include "ricpr/gallery.hpp"
#include "ricpr/texture_init.hpp"

using namespace ricpr;

namespace {

FloatImage float_patch(int w, int h, std::vector<double> v) { return FloatImage{w, h, std::move(v)}; }

GrayImage random_gray(std::mt19937_64& rng, int w, int h)
{
    GrayImage g(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            g.at(x, y) = static_cast<std::uint8_t>(rng() & 0xFF);
        }
    }
    return g;
}

oracle::Raster raster_of(const GrayImage& g)
{
    oracle::Raster r{g.width(), g.height(), {}};
    r.v.assign(g.pixels().begin(), g.pixels().end());
    return r;
}

HistogramMatrix matrix_of(int rows, int cols, const std::vector<std::uint32_t>& v) { return {rows, cols, v}; }

} // namespace

TEST(Lbp, UniformEightPointOperatorHas59Labels)
{
    const LbpConfig c;
    EXPECT_EQ(c.label_count(), 59);
    EXPECT_EQ(LbpMapping(c).label_count(), 59);
    EXPECT_EQ(oracle::uniform_label_count(8), 59);
    for (std::uint32_t p = 0; p < 256; ++p) {
        EXPECT_EQ(LbpMapping(c).label(p), oracle::uniform_label(p, 8)) << p;
    }
}

TEST(Lbp, ConstantPatchGivesAllOnesPattern)
{
    const auto img = float_patch(3, 3, std::vector<double>(9, 77.0));
    EXPECT_EQ(lbp_pattern(img, 1, 1, LbpConfig{}), 0xFFU);
    EXPECT_EQ(lbp_label(img, 1, 1, LbpConfig{}), oracle::uniform_label(0xFF, 8));
}

TEST(Lbp, BrightCentreGivesZeroPattern)
{
    std::vector<double> v(9, 10.0);
    v[4] = 200.0;
    const auto img = float_patch(3, 3, v);
    EXPECT_EQ(lbp_pattern(img, 1, 1, LbpConfig{}), 0U);
    EXPECT_EQ(lbp_label(img, 1, 1, LbpConfig{}), 0);
}

TEST(Lbp, AlternatingPatternFallsInMiscellaneousBin)
{
    // Axis neighbours 200, corners 0, centre 100: interpolated diagonals come out near 91.
    GrayImage g(3, 3);
    const std::uint8_t vals[9] = {0, 200, 0, 200, 100, 200, 0, 200, 0};
    for (int i = 0; i < 9; ++i) {
        g.at(i % 3, i / 3) = vals[i];
    }
    const LbpConfig c;
    EXPECT_EQ(oracle::transitions(0x55, 8), 8);
    EXPECT_EQ(lbp_label(g, 1, 1, c), LbpMapping(c).miscellaneous_label());
    EXPECT_EQ(lbp_label(g, 1, 1, c), 58);
}

TEST(Lbp, CentreTooCloseToEdgeIsAnError)
{
    const auto img = float_patch(3, 3, std::vector<double>(9, 1.0));
    EXPECT_THROW(lbp_label(img, 0, 1, LbpConfig{}), Error);
    LbpConfig bad;
    bad.points = 3;
    EXPECT_THROW(bad.validate(), Error);
    bad.points = 8;
    bad.radius = 0.0;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(HistogramMatrix, UniformGrayCropConcentratesInAllOnesBin)
{
    const GrayImage g(64, 64, 128);
    const LbpConfig c;
    const auto h = histogram_matrix(g, FaceBox{8, 8, 40, 40}, c);
    ASSERT_EQ(h.rows(), 64);
    ASSERT_EQ(h.cols(), 59);
    const int ones = oracle::uniform_label(0xFF, 8);
    for (int i = 0; i < h.rows(); ++i) {
        EXPECT_EQ(h.at(i, ones), 16U * 16U);
        EXPECT_EQ(h.row_sum(i), 256U);
    }
}

TEST(HistogramMatrix, RowsSumToBlockPixelCount)
{
    std::mt19937_64 rng(3);
    const auto g = random_gray(rng, 90, 70);
    const auto h = histogram_matrix(g, FaceBox{5.5, 3.25, 61.0, 57.5}, LbpConfig{});
    for (int i = 0; i < h.rows(); ++i) {
        EXPECT_EQ(h.row_sum(i), 256U);
    }
    EXPECT_EQ(h.total(), 128U * 128U);
}

TEST(HistogramMatrix, FourRegionImageMatchesPerPixelOracle)
{
    GrayImage g(32, 32);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            const int region = (y >= 16 ? 2 : 0) + (x >= 16 ? 1 : 0);
            const int base[4] = {40, 90, 160, 220};
            g.at(x, y) = static_cast<std::uint8_t>(base[region] + ((x * 7 + y * 13) % 5) * (region % 2 == 0 ? 3 : 0));
        }
    }
    for (int points : {4, 8}) {
        LbpConfig c;
        c.points = points;
        c.blocks_per_side = 2;
        c.analysis_size = 32;
        const auto h = histogram_matrix(g, FaceBox{0, 0, 32, 32}, c);
        const auto expected = oracle::block_histograms(raster_of(g), 2, points, 1.0, analysis_margin(c));
        ASSERT_EQ(h.rows(), 4);
        ASSERT_EQ(h.cols(), static_cast<int>(expected[0].size()));
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < h.cols(); ++j) {
                EXPECT_EQ(h.at(i, j), expected[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
                    << "P=" << points << " block " << i << " label " << j;
            }
        }
    }
}

TEST(HistogramMatrix, BoxOutsideOrTooSmallIsAnError)
{
    const GrayImage g(50, 50, 9);
    EXPECT_THROW(histogram_matrix(g, FaceBox{60, 60, 20, 20}, LbpConfig{}), Error);
    EXPECT_THROW(histogram_matrix(g, FaceBox{10, 10, 4, 4}, LbpConfig{}), Error);
    EXPECT_NO_THROW(histogram_matrix(g, FaceBox{30, 30, 40, 40}, LbpConfig{}));
}

TEST(Pearson, IdenticalMatricesHaveZeroDistance)
{
    const auto a = matrix_of(2, 3, {1, 5, 2, 8, 3, 4});
    EXPECT_NEAR(pearson_distance(a, a), 0.0, 1e-12);
}

TEST(Pearson, PerfectAntiCorrelationGivesTwo)
{
    // b = -a + 2 mean(a), mean(a) = 4
    const auto a = matrix_of(2, 3, {1, 5, 2, 8, 3, 5});
    const auto b = matrix_of(2, 3, {7, 3, 6, 0, 5, 3});
    EXPECT_NEAR(pearson_distance(a, b), 2.0, 1e-12);
}

TEST(Pearson, HandComputedTwoByThree)
{
    // deviations from 3.5: a = (-2.5,-1.5,-0.5,0.5,1.5,2.5), b = (-1.5,-2.5,0.5,-0.5,2.5,1.5)
    // sum ab = 14.5, sum a^2 = sum b^2 = 17.5 -> rho = 14.5 / 17.5, d = 3 / 17.5
    const auto a = matrix_of(2, 3, {1, 2, 3, 4, 5, 6});
    const auto b = matrix_of(2, 3, {2, 1, 4, 3, 6, 5});
    EXPECT_NEAR(pearson_distance(a, b), 3.0 / 17.5, 1e-12);
}

TEST(Pearson, ErrorsOnMismatchAndZeroVariance)
{
    EXPECT_THROW(pearson_distance(matrix_of(2, 3, {1, 2, 3, 4, 5, 6}), matrix_of(3, 2, {1, 2, 3, 4, 5, 6})), Error);
    EXPECT_THROW(pearson_distance(matrix_of(1, 3, {2, 2, 2}), matrix_of(1, 3, {1, 2, 3})), Error);
}

TEST(Pearson, MatchesOracleOnRandomMatrices)
{
    std::mt19937_64 rng(8);
    for (int t = 0; t < 100; ++t) {
        std::vector<std::uint32_t> a(64 * 59), b(64 * 59);
        std::vector<double> da, db;
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = static_cast<std::uint32_t>(rng() % 300);
            b[i] = static_cast<std::uint32_t>(rng() % 300);
            da.push_back(a[i]);
            db.push_back(b[i]);
        }
        EXPECT_NEAR(pearson_distance(matrix_of(64, 59, a), matrix_of(64, 59, b)), oracle::pearson_distance(da, db), 1e-12);
    }
}

namespace {

Gallery random_gallery(std::mt19937_64& rng, int n)
{
    Gallery g;
    for (int i = 0; i < n; ++i) {
        GalleryEntry e;
        e.source_index = static_cast<std::size_t>(10 + i);
        std::vector<std::uint32_t> v(2 * 5);
        for (auto& x : v) {
            x = static_cast<std::uint32_t>(rng() % 50);
        }
        v[0] = 100;
        e.histogram = HistogramMatrix(2, 5, v);
        e.box = FaceBox{0, 0, 100, 100};
        e.shape = oracle::random_shape(rng, 0, 100);
        g.entries.push_back(e);
    }
    return g;
}

} // namespace

TEST(SelectTextureInit, GalleryMemberSelectsItselfFirst)
{
    std::mt19937_64 rng(1);
    const auto g = random_gallery(rng, 10);
    const auto c = select_texture_init(g.entries[6].histogram, g, 3);
    ASSERT_EQ(c.size(), 3U);
    EXPECT_EQ(c[0].source_index, 16U);
    EXPECT_NEAR(c[0].distance, 0.0, 1e-12);
    // Shapes come back in the unit frame of the training box.
    EXPECT_DOUBLE_EQ(c[0].shape.points[0].x, g.entries[6].shape.points[0].x / 100.0);
    EXPECT_EQ(c[0].shape.occluded, g.entries[6].shape.occluded);
}

TEST(SelectTextureInit, FullCountReturnsEverythingSorted)
{
    std::mt19937_64 rng(2);
    const auto g = random_gallery(rng, 12);
    const auto c = select_texture_init(g.entries[0].histogram, g, 12);
    ASSERT_EQ(c.size(), 12U);
    for (std::size_t i = 1; i < c.size(); ++i) {
        EXPECT_LE(c[i - 1].distance, c[i].distance);
    }
}

TEST(SelectTextureInit, PlantedNearDuplicateRanksFirst)
{
    std::mt19937_64 rng(5);
    auto g = random_gallery(rng, 10);
    std::vector<std::uint32_t> q = g.entries[3].histogram.counts();
    q[4] += 1;
    q[7] += 2;
    const HistogramMatrix query(2, 5, q);
    // full distance table from the oracle
    std::vector<std::pair<double, std::size_t>> table;
    std::vector<double> dq(q.begin(), q.end());
    for (const auto& e : g.entries) {
        std::vector<double> de(e.histogram.counts().begin(), e.histogram.counts().end());
        table.emplace_back(oracle::pearson_distance(dq, de), e.source_index);
    }
    std::sort(table.begin(), table.end());
    const auto c = select_texture_init(query, g, 10);
    EXPECT_EQ(c[0].source_index, 13U);
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_EQ(c[i].source_index, table[i].second);
        EXPECT_NEAR(c[i].distance, table[i].first, 1e-12);
    }
}

TEST(SelectTextureInit, TiesBreakByLowerSourceIndex)
{
    std::mt19937_64 rng(6);
    auto g = random_gallery(rng, 4);
    g.entries[1].histogram = g.entries[0].histogram;
    g.entries[3].histogram = g.entries[0].histogram;
    std::swap(g.entries[0], g.entries[3]);
    const auto c = select_texture_init(g.entries[0].histogram, g, 3);
    EXPECT_EQ(c[0].source_index, 10U);
    EXPECT_EQ(c[1].source_index, 11U);
    EXPECT_EQ(c[2].source_index, 13U);
}

TEST(SelectTextureInit, EmptyGalleryAndExclusion)
{
    std::mt19937_64 rng(7);
    Gallery empty;
    EXPECT_THROW(select_texture_init(HistogramMatrix(2, 5), empty, 1), Error);
    const auto g = random_gallery(rng, 5);
    const auto c = select_texture_init(g.entries[2].histogram, g, 4, std::size_t{12});
    ASSERT_EQ(c.size(), 4U);
    for (const auto& x : c) {
        EXPECT_NE(x.source_index, 12U);
    }
    EXPECT_THROW(select_texture_init(g.entries[2].histogram, g, 5, std::size_t{12}), Error);
}

TEST(Gallery, BuildIsOrderedDeterministicAndMatchesDirectComputation)
{
    const auto dir = oracle::temp_dir("gallery");
    std::mt19937_64 rng(9);
    DatasetManifest m;
    m.base_dir = dir;
    for (int i = 0; i < 3; ++i) {
        const GrayImage img = random_gray(rng, 60, 50);
        const std::string name = "img" + std::to_string(i) + ".png";
        save_image_png(img, dir / name);
        DatasetRecord r;
        r.id = "r" + std::to_string(i);
        r.image = name;
        r.box = {5.0 + i, 4.0, 40.0, 38.0};
        r.truth = oracle::random_shape(rng, 5, 45);
        r.split = Split::Train;
        m.records.push_back(r);
    }
    const auto built = build_gallery(m, LbpConfig{}, 2);
    ASSERT_TRUE(built.errors.empty());
    ASSERT_EQ(built.gallery.entries.size(), 3U);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(built.gallery.entries[i].source_index, i);
        const GrayImage img = load_image_gray(dir / m.records[i].image);
        EXPECT_EQ(built.gallery.entries[i].histogram, histogram_matrix(img, m.records[i].box, LbpConfig{}));
    }
    save_gallery(built.gallery, dir / "a.bin");
    save_gallery(build_gallery(m, LbpConfig{}, 1).gallery, dir / "b.bin");
    EXPECT_EQ(read_text_file(dir / "a.bin"), read_text_file(dir / "b.bin"));
    const Gallery loaded = load_gallery(dir / "a.bin");
    ASSERT_EQ(loaded.entries.size(), 3U);
    EXPECT_EQ(loaded.entries[2].histogram, built.gallery.entries[2].histogram);
    EXPECT_EQ(loaded.entries[2].shape, built.gallery.entries[2].shape);
}

TEST(Gallery, UnreadableImageIsARecordLevelError)
{
    const auto dir = oracle::temp_dir("gallery_err");
    std::mt19937_64 rng(10);
    DatasetManifest m;
    m.base_dir = dir;
    for (int i = 0; i < 2; ++i) {
        DatasetRecord r;
        r.id = "r" + std::to_string(i);
        r.image = "img" + std::to_string(i) + ".png";
        r.box = {2, 2, 30, 30};
        r.truth = oracle::random_shape(rng, 2, 30);
        m.records.push_back(r);
    }
    save_image_png(random_gray(rng, 40, 40), dir / "img1.png");
    const auto built = build_gallery(m);
    ASSERT_EQ(built.errors.size(), 1U);
    EXPECT_EQ(built.errors[0].id, "r0");
    ASSERT_EQ(built.gallery.entries.size(), 1U);
    EXPECT_EQ(built.gallery.entries[0].source_index, 1U);
}

TEST(Gallery, CorruptFilesAreRejected)
{
    Gallery g;
    g.entries.push_back({0, HistogramMatrix(1, 2, {1, 2}), AnnotatedShape{}, FaceBox{0, 0, 1, 1}});
    auto bytes = serialize_gallery(g);
    EXPECT_NO_THROW(deserialize_gallery(bytes));
    auto wrong_version = bytes;
    wrong_version[8] = 2;
    EXPECT_THROW(deserialize_gallery(wrong_version), Error);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 6);
    EXPECT_THROW(deserialize_gallery(truncated), Error);
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(deserialize_gallery(trailing), Error);
}
