#include <gtest/gtest.h>

#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "oracles.hpp"
#include "ricpr/dataset_io.hpp"
#include "ricpr/pose_init.hpp"

using namespace ricpr;

namespace {

std::string landmarks_json(std::size_t n, double base)
{
    std::string s = "[";
    for (std::size_t j = 0; j < n; ++j) {
        s += (j ? "," : "") + std::string("[") + std::to_string(base + j) + "," + std::to_string(base + 2 * j) + "]";
    }
    return s + "]";
}

std::string flags_json(std::size_t n)
{
    std::string s = "[";
    for (std::size_t j = 0; j < n; ++j) {
        s += (j ? "," : "") + std::string(j % 3 == 0 ? "true" : "false");
    }
    return s + "]";
}

ResultRecord sample_result(std::mt19937_64& rng, const std::string& id)
{
    ResultRecord r;
    r.id = id;
    r.shape = oracle::random_shape(rng, 0, 300);
    for (auto& s : r.occlusion_scores) {
        s = std::uniform_real_distribution<double>(0, 1)(rng);
    }
    r.fusion.branch = FusionBranch::Texture;
    r.fusion.variance = 0.123;
    r.fusion.texture_variance = 0.01;
    r.fusion.pose_variance = 0.3;
    r.fusion.dropped = {1, 3};
    r.fusion.warnings = {"fiducials derived from ground truth"};
    return r;
}

} // namespace

TEST(Manifest, EmptyTextHasNoRecords)
{
    EXPECT_TRUE(parse_manifest("").records.empty());
    EXPECT_TRUE(parse_manifest("\n  \n").records.empty());
}

TEST(Manifest, ParsesTwoRows)
{
    const std::string text =
        R"({"image":"a.png","box":[1,2,30,40],"landmarks":)" + landmarks_json(29, 5) + R"(,"occluded":)" +
        flags_json(29) + R"(,"split":"train"})" + "\n" +
        R"({"id":"face-b","image":"/abs/b.jpg","box":[0,0,10,10],"split":"test","fiducials":[[1,1],[5,1],[3,3],[2,5],[4,5]]})" +
        "\n";
    const auto m = parse_manifest(text, "/data");
    ASSERT_EQ(m.records.size(), 2U);
    const auto& a = m.records[0];
    EXPECT_EQ(a.id, "0");
    EXPECT_EQ(a.box, (FaceBox{1, 2, 30, 40}));
    ASSERT_TRUE(a.truth.has_value());
    EXPECT_EQ(a.truth->points[28], (Landmark{33, 61}));
    EXPECT_TRUE(a.truth->occluded[3]);
    EXPECT_FALSE(a.truth->occluded[4]);
    EXPECT_EQ(a.split, Split::Train);
    EXPECT_EQ(a.line, 1U);
    EXPECT_EQ(m.resolve(a), std::filesystem::path("/data/a.png"));
    const auto& b = m.records[1];
    EXPECT_EQ(b.id, "face-b");
    EXPECT_FALSE(b.truth.has_value());
    ASSERT_TRUE(b.fiducials.has_value());
    EXPECT_EQ(b.fiducials->nose_tip, (Landmark{3, 3}));
    EXPECT_EQ(m.resolve(b), std::filesystem::path("/abs/b.jpg"));
    EXPECT_EQ(m.indices(Split::Test), std::vector<std::size_t>{1});

    // Formatting and re-parsing preserves every field.
    const auto again = parse_manifest(format_manifest(m), "/data");
    ASSERT_EQ(again.records.size(), 2U);
    EXPECT_EQ(again.records[0].truth, a.truth);
    EXPECT_EQ(again.records[1].fiducials, b.fiducials);
    EXPECT_EQ(again.records[1].id, "face-b");
}

TEST(Manifest, WrongLandmarkCountNamesLineAndField)
{
    const std::string good = R"({"image":"a.png","box":[1,2,30,40],"split":"train"})";
    const std::string bad = R"({"image":"b.png","box":[1,2,30,40],"landmarks":)" + landmarks_json(28, 0) +
                            R"(,"occluded":)" + flags_json(28) + R"(,"split":"train"})";
    try {
        parse_manifest(good + "\n" + bad + "\n");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("landmarks"), std::string::npos) << msg;
        EXPECT_NE(msg.find("28"), std::string::npos) << msg;
    }
}

TEST(Manifest, RejectsMalformedRows)
{
    EXPECT_THROW(parse_manifest("{not json"), Error);
    EXPECT_THROW(parse_manifest(R"({"box":[1,2,3,4],"split":"train"})"), Error);
    EXPECT_THROW(parse_manifest(R"({"image":"a","box":[1,2,3],"split":"train"})"), Error);
    EXPECT_THROW(parse_manifest(R"({"image":"a","box":[1,2,3,4],"split":"validation"})"), Error);
    EXPECT_THROW(parse_manifest(R"({"image":"a","box":[1,2,3,4],"split":"train","landmarks":)" + landmarks_json(29, 0) +
                                "}"),
                 Error);
    EXPECT_THROW(load_manifest("/nonexistent/manifest.jsonl"), Error);
}

TEST(Images, WhiteAndRedPngDecodeToLuma)
{
    const auto dir = oracle::temp_dir("images");
    cv::imwrite((dir / "white.png").string(), cv::Mat(6, 5, CV_8UC3, cv::Scalar(255, 255, 255)));
    cv::imwrite((dir / "red.png").string(), cv::Mat(6, 5, CV_8UC3, cv::Scalar(0, 0, 255)));
    cv::imwrite((dir / "red.jpg").string(), cv::Mat(16, 16, CV_8UC3, cv::Scalar(0, 0, 255)));
    const auto white = load_image_gray(dir / "white.png");
    EXPECT_EQ(white.width(), 5);
    EXPECT_EQ(white.height(), 6);
    for (auto p : white.pixels()) {
        EXPECT_EQ(p, 255);
    }
    const auto red = load_image_gray(dir / "red.png");
    for (auto p : red.pixels()) {
        EXPECT_EQ(p, 76);
    }
    const auto red_jpg = load_image_gray(dir / "red.jpg");
    for (auto p : red_jpg.pixels()) {
        EXPECT_NEAR(p, 76, 3);
    }
    EXPECT_EQ(luma_bt601(255, 0, 0), 76);
}

TEST(Images, GrayRoundTripAndCorruptFiles)
{
    const auto dir = oracle::temp_dir("images2");
    GrayImage g(7, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 7; ++x) {
            g.at(x, y) = static_cast<std::uint8_t>(x * 30 + y);
        }
    }
    save_image_png(g, dir / "g.png");
    EXPECT_EQ(load_image_gray(dir / "g.png"), g);

    const std::string bytes = read_text_file(dir / "g.png");
    write_text_file(dir / "cut.png", bytes.substr(0, bytes.size() - 20));
    EXPECT_THROW(load_image_gray(dir / "cut.png"), Error);
    write_text_file(dir / "junk.png", "definitely not an image");
    EXPECT_THROW(load_image_gray(dir / "junk.png"), Error);
    EXPECT_THROW(load_image_gray(dir / "missing.png"), Error);

    cv::imwrite((dir / "x.jpg").string(), cv::Mat(16, 16, CV_8UC1, cv::Scalar(90)));
    const std::string jpg = read_text_file(dir / "x.jpg");
    write_text_file(dir / "cut.jpg", jpg.substr(0, jpg.size() - 30));
    EXPECT_THROW(load_image_gray(dir / "cut.jpg"), Error);
}

TEST(Results, RoundTripThroughFile)
{
    std::mt19937_64 rng(1);
    std::vector<ResultRecord> results{sample_result(rng, "a"), sample_result(rng, "b")};
    results[1].fusion.branch = FusionBranch::Pose;
    results[1].fusion.texture_variance = std::numeric_limits<double>::infinity();
    results[1].timing_ms = 12.5;
    const auto dir = oracle::temp_dir("results");
    write_results(results, dir / "out" / "results.jsonl");
    const auto back = read_results(dir / "out" / "results.jsonl");
    ASSERT_EQ(back.size(), 2U);
    EXPECT_EQ(back[0], results[0]);
    EXPECT_EQ(back[1], results[1]);
    EXPECT_EQ(parse_result(format_result(results[0])), results[0]);
    EXPECT_EQ(format_result(results[0]).find('\n'), std::string::npos);
}

TEST(Results, EmptyListWritesEmptyFile)
{
    const auto dir = oracle::temp_dir("results_empty");
    write_results({}, dir / "r.jsonl");
    EXPECT_TRUE(std::filesystem::exists(dir / "r.jsonl"));
    EXPECT_EQ(std::filesystem::file_size(dir / "r.jsonl"), 0U);
    EXPECT_TRUE(read_results(dir / "r.jsonl").empty());
}

TEST(Results, NonFiniteValueIsRejectedByRecordId)
{
    std::mt19937_64 rng(2);
    std::vector<ResultRecord> results{sample_result(rng, "fine"), sample_result(rng, "broken-17")};
    results[1].shape.points[4].x = std::nan("");
    const auto dir = oracle::temp_dir("results_nan");
    try {
        write_results(results, dir / "r.jsonl");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("broken-17"), std::string::npos) << e.what();
    }
    EXPECT_FALSE(std::filesystem::exists(dir / "r.jsonl"));
    results[1] = sample_result(rng, "score");
    results[1].occlusion_scores[0] = 1.5;
    EXPECT_THROW(format_result(results[1]), Error);
}

TEST(MeanShapeFile, RoundTripAndErrors)
{
    const auto m = default_mean_shape29();
    const auto parsed = parse_mean_shape(format_mean_shape(m));
    EXPECT_EQ(parsed.ids, m.ids);
    for (std::size_t i = 0; i < m.arity(); ++i) {
        EXPECT_NEAR(parsed.points[i].x, m.points[i].x, 1e-12);
        EXPECT_NEAR(parsed.points[i].y, m.points[i].y, 1e-12);
        EXPECT_NEAR(parsed.points[i].z, m.points[i].z, 1e-12);
    }
    const std::string five = "ricpr-mean-shape version 1\n# fiducials\narity 5\n"
                             "0 -1 -1 0\n1 1 -1 0\n2 0 0 -1\n3 -0.8 1 0.5\n4 0.8 1 0.5\n";
    const auto f = parse_mean_shape(five);
    EXPECT_EQ(f.arity(), 5U);
    EXPECT_THROW(parse_mean_shape("ricpr-mean-shape version 2\narity 5\n"), Error);
    EXPECT_THROW(parse_mean_shape("ricpr-mean-shape version 1\narity 7\n"), Error);
    EXPECT_THROW(parse_mean_shape("ricpr-mean-shape version 1\narity 5\n0 1 2 3\n"), Error);
    const auto dir = oracle::temp_dir("mean");
    save_mean_shape(m, dir / "m.txt");
    EXPECT_EQ(load_mean_shape(dir / "m.txt").ids, m.ids);
}

TEST(MeanShapeFile, ShippedFilesMatchBuiltInShape)
{
    const std::filesystem::path data = std::filesystem::path(RICPR_SOURCE_DIR) / "data";
    const auto m29 = load_mean_shape(data / "mean_shape_29.txt");
    const auto m5 = load_mean_shape(data / "mean_shape_5.txt");
    EXPECT_EQ(m29, default_mean_shape29());
    EXPECT_EQ(m5, fiducial_subset(default_mean_shape29()));
}

TEST(Cofw, ConvertsShapesAndBoxes)
{
    std::string row;
    for (int j = 0; j < 29; ++j) {
        row += std::to_string(10 + j) + " ";
    }
    for (int j = 0; j < 29; ++j) {
        row += std::to_string(100 + j) + ",";
    }
    for (int j = 0; j < 29; ++j) {
        row += std::string(j == 2 ? "1" : "0") + (j < 28 ? "\t" : "");
    }
    CofwConversion in;
    in.shapes_text = row + "\n" + row + "\n";
    in.boxes_text = "5 6 70 80\n1,2,3,4\n";
    in.image_paths = {"img/0001.jpg", "img/0002.jpg"};
    in.split = Split::Test;
    in.one_based = true;
    in.id_prefix = "cofw-test-";
    const auto m = convert_cofw(in);
    ASSERT_EQ(m.records.size(), 2U);
    const auto& r = m.records[0];
    EXPECT_EQ(r.id, "cofw-test-0");
    EXPECT_EQ(r.split, Split::Test);
    EXPECT_EQ(r.box, (FaceBox{4, 5, 70, 80}));
    ASSERT_TRUE(r.truth.has_value());
    EXPECT_EQ(r.truth->points[0], (Landmark{9, 99}));
    EXPECT_EQ(r.truth->points[28], (Landmark{37, 127}));
    EXPECT_TRUE(r.truth->occluded[2]);
    EXPECT_FALSE(r.truth->occluded[3]);

    in.boxes_text = "5 6 70 80\n";
    EXPECT_THROW(convert_cofw(in), Error);
    in.boxes_text = "5 6 70 80\n1 2 3 4\n";
    in.shapes_text = "1 2 3\n" + row + "\n";
    EXPECT_THROW(convert_cofw(in), Error);
}
