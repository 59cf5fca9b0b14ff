// Acceptance suite: one PASS / FAIL / NOT RUN line per criterion.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "ricpr/app.hpp"
#include "ricpr/cascade.hpp"
#include "ricpr/dataset_io.hpp"
#include "ricpr/eval.hpp"
#include "ricpr/fusion.hpp"
#include "ricpr/pose_init.hpp"
#include "ricpr/synthetic.hpp"
#include "ricpr/texture_init.hpp"

using namespace ricpr;

namespace {

struct Outcome {
    enum Kind { Pass, Fail, NotRun } kind = Fail;
    std::string detail;
};

Outcome fail(std::string d) { return {Outcome::Fail, std::move(d)}; }
Outcome check(bool ok, std::string d) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(d)}; }

std::string fmt(double v, int digits = 4)
{
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

int cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "ricpr");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream log;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), log);
    if (code != 0) {
        std::cerr << log.str();
    }
    return code;
}

std::string path(const std::filesystem::path& p) { return p.string(); }

// Criteria 1 and 2 need the converted COFW manifest (train and test splits with fiducials).
Outcome cofw_run(bool occlusion)
{
    const char* manifest = std::getenv("RICPR_COFW_MANIFEST");
    if (manifest == nullptr || *manifest == '\0') {
        return {Outcome::NotRun, "set RICPR_COFW_MANIFEST to a converted COFW manifest"};
    }
    // RICPR_COFW_GT_FIDUCIALS=1 derives fiducials from ground truth; the NME target is then 5.52e-2.
    const char* gt_env = std::getenv("RICPR_COFW_GT_FIDUCIALS");
    const bool gt = gt_env != nullptr && std::string(gt_env) == "1";
    static std::optional<nlohmann::json> summary;
    if (!summary) {
        const auto dir = oracle::temp_dir("acceptance_cofw");
        std::vector<std::string> infer{"infer",   "--manifest", manifest,
                                       "--model", path(dir / "model.bin"),
                                       "--gallery", path(dir / "gallery.bin"),
                                       "--out",   path(dir / "run"),
                                       "--seed",  "1"};
        if (gt) {
            infer.push_back("--gt-fiducials");
        }
        if (cli({"gallery-build", "--manifest", manifest, "--gallery", path(dir / "gallery.bin")}) != 0 ||
            cli({"train", "--manifest", manifest, "--model", path(dir / "model.bin"), "--seed", "1"}) != 0 ||
            cli(infer) != 0 || cli({"evaluate", "--manifest", manifest, "--out", path(dir / "run")}) != 0) {
            return fail("COFW pipeline failed");
        }
        summary = nlohmann::json::parse(read_text_file(dir / "run/summary.json"));
    }
    if (!occlusion) {
        const double nme = summary->at("nme").get<double>();
        const double target = gt ? 5.52e-2 : 6.64e-2;
        return check(std::abs(nme - target) <= 0.1 * target,
                     "NME " + fmt(nme) + " (target " + fmt(target, 3) + " +-10%)");
    }
    const double recall = summary->at("occlusion").at("recall_at_precision").get<double>();
    return check(recall >= 0.5, "recall@0.8 precision " + fmt(recall) + " (target >= 0.50)");
}

GrayImage random_image(std::mt19937_64& rng, int w, int h)
{
    GrayImage g(w, h);
    // Mixture of smooth gradients, blocky regions and noise so every label class occurs.
    const int mode = static_cast<int>(rng() % 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int v = 0;
            if (mode == 0) {
                v = static_cast<int>(rng() % 256);
            } else if (mode == 1) {
                v = (x * 3 + y * 5) % 256;
            } else {
                v = ((x / 7 + y / 5) % 2) * 200 + static_cast<int>(rng() % 20);
            }
            g.at(x, y) = static_cast<std::uint8_t>(v);
        }
    }
    return g;
}

Outcome lbp_invariants()
{
    const LbpConfig config;
    if (LbpMapping(config).label_count() != 59 || config.label_count() != 59 || oracle::uniform_label_count(8) != 59) {
        return fail("P=8 uniform operator does not have 59 labels");
    }
    std::mt19937_64 rng(2024);
    std::size_t violations = 0;
    for (int i = 0; i < 1000; ++i) {
        const int w = 32 + static_cast<int>(rng() % 160);
        const int h = 32 + static_cast<int>(rng() % 160);
        const GrayImage g = random_image(rng, w, h);
        const double bw = 24 + uniform01(rng) * (w - 24);
        const double bh = 24 + uniform01(rng) * (h - 24);
        const FaceBox box{uniform01(rng) * (w - bw), uniform01(rng) * (h - bh), bw, bh};
        const HistogramMatrix m = histogram_matrix(g, box, config);
        const std::uint64_t block_pixels =
            static_cast<std::uint64_t>(config.analysis_size / config.blocks_per_side) *
            static_cast<std::uint64_t>(config.analysis_size / config.blocks_per_side);
        violations += m.cols() != 59;
        violations += m.rows() != config.blocks_per_side * config.blocks_per_side;
        for (int r = 0; r < m.rows(); ++r) {
            violations += m.row_sum(r) != block_pixels;
        }
    }
    return check(violations == 0, "1000 random images, " + std::to_string(violations) + " violations");
}

HistogramMatrix random_matrix(std::mt19937_64& rng, int rows, int cols)
{
    std::vector<std::uint32_t> v(static_cast<std::size_t>(rows) * cols);
    const std::uint32_t range = 1 + static_cast<std::uint32_t>(rng() % 300);
    for (auto& x : v) {
        x = static_cast<std::uint32_t>(rng() % range);
    }
    v[0] += range;
    return {rows, cols, std::move(v)};
}

Outcome pearson_properties()
{
    std::mt19937_64 rng(7);
    std::size_t bad = 0;
    double worst_self = 0, worst_sym = 0, worst_affine = 0;
    for (int i = 0; i < 1000; ++i) {
        const int rows = 1 + static_cast<int>(rng() % 64);
        const int cols = 2 + static_cast<int>(rng() % 58);
        const auto a = random_matrix(rng, rows, cols);
        const auto b = random_matrix(rng, rows, cols);
        const double dab = pearson_distance(a, b);
        const double dba = pearson_distance(b, a);
        const std::uint32_t scale = 1 + static_cast<std::uint32_t>(rng() % 9);
        const std::uint32_t shift = static_cast<std::uint32_t>(rng() % 50);
        std::vector<std::uint32_t> av = a.counts();
        for (auto& x : av) {
            x = scale * x + shift;
        }
        const HistogramMatrix affine(rows, cols, av);
        worst_self = std::max(worst_self, std::abs(pearson_distance(a, a)));
        worst_sym = std::max(worst_sym, std::abs(dab - dba));
        worst_affine = std::max(worst_affine, std::abs(pearson_distance(affine, b) - dab));
        std::vector<double> fa(a.counts().begin(), a.counts().end()), fb(b.counts().begin(), b.counts().end());
        bad += std::abs(dab - oracle::pearson_distance(fa, fb)) > 1e-9;
        bad += !(dab >= 0.0 && dab <= 2.0);
    }
    const bool ok = bad == 0 && worst_self <= 1e-12 && worst_sym <= 1e-12 && worst_affine <= 1e-9;
    return check(ok, "1000 pairs: max |d(A,A)| " + fmt(worst_self) + ", max asymmetry " + fmt(worst_sym) +
                         ", max affine change " + fmt(worst_affine) + ", range/oracle violations " +
                         std::to_string(bad));
}

struct PnpStats {
    std::size_t exact_ok = 0;
    std::size_t noisy_ok = 0;
    std::size_t failures = 0;
    double worst_exact = 0;
};

// 500 random rotations up to 45 degrees for a face whose pupils are `iod_px` apart in a square box.
PnpStats pnp_trials(double box_width, double iod_px, std::uint64_t seed)
{
    const MeanShape3D mean5 = fiducial_subset(default_mean_shape29());
    const double iod_model = mean5.points[1].x - mean5.points[0].x;
    const FaceBox box{60, 40, box_width, box_width};
    const CameraModel camera = CameraModel::from_box(box);
    const double depth = camera.focal * iod_model / iod_px;
    std::mt19937_64 rng(seed);
    PnpStats st;
    for (int i = 0; i < 500; ++i) {
        std::array<double, 3> axis{gaussian(rng), gaussian(rng), gaussian(rng)};
        const double norm = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
        const double angle = uniform01(rng) * 45.0 * oracle::kPi / 180.0;
        const std::array<double, 3> r{axis[0] / norm * angle, axis[1] / norm * angle, axis[2] / norm * angle};
        const std::array<double, 3> t{0.3 * iod_model * gaussian(rng), 0.3 * iod_model * gaussian(rng), depth};
        std::vector<Landmark> exact, noisy;
        for (const auto& p : mean5.points) {
            const auto q = oracle::project({p.x, p.y, p.z}, r, t, camera.focal, camera.principal.x, camera.principal.y);
            exact.push_back({q[0], q[1]});
            noisy.push_back({q[0] + 0.5 * gaussian(rng), q[1] + 0.5 * gaussian(rng)});
        }
        try {
            const double e_exact =
                rotation_angle_between(estimate_pose(mean5, FiducialFive::from_array(exact), camera).rotation, r);
            st.worst_exact = std::max(st.worst_exact, e_exact);
            st.exact_ok += e_exact < 1e-3;
            const double e_noisy =
                rotation_angle_between(estimate_pose(mean5, FiducialFive::from_array(noisy), camera).rotation, r);
            st.noisy_ok += e_noisy < 0.5 * oracle::kPi / 180.0;
        } catch (const Error&) {
            ++st.failures;
        }
    }
    return st;
}

Outcome pnp_round_trip()
{
    // High-resolution portrait: 640 px face box, 288 px between the pupils. The noisy bound
    // scales with 1/IOD, so the COFW-sized rate is printed for reference only.
    const PnpStats st = pnp_trials(640, 288, 45);
    const PnpStats small = pnp_trials(200, 70, 45);
    const double rate = static_cast<double>(st.noisy_ok) / 500.0;
    return check(st.exact_ok == 500 && small.exact_ok == 500 && rate >= 0.95 && st.failures == 0,
                 "exact " + std::to_string(st.exact_ok) + "/500 < 1e-3 rad (worst " + fmt(st.worst_exact) +
                     "), 0.5 px noise at 288 px IOD " + fmt(100 * rate) + "% < 0.5 deg; reference at 70 px IOD " +
                     fmt(100 * static_cast<double>(small.noisy_ok) / 500.0) + "%");
}

Outcome cascade_smoke()
{
    // Single sample memorized.
    SynthConfig one;
    one.count = 1;
    one.seed = 5;
    auto single = generate_synthetic(one);
    std::vector<TrainingSample> s1{{&single[0].image, single[0].record.box, *single[0].record.truth, 0}};
    CascadeConfig c1;
    c1.stages = 40;
    c1.ferns = 5;
    c1.eta = 2;
    c1.pool_size = 100;
    c1.shrinkage = 1.0;
    c1.seed = 3;
    const auto r1 = train_cascade(s1, RandomInitProvider{}, c1);
    const double ratio1 = r1.error_trace.back() / r1.error_trace.front();

    // 200 affine-perturbed synthetic faces with occluders.
    SynthConfig many;
    many.count = 200;
    many.seed = 6;
    auto data = generate_synthetic(many);
    std::vector<TrainingSample> s;
    for (std::size_t i = 0; i < data.size(); ++i) {
        s.push_back({&data[i].image, data[i].record.box, *data[i].record.truth, i});
    }
    CascadeConfig c;
    c.stages = 50;
    c.seed = 4;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train_cascade(s, RandomInitProvider{}, c);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto& tr = r.error_trace;
    std::size_t non_increasing = 0;
    for (std::size_t i = 1; i < tr.size(); ++i) {
        non_increasing += tr[i] <= tr[i - 1];
    }
    const double monotone = static_cast<double>(non_increasing) / static_cast<double>(tr.size() - 1);
    const bool ok = ratio1 < 0.1 && tr.back() <= 0.5 * tr.front() && seconds < 300.0 && monotone >= 0.9;
    return check(ok, "single sample " + fmt(ratio1) + " of initial; 200 samples " + fmt(tr.front()) + " -> " +
                         fmt(tr.back()) + " in T=50, " + fmt(seconds, 3) + " s, " + fmt(100 * monotone, 3) +
                         "% non-increasing stages");
}

Outcome init_superiority()
{
    std::string detail;
    bool ok = true;
    double tex_final_sum = 0, rnd_final_sum = 0;
    for (int seed = 1; seed <= 5; ++seed) {
        const auto dir = oracle::temp_dir("acceptance_init_" + std::to_string(seed));
        const std::string s = std::to_string(seed);
        const auto manifest = path(dir / "data/manifest.jsonl");
        if (cli({"synth", "--out", path(dir / "data"), "--count", "240", "--test-fraction", "0.25", "--seed", s}) != 0 ||
            cli({"gallery-build", "--manifest", manifest, "--gallery", path(dir / "gallery.bin")}) != 0 ||
            cli({"train", "--manifest", manifest, "--model", path(dir / "model.bin"), "--stages", "30", "--seed",
                 s}) != 0 ||
            cli({"init-analyze", "--manifest", manifest, "--model", path(dir / "model.bin"), "--gallery",
                 path(dir / "gallery.bin"), "--out", path(dir / "analysis"), "--seed", s}) != 0) {
            return fail("pipeline failed for seed " + s);
        }
        std::istringstream in(read_text_file(dir / "analysis/init_families.csv"));
        std::string line;
        std::map<std::string, std::pair<double, double>> fam;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::istringstream row(line);
            std::string name, count, initial, final_nme;
            std::getline(row, name, ',');
            std::getline(row, count, ',');
            std::getline(row, initial, ',');
            std::getline(row, final_nme, ',');
            fam[name] = {std::stod(initial), std::stod(final_nme)};
        }
        const auto tex = fam.at("texture");
        const auto rnd = fam.at("random");
        ok = ok && tex.first < rnd.first;
        tex_final_sum += tex.second;
        rnd_final_sum += rnd.second;
        detail += (seed > 1 ? "; " : "") + std::string("seed ") + s + " initial " + fmt(tex.first, 3) + " vs " +
                  fmt(rnd.first, 3) + ", final " + fmt(tex.second, 3) + " vs " + fmt(rnd.second, 3);
        std::filesystem::remove_all(dir);
    }
    ok = ok && tex_final_sum <= rnd_final_sum;
    return check(ok, "texture vs random: " + detail);
}

Outcome fusion_behaviour()
{
    std::mt19937_64 rng(8);
    const AnnotatedShape s = oracle::random_shape(rng, 40, 200);
    const FusionResult same = fuse(PredictionSet{{s, s, s, s, s}, {s, s, s, s, s}, FaceBox{30, 30, 180, 180}.diagonal()});
    if (same.report.variance != 0.0 || same.shape != s) {
        return fail("identical predictions: v=" + fmt(same.report.variance) + ", passthrough " +
                    (same.shape == s ? "exact" : "inexact"));
    }
    int texture = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const AnnotatedShape truth = oracle::random_shape(rng, 40, 200);
        const FaceBox box{30, 30, 180, 180};
        PredictionSet set;
        set.normalizer = box.diagonal();
        const std::size_t nt = 2 + rng() % 7;
        const std::size_t np = 2 + rng() % 7;
        for (std::size_t i = 0; i < nt; ++i) {
            AnnotatedShape p = truth;
            for (auto& q : p.points) {
                q.x += gaussian(rng);
                q.y += gaussian(rng);
            }
            set.texture_preds.push_back(p);
        }
        // Pose predictions sit evenly around an 80 px circle, so the family is genuinely scattered.
        const double phase = 2 * oracle::kPi * uniform01(rng);
        for (std::size_t i = 0; i < np; ++i) {
            const double a = phase + 2 * oracle::kPi * static_cast<double>(i) / static_cast<double>(np);
            const double dx = 80 * std::cos(a);
            const double dy = 80 * std::sin(a);
            AnnotatedShape p = truth;
            for (auto& q : p.points) {
                q.x += dx + 3 * gaussian(rng);
                q.y += dy + 3 * gaussian(rng);
            }
            set.pose_preds.push_back(p);
        }
        texture += fuse(set).report.branch == FusionBranch::Texture;
    }
    return check(texture == 100, "identical set v=0 with exact passthrough; texture branch in " +
                                     std::to_string(texture) + "/100 trials");
}

Outcome eval_equivalence()
{
    std::mt19937_64 rng(9);
    double worst = 0;
    std::size_t count_mismatch = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<AnnotatedShape> preds, truths;
        std::vector<OcclusionScores> scores(50);
        std::vector<OcclusionFlags> flags(50);
        std::vector<double> flat_scores;
        std::vector<bool> flat_flags;
        for (std::size_t i = 0; i < 50; ++i) {
            truths.push_back(oracle::random_shape(rng, 0, 200));
            AnnotatedShape p = truths.back();
            for (auto& q : p.points) {
                q.x += 4 * gaussian(rng);
                q.y += 4 * gaussian(rng);
            }
            preds.push_back(p);
            for (std::size_t j = 0; j < kNumLandmarks; ++j) {
                flags[i][j] = truths[i].occluded[j];
                scores[i][j] = std::round(uniform01(rng) * 40) / 40;
                flat_scores.push_back(scores[i][j]);
                flat_flags.push_back(flags[i][j]);
            }
        }
        const auto n = nme(preds, truths);
        std::vector<double> errors;
        for (std::size_t i = 0; i < 50; ++i) {
            errors.push_back(oracle::image_nme(preds[i], truths[i], 16, 17));
            worst = std::max(worst, std::abs(errors[i] - n.per_image[i]));
        }
        double mean = 0;
        for (double e : errors) {
            mean += e / 50;
        }
        worst = std::max(worst, std::abs(mean - n.mean));
        const auto th = ced_thresholds();
        const auto ced = ced_curve(n.per_image, th);
        for (std::size_t k = 0; k < th.size(); ++k) {
            worst = std::max(worst, std::abs(ced[k] - oracle::ced_at(errors, th[k])));
        }
        const auto thresholds = pr_thresholds(scores);
        const auto pr = occlusion_pr(scores, flags, thresholds);
        for (std::size_t k = 0; k < thresholds.size(); ++k) {
            const auto c = oracle::confusion(flat_scores, flat_flags, thresholds[k]);
            const auto& p = pr.points[k];
            count_mismatch += p.tp != c.tp || p.fp != c.fp || p.fn != c.fn;
            const double precision = c.tp + c.fp == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
            const double recall = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
            worst = std::max({worst, std::abs(precision - p.precision), std::abs(recall - p.recall)});
        }
    }
    return check(worst <= 1e-9 && count_mismatch == 0, "20 sets of 50 images: max deviation " + fmt(worst) + ", " +
                                                            std::to_string(count_mismatch) + " count mismatches");
}

Outcome determinism()
{
    const auto dir = oracle::temp_dir("acceptance_determinism");
    const auto manifest = path(dir / "data/manifest.jsonl");
    if (cli({"synth", "--out", path(dir / "data"), "--count", "60", "--test-fraction", "0.25", "--seed", "4"}) != 0 ||
        cli({"gallery-build", "--manifest", manifest, "--gallery", path(dir / "gallery.bin")}) != 0) {
        return fail("setup failed");
    }
    for (const char* run : {"a", "b"}) {
        const auto out = dir / run;
        if (cli({"train", "--manifest", manifest, "--model", path(out / "model.bin"), "--out", path(out), "--stages",
                 "10", "--seed", "11"}) != 0 ||
            cli({"infer", "--manifest", manifest, "--model", path(out / "model.bin"), "--gallery",
                 path(dir / "gallery.bin"), "--out", path(out / "infer"), "--seed", "12"}) != 0) {
            return fail(std::string("run ") + run + " failed");
        }
    }
    const bool model = read_text_file(dir / "a/model.bin") == read_text_file(dir / "b/model.bin");
    const bool trace = read_text_file(dir / "a/training_trace.csv") == read_text_file(dir / "b/training_trace.csv");
    const bool results =
        read_text_file(dir / "a/infer/results.jsonl") == read_text_file(dir / "b/infer/results.jsonl");
    std::filesystem::remove_all(dir);
    return check(model && trace && results, std::string("model ") + (model ? "identical" : "differs") + ", trace " +
                                                (trace ? "identical" : "differs") + ", results.jsonl " +
                                                (results ? "identical" : "differs"));
}

} // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"COFW NME", [] { return cofw_run(false); }},
        {"COFW occlusion recall", [] { return cofw_run(true); }},
        {"LBP invariants", lbp_invariants},
        {"Pearson distance properties", pearson_properties},
        {"PnP round trip", pnp_round_trip},
        {"cascade overfit smoke test", cascade_smoke},
        {"initialization superiority", init_superiority},
        {"fusion", fusion_behaviour},
        {"evaluation oracle equivalence", eval_equivalence},
        {"determinism", determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        only.insert(std::atoi(argv[i]));
    }
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && only.count(id) == 0) {
            continue;
        }
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        const char* tag = o.kind == Outcome::Pass ? "PASS" : (o.kind == Outcome::Fail ? "FAIL" : "NOT RUN");
        failures += o.kind == Outcome::Fail;
        std::cout << "criterion " << id << " [" << criteria[i].first << "]: " << tag << " - " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
