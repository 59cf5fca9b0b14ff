#include "ricpr/app.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "ricpr/dataset_io.hpp"
#include "ricpr/eval.hpp"
#include "ricpr/gallery.hpp"
#include "ricpr/parallel.hpp"
#include "ricpr/synthetic.hpp"

namespace ricpr {

namespace {

std::string num(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void require_file(const std::filesystem::path& path, const std::string& flag)
{
    if (path.empty()) {
        throw UsageError(flag + " is required");
    }
    if (!std::filesystem::is_regular_file(path)) {
        throw UsageError(flag + ": file not found: " + path.string());
    }
}

void require_path(const std::filesystem::path& path, const std::string& flag)
{
    if (path.empty()) {
        throw UsageError(flag + " is required");
    }
}

std::uint64_t require_seed(const RunConfig& c)
{
    if (!c.seed) {
        throw UsageError("--seed is required for reproducible runs");
    }
    return *c.seed;
}

LandmarkIndexMap index_map_of(const RunConfig& c)
{
    return c.index_map_file.empty() ? default_index_map() : load_index_map(c.index_map_file);
}

PipelineConfig pipeline_config(const RunConfig& c)
{
    PipelineConfig p;
    p.l_texture = c.l_texture;
    p.l_pose = c.l_pose;
    p.fusion.zeta = c.zeta;
    p.fusion.validate();
    p.index_map = index_map_of(c);
    p.fiducials_from_truth = c.gt_fiducials;
    p.seed = require_seed(c);
    return p;
}

struct LoadedTraining {
    DatasetManifest manifest;
    std::vector<std::size_t> rows;
    std::vector<GrayImage> images;
    std::vector<TrainingSample> samples;
};

LoadedTraining load_training(const RunConfig& c, std::ostream& log)
{
    LoadedTraining t;
    t.manifest = load_manifest(c.manifest);
    for (std::size_t i : t.manifest.indices(Split::Train)) {
        if (t.manifest.records[i].truth) {
            t.rows.push_back(i);
        }
    }
    if (t.rows.empty()) {
        throw Error("manifest has no train records with ground truth");
    }
    t.images.resize(t.rows.size());
    parallel_for(t.rows.size(), c.workers, [&](std::size_t k) {
        const auto& rec = t.manifest.records[t.rows[k]];
        try {
            t.images[k] = load_image_gray(t.manifest.resolve(rec));
        } catch (const Error& e) {
            throw Error("record '" + rec.id + "' (line " + std::to_string(rec.line) + "): " + e.what());
        }
    });
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto& rec = t.manifest.records[t.rows[k]];
        t.samples.push_back({&t.images[k], rec.box, *rec.truth, t.rows[k]});
    }
    log << "loaded " << t.samples.size() << " training samples\n";
    return t;
}

Split split_of(const RunConfig& c)
{
    try {
        return split_from_string(c.split);
    } catch (const Error& e) {
        throw UsageError(std::string("--split: ") + e.what());
    }
}

struct Failure {
    std::string id;
    std::size_t line = 0;
    std::string message;
};

std::string failures_jsonl(const std::vector<Failure>& failures)
{
    std::string out;
    for (const auto& f : failures) {
        nlohmann::ordered_json j;
        j["id"] = f.id;
        j["line"] = f.line;
        j["error"] = f.message;
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<std::pair<std::string, double>> read_timings(const std::filesystem::path& path)
{
    std::vector<std::pair<std::string, double>> out;
    std::istringstream in(read_text_file(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) {
            continue;
        }
        out.emplace_back(line.substr(0, comma), std::stod(line.substr(comma + 1)));
    }
    return out;
}

std::vector<std::pair<double, double>> read_two_columns(const std::filesystem::path& path)
{
    std::vector<std::pair<double, double>> out;
    std::istringstream in(read_text_file(path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma != std::string::npos) {
            out.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
        }
    }
    return out;
}

double mean_of(const std::vector<double>& v)
{
    if (v.empty()) {
        return std::nan("");
    }
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

} // namespace

LandmarkIndexMap load_index_map(const std::filesystem::path& path)
{
    try {
        const auto j = nlohmann::json::parse(read_text_file(path));
        LandmarkIndexMap m;
        m.left_eye = j.at("left_eye").get<std::vector<std::size_t>>();
        m.right_eye = j.at("right_eye").get<std::vector<std::size_t>>();
        m.nose_tip = j.at("nose_tip").get<std::size_t>();
        m.mouth_left = j.at("mouth_left").get<std::size_t>();
        m.mouth_right = j.at("mouth_right").get<std::size_t>();
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error("index map '" + path.string() + "': " + e.what());
    }
}

void cmd_convert(const RunConfig& c, std::ostream& log)
{
    require_file(c.shapes_file, "--shapes");
    require_file(c.boxes_file, "--boxes");
    require_file(c.images_file, "--images");
    require_path(c.out, "--out");
    CofwConversion in;
    in.shapes_text = read_text_file(c.shapes_file);
    in.boxes_text = read_text_file(c.boxes_file);
    std::istringstream names(read_text_file(c.images_file));
    std::string line;
    while (std::getline(names, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
            line.pop_back();
        }
        if (!line.empty()) {
            in.image_paths.push_back(line);
        }
    }
    in.split = split_of(c);
    in.one_based = c.one_based;
    in.id_prefix = c.split + "-";
    const DatasetManifest m = convert_cofw(in);
    save_manifest(m, c.out);
    log << "wrote " << m.records.size() << " records to " << c.out.string() << "\n";
}

void cmd_gallery_build(const RunConfig& c, std::ostream& log)
{
    require_file(c.manifest, "--manifest");
    const std::filesystem::path out = !c.gallery.empty() ? c.gallery : (c.out.empty() ? "" : c.out / "gallery.bin");
    require_path(out, "--gallery (or --out)");
    const DatasetManifest manifest = load_manifest(c.manifest);
    const GalleryBuildResult built = build_gallery(manifest, LbpConfig{}, c.workers);
    for (const auto& e : built.errors) {
        log << "record '" << e.id << "' skipped: " << e.message << "\n";
    }
    if (built.gallery.entries.empty()) {
        throw Error("gallery is empty (" + std::to_string(built.errors.size()) + " record errors)");
    }
    save_gallery(built.gallery, out);
    log << "gallery: " << built.gallery.entries.size() << " entries, " << built.errors.size() << " errors -> "
        << out.string() << "\n";
}

void cmd_train(const RunConfig& c, std::ostream& log)
{
    require_file(c.manifest, "--manifest");
    require_path(c.model, "--model");
    const std::uint64_t seed = require_seed(c);
    if (c.train_init != "random" && c.train_init != "texture") {
        throw UsageError("--train-init must be 'random' or 'texture'");
    }
    if (c.train_init == "texture") {
        require_file(c.gallery, "--gallery");
    }
    CascadeConfig cc = c.cascade;
    cc.seed = seed;
    try {
        cc.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    const LandmarkIndexMap index_map = index_map_of(c);
    LoadedTraining t = load_training(c, log);

    std::unique_ptr<InitProvider> provider;
    Gallery gallery;
    if (c.train_init == "texture") {
        gallery = load_gallery(c.gallery);
        const LbpDescriptor descriptor(gallery.config);
        std::vector<HistogramMatrix> hist(t.samples.size());
        std::vector<std::optional<std::size_t>> sources(t.samples.size());
        parallel_for(t.samples.size(), c.workers, [&](std::size_t k) {
            sources[k] = t.rows[k];
            try {
                hist[k] = descriptor.compute(t.images[k], t.samples[k].box);
            } catch (const Error&) {
                hist[k] = HistogramMatrix{};
            }
        });
        provider = std::make_unique<TextureInitProvider>(gallery, std::move(hist), std::move(sources));
    } else {
        provider = std::make_unique<RandomInitProvider>();
    }

    TrainingOptions opts;
    opts.workers = c.workers;
    opts.on_stage = [&](int stage, double error) {
        if (stage % 10 == 0 || stage == cc.stages) {
            log << "stage " << stage << "/" << cc.stages << " error " << error << "\n";
        }
    };
    TrainingResult result = train_cascade(t.samples, *provider, cc, opts);
    if (!c.mean_shape.empty()) {
        result.model.mean_shape29 = load_mean_shape(c.mean_shape);
        if (result.model.mean_shape29.arity() != kNumLandmarks) {
            throw Error("--mean-shape must hold 29 points");
        }
        result.model.mean_shape5 = fiducial_subset(result.model.mean_shape29, index_map);
    }
    result.model.pose_variants = select_pose_variants(t.samples, result.model.mean_shape29, result.model.mean_shape5,
                                                      std::max<std::size_t>(c.pose_variants, 1), index_map);
    save_model(result.model, c.model);

    std::string trace = "stage,error\n";
    for (std::size_t s = 0; s < result.error_trace.size(); ++s) {
        trace += std::to_string(s) + "," + num(result.error_trace[s]) + "\n";
    }
    const std::filesystem::path trace_path =
        c.out.empty() ? std::filesystem::path(c.model.string() + ".trace.csv") : c.out / "training_trace.csv";
    write_text_file(trace_path, trace);
    log << "model -> " << c.model.string() << ", trace -> " << trace_path.string() << "\n";
}

std::size_t cmd_infer(const RunConfig& c, std::ostream& log)
{
    require_file(c.manifest, "--manifest");
    require_file(c.model, "--model");
    require_file(c.gallery, "--gallery");
    require_path(c.out, "--out");
    const PipelineConfig pc = pipeline_config(c);
    const Split split = split_of(c);
    const DatasetManifest manifest = load_manifest(c.manifest);
    const FernCascadeModel model = load_model(c.model);
    const Gallery gallery = load_gallery(c.gallery);
    const auto rows = manifest.indices(split);

    std::vector<std::optional<ResultRecord>> results(rows.size());
    std::vector<std::string> errors(rows.size());
    std::vector<double> millis(rows.size(), 0.0);
    parallel_for(rows.size(), c.workers, [&](std::size_t k) {
        const auto& rec = manifest.records[rows[k]];
        try {
            const GrayImage image = load_image_gray(manifest.resolve(rec));
            const auto start = std::chrono::steady_clock::now();
            ImageInference inf = infer_image(model, gallery, image, rec, rows[k], pc);
            millis[k] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            results[k] = std::move(inf.result);
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    });

    std::vector<ResultRecord> ok;
    std::vector<Failure> failures;
    std::string timings = "id,ms\n";
    double total_ms = 0.0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& rec = manifest.records[rows[k]];
        if (results[k]) {
            ok.push_back(std::move(*results[k]));
            timings += rec.id + "," + num(millis[k]) + "\n";
            total_ms += millis[k];
        } else {
            failures.push_back({rec.id, rec.line, errors[k]});
            log << "record '" << rec.id << "' failed: " << errors[k] << "\n";
        }
    }
    std::filesystem::create_directories(c.out);
    write_results(ok, c.out / "results.jsonl");
    write_text_file(c.out / "failures.jsonl", failures_jsonl(failures));
    write_text_file(c.out / "timings.csv", timings);
    log << "infer: " << ok.size() << " results, " << failures.size() << " failures";
    if (!ok.empty() && total_ms > 0.0) {
        log << ", " << 1000.0 * static_cast<double>(ok.size()) / total_ms << " images/s (single worker time)";
    }
    log << "\n";
    if (ok.empty() && !failures.empty()) {
        throw Error("every record failed");
    }
    return failures.size();
}

void cmd_evaluate(const RunConfig& c, std::ostream& log)
{
    require_file(c.manifest, "--manifest");
    require_path(c.out, "--out");
    const std::filesystem::path results_path = c.results.empty() ? c.out / "results.jsonl" : c.results;
    require_file(results_path, "--results");
    const LandmarkIndexMap index_map = index_map_of(c);
    const Split split = split_of(c);
    const DatasetManifest manifest = load_manifest(c.manifest);
    const auto results = read_results(results_path);
    std::map<std::string, const ResultRecord*> by_id;
    for (const auto& r : results) {
        by_id[r.id] = &r;
    }
    std::vector<AnnotatedShape> preds;
    std::vector<AnnotatedShape> truths;
    std::vector<OcclusionScores> scores;
    std::vector<OcclusionFlags> flags;
    std::size_t missing = 0;
    for (std::size_t i : manifest.indices(split)) {
        const auto& rec = manifest.records[i];
        if (!rec.truth) {
            continue;
        }
        const auto it = by_id.find(rec.id);
        if (it == by_id.end()) {
            ++missing;
            continue;
        }
        preds.push_back(it->second->shape);
        truths.push_back(*rec.truth);
        scores.push_back(it->second->occlusion_scores);
        flags.push_back(rec.truth->occluded);
    }
    if (preds.empty()) {
        throw Error("no results match annotated " + c.split + " records");
    }
    EvalSummary s;
    s.images = preds.size();
    s.nme = nme(preds, truths, index_map);
    s.ced_thresholds = ced_thresholds();
    s.ced = ced_curve(s.nme.per_image, s.ced_thresholds);
    s.pr = occlusion_pr(scores, flags, pr_thresholds(scores));
    if (missing > 0) {
        s.nme.warnings.push_back(std::to_string(missing) + " annotated records have no result");
    }

    if (c.fps_repeats > 0) {
        require_file(c.model, "--model");
        require_file(c.gallery, "--gallery");
        const PipelineConfig pc = pipeline_config(c);
        const FernCascadeModel model = load_model(c.model);
        const Gallery gallery = load_gallery(c.gallery);
        const auto rows = manifest.indices(split);
        std::vector<GrayImage> images;
        for (std::size_t i : rows) {
            images.push_back(load_image_gray(manifest.resolve(manifest.records[i])));
        }
        s.fps = measure_fps(
            rows.size(),
            [&](std::size_t k) { infer_image(model, gallery, images[k], manifest.records[rows[k]], rows[k], pc); },
            c.fps_repeats);
    } else if (const auto timing_path = results_path.parent_path() / "timings.csv";
               std::filesystem::is_regular_file(timing_path)) {
        const auto timings = read_timings(timing_path);
        double total = 0.0;
        for (const auto& [id, ms] : timings) {
            total += ms;
        }
        if (!timings.empty() && total > 0.0) {
            const double fps = frames_per_second(timings.size(), total / 1000.0);
            s.fps = summarize_fps(std::vector<double>{fps}, timings.size());
        }
    }

    std::filesystem::create_directories(c.out);
    write_text_file(c.out / "summary.json", summary_json(s));
    write_text_file(c.out / "ced.csv", ced_csv(s.ced_thresholds, s.ced));
    write_text_file(c.out / "pr.csv", pr_csv(s.pr));
    if (c.plot_svg) {
        write_text_file(c.out / "ced.svg", ced_svg(s.ced_thresholds, s.ced));
        write_text_file(c.out / "pr.svg", pr_svg(s.pr));
    }
    log << "evaluate: " << s.images << " images, NME " << s.nme.mean * 100.0 << "e-2, recall@"
        << s.pr.target_precision << " precision " << s.pr.recall_at_precision
        << (s.pr.no_operating_point ? " (no operating point reaches the target)" : "") << "\n";
}

void cmd_init_analyze(const RunConfig& c, std::ostream& log)
{
    require_file(c.manifest, "--manifest");
    require_file(c.model, "--model");
    require_file(c.gallery, "--gallery");
    require_path(c.out, "--out");
    PipelineConfig pc = pipeline_config(c);
    pc.keep_checkpoints = true;
    const std::size_t ranks = std::max<std::size_t>(c.l_texture + c.l_pose, 1);
    std::vector<double> zetas = c.zeta_sweep.empty() ? std::vector<double>{c.zeta} : c.zeta_sweep;
    for (double z : zetas) {
        if (!(z > 0.0)) {
            throw UsageError("--zeta-sweep values must be positive");
        }
    }
    const Split split = split_of(c);
    const DatasetManifest manifest = load_manifest(c.manifest);
    const FernCascadeModel model = load_model(c.model);
    const Gallery gallery = load_gallery(c.gallery);
    const int checkpoint = early_checkpoint_stage(model);
    std::vector<std::size_t> rows;
    for (std::size_t i : manifest.indices(split)) {
        if (manifest.records[i].truth) {
            rows.push_back(i);
        }
    }

    struct RankRow {
        std::size_t source = 0;
        double distance = 0.0;
        double initial = 0.0;
        double checkpoint = 0.0;
        double final = 0.0;
    };
    struct ImageRow {
        std::vector<RankRow> ranks;
        std::vector<double> random_initial, random_final, pose_initial, pose_final;
        std::vector<AnnotatedShape> checkpoints;
        double fused = 0.0;
        bool ok = false;
        std::string error;
    };
    std::vector<ImageRow> rowsout(rows.size());
    parallel_for(rows.size(), c.workers, [&](std::size_t k) {
        const auto& rec = manifest.records[rows[k]];
        ImageRow& row = rowsout[k];
        try {
            const GrayImage image = load_image_gray(manifest.resolve(rec));
            const auto& truth = *rec.truth;
            const auto nerr = [&](const AnnotatedShape& s) { return normalized_error(s, truth, pc.index_map); };
            for (const auto& init : texture_initial_shapes(gallery, image, rec.box, ranks)) {
                const CascadeResult r = run_cascade_detailed(model, image, rec.box, init.shape, checkpoint);
                row.ranks.push_back({init.source_index, init.distance, nerr(init.shape), nerr(*r.checkpoint), nerr(r.shape)});
            }
            for (const auto& init :
                 random_initial_shapes(gallery, rec.box, pc.l_texture, record_seed(pc.seed ^ 0x5A5A5A5AULL, rows[k]))) {
                row.random_initial.push_back(nerr(init.shape));
                row.random_final.push_back(nerr(run_cascade(model, image, rec.box, init.shape)));
            }
            const ImageInference inf = infer_image(model, gallery, image, rec, rows[k], pc);
            for (std::size_t i = 0; i < inf.pose_inits.size(); ++i) {
                row.pose_initial.push_back(nerr(inf.pose_inits[i].shape));
                row.pose_final.push_back(nerr(inf.pose_preds[i].shape));
            }
            for (const auto& p : inf.texture_preds) {
                row.checkpoints.push_back(*p.checkpoint);
            }
            for (const auto& p : inf.pose_preds) {
                row.checkpoints.push_back(*p.checkpoint);
            }
            row.fused = nerr(inf.result.shape);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });

    std::string per_image = "id,rank,source_index,distance,initial_nme,checkpoint_nme,final_nme\n";
    std::vector<std::vector<RankRow>> by_rank(ranks);
    std::vector<double> tex_i, tex_f, rnd_i, rnd_f, pose_i, pose_f;
    std::size_t failed = 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& row = rowsout[k];
        const auto& rec = manifest.records[rows[k]];
        if (!row.ok) {
            ++failed;
            log << "record '" << rec.id << "' failed: " << row.error << "\n";
            continue;
        }
        for (std::size_t r = 0; r < row.ranks.size(); ++r) {
            const auto& x = row.ranks[r];
            per_image += rec.id + "," + std::to_string(r + 1) + "," + std::to_string(x.source) + "," + num(x.distance) +
                         "," + num(x.initial) + "," + num(x.checkpoint) + "," + num(x.final) + "\n";
            by_rank[r].push_back(x);
            if (r < pc.l_texture) {
                tex_i.push_back(x.initial);
                tex_f.push_back(x.final);
            }
        }
        rnd_i.insert(rnd_i.end(), row.random_initial.begin(), row.random_initial.end());
        rnd_f.insert(rnd_f.end(), row.random_final.begin(), row.random_final.end());
        pose_i.insert(pose_i.end(), row.pose_initial.begin(), row.pose_initial.end());
        pose_f.insert(pose_f.end(), row.pose_final.begin(), row.pose_final.end());
    }

    std::string per_rank = "rank,count,mean_distance,mean_initial_nme,mean_checkpoint_nme,mean_final_nme\n";
    for (std::size_t r = 0; r < ranks; ++r) {
        std::vector<double> d, i, cp, f;
        for (const auto& x : by_rank[r]) {
            d.push_back(x.distance);
            i.push_back(x.initial);
            cp.push_back(x.checkpoint);
            f.push_back(x.final);
        }
        per_rank += std::to_string(r + 1) + "," + std::to_string(d.size()) + "," + num(mean_of(d)) + "," +
                    num(mean_of(i)) + "," + num(mean_of(cp)) + "," + num(mean_of(f)) + "\n";
    }

    std::string families = "family,count,mean_initial_nme,mean_final_nme\n";
    families += "texture," + std::to_string(tex_i.size()) + "," + num(mean_of(tex_i)) + "," + num(mean_of(tex_f)) + "\n";
    families += "random," + std::to_string(rnd_i.size()) + "," + num(mean_of(rnd_i)) + "," + num(mean_of(rnd_f)) + "\n";
    families += "pose," + std::to_string(pose_i.size()) + "," + num(mean_of(pose_i)) + "," + num(mean_of(pose_f)) + "\n";

    std::string goodness = "zeta,good,bad,good_mean_nme,bad_mean_nme\n";
    for (double z : zetas) {
        FusionConfig fc;
        fc.zeta = z;
        std::vector<double> good, bad;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            if (!rowsout[k].ok) {
                continue;
            }
            const bool g = early_goodness(rowsout[k].checkpoints, manifest.records[rows[k]].box.diagonal(), fc);
            (g ? good : bad).push_back(rowsout[k].fused);
        }
        goodness += num(z) + "," + std::to_string(good.size()) + "," + std::to_string(bad.size()) + "," +
                    num(mean_of(good)) + "," + num(mean_of(bad)) + "\n";
    }

    std::filesystem::create_directories(c.out);
    write_text_file(c.out / "init_per_image.csv", per_image);
    write_text_file(c.out / "init_per_rank.csv", per_rank);
    write_text_file(c.out / "init_families.csv", families);
    write_text_file(c.out / "init_goodness.csv", goodness);
    log << "init-analyze: " << rows.size() - failed << " images, " << failed << " failures, checkpoint stage "
        << checkpoint << "\n";
    if (failed == rows.size() && failed > 0) {
        throw Error("every record failed");
    }
}

void cmd_plot(const RunConfig& c, std::ostream& log)
{
    require_path(c.out, "--out");
    const auto ced_path = c.out / "ced.csv";
    const auto pr_path = c.out / "pr.csv";
    require_file(ced_path, "--out (ced.csv)");
    std::vector<double> t, f;
    for (const auto& [a, b] : read_two_columns(ced_path)) {
        t.push_back(a);
        f.push_back(b);
    }
    write_text_file(c.out / "ced.svg", ced_svg(t, f));
    if (std::filesystem::is_regular_file(pr_path)) {
        OcclusionPr pr;
        std::istringstream in(read_text_file(pr_path));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                cells.push_back(cell);
            }
            if (cells.size() == 6) {
                PrPoint p;
                p.threshold = std::stod(cells[0]);
                p.precision = std::stod(cells[4]);
                p.recall = std::stod(cells[5]);
                pr.points.push_back(p);
            }
        }
        write_text_file(c.out / "pr.svg", pr_svg(pr));
    }
    log << "plots written to " << c.out.string() << "\n";
}

void cmd_synth(const RunConfig& c, std::ostream& log)
{
    require_path(c.out, "--out");
    SynthConfig sc;
    sc.seed = require_seed(c);
    sc.count = c.synth_count;
    sc.test_fraction = c.test_fraction;
    sc.image_size = c.image_size;
    const DatasetManifest m = write_synthetic_dataset(sc, c.out);
    log << "synthetic dataset: " << m.records.size() << " records -> " << (c.out / "manifest.jsonl").string() << "\n";
}

int run_cli(int argc, const char* const* argv, std::ostream& log)
{
    CLI::App app{"RICPR face alignment: gallery, training, inference and evaluation"};
    app.require_subcommand(1);
    RunConfig c;
    std::uint64_t seed = 0;
    std::string split = "test";
    std::size_t l_texture = 5;
    std::size_t l_pose = 5;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--index-map", c.index_map_file, "JSON landmark index map (default: COFW map)");
    };
    auto seeded = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Random seed (required)"); };
    auto inits = [&](CLI::App* sub) {
        sub->add_option("--l-texture", l_texture, "Texture-correlated initial shapes");
        sub->add_option("--l-pose", l_pose, "Pose-correlated initial shapes");
        sub->add_option("--zeta", c.zeta, "Fusion variance threshold");
        sub->add_option("--split", split, "Manifest split to process (train|test)");
        sub->add_flag("--gt-fiducials", c.gt_fiducials, "Derive fiducials from ground truth");
    };

    auto* convert = app.add_subcommand("convert", "COFW text export -> manifest");
    convert->add_option("--shapes", c.shapes_file, "Rows of 29 x, 29 y, 29 occlusion values");
    convert->add_option("--boxes", c.boxes_file, "Rows of x y w h");
    convert->add_option("--images", c.images_file, "One image path per line");
    convert->add_option("--split", split, "Split tag for every record");
    convert->add_flag("--one-based", c.one_based, "Coordinates are one-based");
    convert->add_option("--out", c.out, "Output manifest path");

    auto* gallery = app.add_subcommand("gallery-build", "LBP histogram gallery of the train split");
    gallery->add_option("--manifest", c.manifest);
    gallery->add_option("--gallery", c.gallery, "Output gallery path");
    gallery->add_option("--out", c.out, "Output directory (gallery.bin) when --gallery is absent");
    common(gallery);

    auto* train = app.add_subcommand("train", "Train the cascade");
    train->add_option("--manifest", c.manifest);
    train->add_option("--model", c.model, "Output model path");
    train->add_option("--gallery", c.gallery, "Gallery (required with --train-init texture)");
    train->add_option("--out", c.out, "Directory for training_trace.csv");
    train->add_option("--eta", c.cascade.eta);
    train->add_option("--stages", c.cascade.stages);
    train->add_option("--ferns", c.cascade.ferns);
    train->add_option("--depth", c.cascade.depth);
    train->add_option("--pool-size", c.cascade.pool_size);
    train->add_option("--augment", c.cascade.augment, "Initial shapes per training sample");
    train->add_option("--shrinkage", c.cascade.shrinkage);
    train->add_option("--train-init", c.train_init, "random|texture");
    train->add_option("--pose-variants", c.pose_variants, "3D variants stored in the model");
    train->add_option("--mean-shape", c.mean_shape, "29-point 3D mean shape file");
    seeded(train);
    common(train);

    auto* infer = app.add_subcommand("infer", "Align faces and write results.jsonl");
    infer->add_option("--manifest", c.manifest);
    infer->add_option("--model", c.model);
    infer->add_option("--gallery", c.gallery);
    infer->add_option("--out", c.out, "Output directory");
    seeded(infer);
    inits(infer);
    common(infer);

    auto* evaluate = app.add_subcommand("evaluate", "NME, CED and occlusion precision/recall");
    evaluate->add_option("--manifest", c.manifest);
    evaluate->add_option("--results", c.results, "results.jsonl (default: <out>/results.jsonl)");
    evaluate->add_option("--out", c.out, "Output directory");
    evaluate->add_flag("--plot-svg", c.plot_svg, "Also write ced.svg and pr.svg");
    evaluate->add_option("--fps-repeats", c.fps_repeats, "Re-run inference this many times to measure FPS");
    evaluate->add_option("--model", c.model);
    evaluate->add_option("--gallery", c.gallery);
    seeded(evaluate);
    inits(evaluate);
    common(evaluate);

    auto* analyze = app.add_subcommand("init-analyze", "Correlation distance vs NME per rank, early goodness");
    analyze->add_option("--manifest", c.manifest);
    analyze->add_option("--model", c.model);
    analyze->add_option("--gallery", c.gallery);
    analyze->add_option("--out", c.out, "Output directory");
    analyze->add_option("--zeta-sweep", c.zeta_sweep, "Comma-separated zeta values")->delimiter(',');
    seeded(analyze);
    inits(analyze);
    common(analyze);

    auto* plot = app.add_subcommand("plot", "SVG plots from ced.csv / pr.csv in --out");
    plot->add_option("--out", c.out);

    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
    synth->add_option("--out", c.out, "Output directory");
    synth->add_option("--count", c.synth_count);
    synth->add_option("--test-fraction", c.test_fraction);
    synth->add_option("--image-size", c.image_size);
    seeded(synth);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        log << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        log << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        log << "usage error: " << e.what() << "\n";
        return 2;
    }

    CLI::App* chosen = app.get_subcommands().front();
    c.subcommand = chosen->get_name();
    auto given = [&](const std::string& name) {
        const CLI::Option* o = chosen->get_option_no_throw(name);
        return o != nullptr && o->count() > 0;
    };
    if (given("--seed")) {
        c.seed = seed;
    }
    c.split = split;
    const bool tex_given = given("--l-texture");
    const bool pose_given = given("--l-pose");
    constexpr std::size_t budget = 10;
    if (tex_given && !pose_given) {
        l_pose = l_texture <= budget ? budget - l_texture : 0;
    } else if (pose_given && !tex_given) {
        l_texture = l_pose <= budget ? budget - l_pose : 0;
    }
    c.l_texture = l_texture;
    c.l_pose = l_pose;

    try {
        if (c.subcommand == "convert") {
            cmd_convert(c, log);
        } else if (c.subcommand == "gallery-build") {
            cmd_gallery_build(c, log);
        } else if (c.subcommand == "train") {
            cmd_train(c, log);
        } else if (c.subcommand == "infer") {
            if (c.l_texture + c.l_pose == 0) {
                throw UsageError("at least one initial shape is required");
            }
            cmd_infer(c, log);
        } else if (c.subcommand == "evaluate") {
            cmd_evaluate(c, log);
        } else if (c.subcommand == "init-analyze") {
            cmd_init_analyze(c, log);
        } else if (c.subcommand == "plot") {
            cmd_plot(c, log);
        } else if (c.subcommand == "synth") {
            cmd_synth(c, log);
        }
    } catch (const UsageError& e) {
        log << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace ricpr
