#include "ricpr/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ricpr/cascade.hpp"

namespace ricpr {

NmeResult nme(std::span<const AnnotatedShape> preds, std::span<const AnnotatedShape> truths,
              const LandmarkIndexMap& index_map)
{
    if (preds.size() != truths.size()) {
        throw Error("nme: " + std::to_string(preds.size()) + " predictions but " + std::to_string(truths.size()) +
                    " ground-truth shapes");
    }
    NmeResult out;
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto [l, r] = eye_centers(truths[i], index_map);
        if (std::hypot(l.x - r.x, l.y - r.y) == 0.0) {
            out.excluded.push_back(i);
            out.warnings.push_back("image " + std::to_string(i) + " excluded: zero inter-ocular distance");
            continue;
        }
        const double e = normalized_error(preds[i], truths[i], index_map);
        out.per_image.push_back(e);
        out.included.push_back(i);
        sum += e;
    }
    out.mean = out.per_image.empty() ? 0.0 : sum / static_cast<double>(out.per_image.size());
    return out;
}

std::vector<double> ced_curve(std::span<const double> errors, std::span<const double> thresholds)
{
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw Error("ced_curve: thresholds must be ascending");
    }
    std::vector<double> sorted(errors.begin(), errors.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) {
        if (sorted.empty()) {
            out.push_back(0.0);
            continue;
        }
        const auto below = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
        out.push_back(static_cast<double>(below) / static_cast<double>(sorted.size()));
    }
    return out;
}

std::vector<double> ced_thresholds(double max_error, int steps)
{
    if (!(max_error > 0.0) || steps < 1) {
        throw Error("ced_thresholds: need max_error > 0 and steps >= 1");
    }
    std::vector<double> out;
    for (int i = 0; i <= steps; ++i) {
        out.push_back(max_error * i / steps);
    }
    return out;
}

std::vector<double> pr_thresholds(std::span<const OcclusionScores> scores)
{
    std::vector<double> out;
    for (const auto& s : scores) {
        out.insert(out.end(), s.begin(), s.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

OcclusionPr occlusion_pr(std::span<const OcclusionScores> scores, std::span<const OcclusionFlags> truth,
                         std::span<const double> thresholds, double target_precision)
{
    if (scores.size() != truth.size()) {
        throw Error("occlusion_pr: " + std::to_string(scores.size()) + " score sets but " +
                    std::to_string(truth.size()) + " flag sets");
    }
    // Sort pooled (score, flag) pairs once; each threshold is then a binary search.
    std::vector<double> pos_scores;
    std::vector<double> neg_scores;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        for (std::size_t j = 0; j < kNumLandmarks; ++j) {
            if (!std::isfinite(scores[i][j])) {
                throw Error("occlusion_pr: non-finite score at image " + std::to_string(i));
            }
            (truth[i][j] ? pos_scores : neg_scores).push_back(scores[i][j]);
        }
    }
    std::sort(pos_scores.begin(), pos_scores.end());
    std::sort(neg_scores.begin(), neg_scores.end());
    auto at_least = [](const std::vector<double>& v, double t) {
        return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), t));
    };

    OcclusionPr out;
    out.target_precision = target_precision;
    out.recall_undefined = pos_scores.empty();
    bool reached = false;
    for (double t : thresholds) {
        PrPoint p;
        p.threshold = t;
        p.tp = at_least(pos_scores, t);
        p.fp = at_least(neg_scores, t);
        p.fn = pos_scores.size() - p.tp;
        p.precision = p.tp + p.fp == 0 ? 1.0 : static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp);
        p.recall = pos_scores.empty() ? 0.0 : static_cast<double>(p.tp) / static_cast<double>(pos_scores.size());
        if (p.precision >= target_precision) {
            reached = true;
            out.recall_at_precision = std::max(out.recall_at_precision, p.recall);
        }
        out.points.push_back(p);
    }
    out.no_operating_point = !reached;
    return out;
}

double frames_per_second(std::size_t images, double seconds)
{
    if (images == 0) {
        throw Error("frames_per_second: no images");
    }
    if (!(seconds > 0.0)) {
        throw Error("frames_per_second: elapsed time must be positive");
    }
    return static_cast<double>(images) / seconds;
}

FpsStats summarize_fps(std::span<const double> runs, std::size_t images)
{
    if (runs.empty()) {
        throw Error("summarize_fps: no runs");
    }
    FpsStats s;
    s.images = images;
    s.runs.assign(runs.begin(), runs.end());
    double sum = 0.0;
    for (double r : runs) {
        sum += r;
    }
    s.mean = sum / static_cast<double>(runs.size());
    double var = 0.0;
    for (double r : runs) {
        var += (r - s.mean) * (r - s.mean);
    }
    s.stddev = std::sqrt(var / static_cast<double>(runs.size()));
    return s;
}

FpsStats measure_fps(std::size_t images, const std::function<void(std::size_t)>& process, int repeats)
{
    if (images == 0) {
        throw Error("measure_fps: empty dataset");
    }
    if (repeats < 1) {
        throw Error("measure_fps: repeats must be >= 1");
    }
    for (std::size_t i = 0; i < images; ++i) {
        process(i);
    }
    std::vector<double> runs;
    for (int r = 0; r < repeats; ++r) {
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < images; ++i) {
            process(i);
        }
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        runs.push_back(frames_per_second(images, std::max(elapsed.count(), 1e-9)));
    }
    return summarize_fps(runs, images);
}

std::string summary_json(const EvalSummary& s)
{
    nlohmann::ordered_json j;
    j["images"] = s.images;
    j["evaluated"] = s.nme.per_image.size();
    j["excluded"] = s.nme.excluded;
    j["nme"] = s.nme.mean;
    j["nme_x100"] = s.nme.mean * 100.0;
    j["nme_normalizer"] = "inter-ocular distance (eye centers from the landmark index map)";
    nlohmann::ordered_json pr;
    pr["pooling"] = s.pr.pooling;
    pr["target_precision"] = s.pr.target_precision;
    pr["recall_at_precision"] = s.pr.recall_at_precision;
    pr["no_operating_point"] = s.pr.no_operating_point;
    pr["recall_undefined"] = s.pr.recall_undefined;
    pr["thresholds"] = s.pr.points.size();
    j["occlusion"] = std::move(pr);
    nlohmann::ordered_json ced;
    for (std::size_t i = 0; i < s.ced_thresholds.size(); ++i) {
        const double t = s.ced_thresholds[i];
        if (std::abs(t - 0.05) < 1e-12 || std::abs(t - 0.1) < 1e-12 || std::abs(t - 0.15) < 1e-12) {
            char key[32];
            std::snprintf(key, sizeof key, "%.2f", t);
            ced[key] = s.ced[i];
        }
    }
    j["ced_at"] = std::move(ced);
    if (s.fps) {
        nlohmann::ordered_json f;
        f["mean"] = s.fps->mean;
        f["stddev"] = s.fps->stddev;
        f["runs"] = s.fps->runs;
        f["images"] = s.fps->images;
        j["fps"] = std::move(f);
    } else {
        j["fps"] = nullptr;
    }
    j["warnings"] = s.nme.warnings;
    return j.dump(2) + "\n";
}

namespace {

std::string fmt(double v)
{
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt3(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

struct Plot {
    double x0 = 60, y0 = 20, w = 400, h = 300;
    double xmax = 1.0;

    double px(double x) const { return x0 + w * std::clamp(x / xmax, 0.0, 1.0); }
    double py(double y) const { return y0 + h * (1.0 - std::clamp(y, 0.0, 1.0)); }
};

std::string svg_frame(const Plot& p, const std::string& title, const std::string& xlabel, const std::string& ylabel,
                      int xticks)
{
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"500\" height=\"380\" font-family=\"sans-serif\" "
         "font-size=\"11\">\n";
    o << "<rect width=\"500\" height=\"380\" fill=\"white\"/>\n";
    o << "<text x=\"260\" y=\"14\" text-anchor=\"middle\">" << title << "</text>\n";
    o << "<rect x=\"" << p.x0 << "\" y=\"" << p.y0 << "\" width=\"" << p.w << "\" height=\"" << p.h
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= xticks; ++i) {
        const double v = p.xmax * i / xticks;
        o << "<line x1=\"" << fmt3(p.px(v)) << "\" y1=\"" << p.y0 << "\" x2=\"" << fmt3(p.px(v)) << "\" y2=\""
          << p.y0 + p.h << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << fmt3(p.px(v)) << "\" y=\"" << p.y0 + p.h + 14 << "\" text-anchor=\"middle\">"
          << fmt3(v) << "</text>\n";
    }
    for (int i = 0; i <= 10; ++i) {
        const double v = i / 10.0;
        o << "<line x1=\"" << p.x0 << "\" y1=\"" << fmt3(p.py(v)) << "\" x2=\"" << p.x0 + p.w << "\" y2=\""
          << fmt3(p.py(v)) << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << p.x0 - 6 << "\" y=\"" << fmt3(p.py(v) + 4) << "\" text-anchor=\"end\">" << fmt3(v)
          << "</text>\n";
    }
    o << "<text x=\"" << p.x0 + p.w / 2 << "\" y=\"" << p.y0 + p.h + 32 << "\" text-anchor=\"middle\">" << xlabel
      << "</text>\n";
    o << "<text x=\"14\" y=\"" << p.y0 + p.h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << p.y0 + p.h / 2 << ")\">" << ylabel << "</text>\n";
    return o.str();
}

} // namespace

std::string ced_csv(std::span<const double> thresholds, std::span<const double> fractions)
{
    if (thresholds.size() != fractions.size()) {
        throw Error("ced_csv: size mismatch");
    }
    std::string out = "threshold,fraction\n";
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        out += fmt(thresholds[i]) + "," + fmt(fractions[i]) + "\n";
    }
    return out;
}

std::string pr_csv(const OcclusionPr& pr)
{
    std::string out = "threshold,tp,fp,fn,precision,recall\n";
    for (const auto& p : pr.points) {
        out += fmt(p.threshold) + "," + std::to_string(p.tp) + "," + std::to_string(p.fp) + "," +
               std::to_string(p.fn) + "," + fmt(p.precision) + "," + fmt(p.recall) + "\n";
    }
    return out;
}

std::string ced_svg(std::span<const double> thresholds, std::span<const double> fractions)
{
    Plot p;
    p.xmax = 0.25;
    std::string out = svg_frame(p, "Cumulative error distribution", "NME", "Fraction of images", 5);
    out += "<polyline fill=\"none\" stroke=\"#c00\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < thresholds.size() && i < fractions.size(); ++i) {
        if (thresholds[i] > p.xmax) {
            break;
        }
        out += fmt3(p.px(thresholds[i])) + "," + fmt3(p.py(fractions[i])) + " ";
    }
    out += "\"/>\n</svg>\n";
    return out;
}

std::string pr_svg(const OcclusionPr& pr)
{
    Plot p;
    p.xmax = 1.0;
    std::string out = svg_frame(p, "Occlusion precision/recall", "Recall", "Precision", 10);
    out += "<polyline fill=\"none\" stroke=\"#00c\" stroke-width=\"1.5\" points=\"";
    for (const auto& pt : pr.points) {
        out += fmt3(p.px(pt.recall)) + "," + fmt3(p.py(pt.precision)) + " ";
    }
    out += "\"/>\n";
    out += "<line x1=\"" + fmt3(p.px(0)) + "\" y1=\"" + fmt3(p.py(pr.target_precision)) + "\" x2=\"" +
           fmt3(p.px(1)) + "\" y2=\"" + fmt3(p.py(pr.target_precision)) +
           "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n</svg>\n";
    return out;
}

} // namespace ricpr
