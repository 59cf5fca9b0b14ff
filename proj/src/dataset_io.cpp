#include "ricpr/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace ricpr {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

class RowError : public Error {
public:
    RowError(const std::string& field, const std::string& message) : Error("field '" + field + "': " + message) {}
};

double number(const json& v, const std::string& field)
{
    if (!v.is_number()) {
        throw RowError(field, "expected a number");
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) {
        throw RowError(field, "non-finite value");
    }
    return d;
}

std::vector<Landmark> point_list(const json& v, const std::string& field, std::size_t arity)
{
    if (!v.is_array()) {
        throw RowError(field, "expected an array of [x, y] pairs");
    }
    if (v.size() != arity) {
        throw RowError(field, "expected " + std::to_string(arity) + " points, got " + std::to_string(v.size()));
    }
    std::vector<Landmark> out;
    out.reserve(arity);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto& p = v[i];
        const std::string sub = field + "[" + std::to_string(i) + "]";
        if (!p.is_array() || p.size() != 2) {
            throw RowError(sub, "expected [x, y]");
        }
        out.push_back({number(p[0], sub), number(p[1], sub)});
    }
    return out;
}

std::vector<bool> flag_list(const json& v, const std::string& field, std::size_t arity)
{
    if (!v.is_array()) {
        throw RowError(field, "expected an array of booleans");
    }
    if (v.size() != arity) {
        throw RowError(field, "expected " + std::to_string(arity) + " flags, got " + std::to_string(v.size()));
    }
    std::vector<bool> out;
    for (const auto& f : v) {
        if (f.is_boolean()) {
            out.push_back(f.get<bool>());
        } else if (f.is_number_integer() && (f.get<int>() == 0 || f.get<int>() == 1)) {
            out.push_back(f.get<int>() == 1);
        } else {
            throw RowError(field, "expected booleans (or 0/1)");
        }
    }
    return out;
}

DatasetRecord parse_record(const json& row, std::size_t index)
{
    if (!row.is_object()) {
        throw RowError("<row>", "expected a JSON object");
    }
    DatasetRecord rec;
    if (row.contains("id")) {
        const auto& id = row["id"];
        if (id.is_string()) {
            rec.id = id.get<std::string>();
        } else if (id.is_number_integer()) {
            rec.id = std::to_string(id.get<long long>());
        } else {
            throw RowError("id", "expected a string or integer");
        }
    } else {
        rec.id = std::to_string(index);
    }
    if (!row.contains("image") || !row["image"].is_string() || row["image"].get<std::string>().empty()) {
        throw RowError("image", "missing or not a non-empty string");
    }
    rec.image = row["image"].get<std::string>();

    if (!row.contains("box") || !row["box"].is_array() || row["box"].size() != 4) {
        throw RowError("box", "expected [x, y, w, h]");
    }
    const auto& b = row["box"];
    rec.box = {number(b[0], "box"), number(b[1], "box"), number(b[2], "box"), number(b[3], "box")};
    if (!rec.box.valid()) {
        throw RowError("box", "width and height must be positive");
    }

    const bool has_landmarks = row.contains("landmarks") && !row["landmarks"].is_null();
    const bool has_occluded = row.contains("occluded") && !row["occluded"].is_null();
    if (has_landmarks != has_occluded) {
        throw RowError(has_landmarks ? "occluded" : "landmarks", "landmarks and occluded must appear together");
    }
    if (has_landmarks) {
        const auto pts = point_list(row["landmarks"], "landmarks", kNumLandmarks);
        const auto flags = flag_list(row["occluded"], "occluded", kNumLandmarks);
        AnnotatedShape s;
        for (std::size_t j = 0; j < kNumLandmarks; ++j) {
            s.points[j] = pts[j];
            s.occluded[j] = flags[j];
        }
        rec.truth = s;
    }
    if (row.contains("fiducials") && !row["fiducials"].is_null()) {
        const auto pts = point_list(row["fiducials"], "fiducials", kNumFiducials);
        try {
            auto f = FiducialFive::from_array(pts);
            f.validate();
            rec.fiducials = f;
        } catch (const Error& e) {
            throw RowError("fiducials", e.what());
        }
    }
    if (!row.contains("split") || !row["split"].is_string()) {
        throw RowError("split", "missing or not a string");
    }
    try {
        rec.split = split_from_string(row["split"].get<std::string>());
    } catch (const Error& e) {
        throw RowError("split", e.what());
    }
    return rec;
}

ordered_json point_array(std::span<const Landmark> pts)
{
    ordered_json a = ordered_json::array();
    for (const auto& p : pts) {
        a.push_back({p.x, p.y});
    }
    return a;
}

ordered_json finite_or_null(double v)
{
    return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

double from_nullable(const json& v, const std::string& field)
{
    if (v.is_null()) {
        return std::numeric_limits<double>::infinity();
    }
    return number(v, field);
}

std::vector<std::string> split_fields(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',' || c == ' ' || c == '\t' || c == '\r') {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) {
        out.push_back(cur);
    }
    return out;
}

std::vector<std::vector<double>> numeric_rows(const std::string& text, std::size_t arity, const std::string& what)
{
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = split_fields(line);
        if (fields.empty()) {
            continue;
        }
        if (fields.size() != arity) {
            throw Error(what + " line " + std::to_string(line_no) + ": expected " + std::to_string(arity) +
                        " values, got " + std::to_string(fields.size()));
        }
        std::vector<double> row;
        for (const auto& f : fields) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(f, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != f.size() || !std::isfinite(v)) {
                throw Error(what + " line " + std::to_string(line_no) + ": bad number '" + f + "'");
            }
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

std::string to_string(Split split)
{
    return split == Split::Train ? "train" : "test";
}

Split split_from_string(const std::string& name)
{
    if (name == "train") {
        return Split::Train;
    }
    if (name == "test") {
        return Split::Test;
    }
    throw Error("unknown split '" + name + "' (expected train or test)");
}

std::filesystem::path DatasetManifest::resolve(const DatasetRecord& record) const
{
    if (record.image.is_absolute() || base_dir.empty()) {
        return record.image;
    }
    return base_dir / record.image;
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].split == split) {
            out.push_back(i);
        }
    }
    return out;
}

DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir)
{
    DatasetManifest manifest;
    manifest.base_dir = base_dir;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const json row = json::parse(line);
            DatasetRecord rec = parse_record(row, manifest.records.size());
            rec.line = line_no;
            manifest.records.push_back(std::move(rec));
        } catch (const json::exception& e) {
            throw Error("manifest line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        } catch (const Error& e) {
            throw Error("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path)
{
    return parse_manifest(read_text_file(path), path.parent_path());
}

std::string format_manifest(const DatasetManifest& manifest)
{
    std::string out;
    for (const auto& r : manifest.records) {
        ordered_json row;
        row["id"] = r.id;
        row["image"] = r.image.generic_string();
        row["box"] = {r.box.x, r.box.y, r.box.width, r.box.height};
        if (r.truth) {
            row["landmarks"] = point_array(r.truth->points);
            row["occluded"] = ordered_json(std::vector<bool>(r.truth->occluded.begin(), r.truth->occluded.end()));
        }
        if (r.fiducials) {
            const auto f = r.fiducials->as_array();
            row["fiducials"] = point_array(f);
        }
        row["split"] = to_string(r.split);
        out += row.dump();
        out += '\n';
    }
    return out;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path)
{
    write_text_file(path, format_manifest(manifest));
}

GrayImage load_image_gray(const std::filesystem::path& path)
{
    std::vector<std::uint8_t> bytes;
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw Error("cannot open image '" + path.string() + "'");
        }
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    if (bytes.empty()) {
        throw Error("image '" + path.string() + "' is empty");
    }
    cv::Mat decoded;
    try {
        decoded = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception&) {
        decoded.release();
    }
    if (decoded.empty() || decoded.depth() != CV_8U) {
        throw Error("cannot decode image '" + path.string() + "' (unsupported, 16-bit or truncated)");
    }
    GrayImage out(decoded.cols, decoded.rows);
    const int channels = decoded.channels();
    for (int y = 0; y < decoded.rows; ++y) {
        const std::uint8_t* row = decoded.ptr<std::uint8_t>(y);
        for (int x = 0; x < decoded.cols; ++x) {
            const std::uint8_t* px = row + static_cast<std::ptrdiff_t>(x) * channels;
            if (channels == 1 || channels == 2) {
                out.at(x, y) = px[0];
            } else {
                // OpenCV stores colour as BGR(A).
                out.at(x, y) = luma_bt601(px[2], px[1], px[0]);
            }
        }
    }
    // Truncated files can decode to a partial raster; require the end marker.
    const bool png = bytes.size() >= 8 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G';
    const bool jpeg = bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8;
    if (png) {
        const std::string tail(bytes.end() - std::min<std::size_t>(bytes.size(), 12), bytes.end());
        if (tail.find("IEND") == std::string::npos) {
            throw Error("image '" + path.string() + "' is truncated");
        }
    } else if (jpeg) {
        std::size_t end = bytes.size();
        while (end > 0 && bytes[end - 1] == 0) {
            --end;
        }
        if (end < 2 || bytes[end - 2] != 0xFF || bytes[end - 1] != 0xD9) {
            throw Error("image '" + path.string() + "' is truncated");
        }
    }
    return out;
}

void save_image_png(const GrayImage& image, const std::filesystem::path& path)
{
    if (image.empty()) {
        throw Error("cannot save an empty image");
    }
    cv::Mat m(image.height(), image.width(), CV_8UC1, const_cast<std::uint8_t*>(image.pixels().data()));
    std::vector<std::uint8_t> buf;
    if (!cv::imencode(".png", m, buf)) {
        throw Error("PNG encoding failed for '" + path.string() + "'");
    }
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw Error("cannot write '" + path.string() + "'");
    }
}

std::string format_result(const ResultRecord& r)
{
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        if (!is_finite(r.shape.points[j])) {
            throw Error("result '" + r.id + "': non-finite coordinate at landmark " + std::to_string(j));
        }
        if (!(r.occlusion_scores[j] >= 0.0 && r.occlusion_scores[j] <= 1.0)) {
            throw Error("result '" + r.id + "': occlusion score outside [0, 1] at landmark " + std::to_string(j));
        }
    }
    for (double v : {r.fusion.variance, r.fusion.texture_variance, r.fusion.pose_variance}) {
        if (std::isnan(v)) {
            throw Error("result '" + r.id + "': NaN fusion variance");
        }
    }
    if (r.timing_ms && !std::isfinite(*r.timing_ms)) {
        throw Error("result '" + r.id + "': non-finite timing");
    }
    ordered_json row;
    row["id"] = r.id;
    row["landmarks"] = point_array(r.shape.points);
    row["occluded"] = ordered_json(std::vector<bool>(r.shape.occluded.begin(), r.shape.occluded.end()));
    row["occlusion_scores"] = ordered_json(std::vector<double>(r.occlusion_scores.begin(), r.occlusion_scores.end()));
    ordered_json f;
    f["branch"] = to_string(r.fusion.branch);
    f["v"] = finite_or_null(r.fusion.variance);
    f["v_texture"] = finite_or_null(r.fusion.texture_variance);
    f["v_pose"] = finite_or_null(r.fusion.pose_variance);
    f["dropped"] = r.fusion.dropped;
    f["warnings"] = r.fusion.warnings;
    f["normalizer"] = r.fusion.normalizer;
    row["fusion"] = std::move(f);
    if (r.timing_ms) {
        row["timing_ms"] = *r.timing_ms;
    }
    return row.dump();
}

ResultRecord parse_result(const std::string& line)
{
    const json row = json::parse(line);
    ResultRecord r;
    if (!row.contains("id") || !row["id"].is_string()) {
        throw RowError("id", "missing");
    }
    r.id = row["id"].get<std::string>();
    const auto pts = point_list(row.at("landmarks"), "landmarks", kNumLandmarks);
    const auto flags = flag_list(row.at("occluded"), "occluded", kNumLandmarks);
    const auto& scores = row.at("occlusion_scores");
    if (!scores.is_array() || scores.size() != kNumLandmarks) {
        throw RowError("occlusion_scores", "expected 29 numbers");
    }
    for (std::size_t j = 0; j < kNumLandmarks; ++j) {
        r.shape.points[j] = pts[j];
        r.shape.occluded[j] = flags[j];
        r.occlusion_scores[j] = number(scores[j], "occlusion_scores");
    }
    const auto& f = row.at("fusion");
    r.fusion.branch = fusion_branch_from_string(f.at("branch").get<std::string>());
    r.fusion.variance = from_nullable(f.at("v"), "v");
    r.fusion.texture_variance = from_nullable(f.at("v_texture"), "v_texture");
    r.fusion.pose_variance = from_nullable(f.at("v_pose"), "v_pose");
    r.fusion.dropped = f.at("dropped").get<std::vector<std::size_t>>();
    r.fusion.warnings = f.at("warnings").get<std::vector<std::string>>();
    r.fusion.normalizer = f.at("normalizer").get<std::string>();
    if (row.contains("timing_ms")) {
        r.timing_ms = number(row["timing_ms"], "timing_ms");
    }
    return r;
}

void write_results(const std::vector<ResultRecord>& results, const std::filesystem::path& path)
{
    std::string out;
    for (const auto& r : results) {
        out += format_result(r);
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<ResultRecord> read_results(const std::filesystem::path& path)
{
    std::vector<ResultRecord> out;
    std::istringstream in(read_text_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(parse_result(line));
        } catch (const std::exception& e) {
            throw Error("results line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

MeanShape3D parse_mean_shape(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto next = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) {
                line.erase(hash);
            }
            if (line.find_first_not_of(" \t\r") != std::string::npos) {
                return true;
            }
        }
        return false;
    };
    auto fail = [&](const std::string& msg) { return Error("mean shape line " + std::to_string(line_no) + ": " + msg); };

    if (!next()) {
        throw Error("mean shape: empty file");
    }
    {
        std::istringstream h(line);
        std::string magic, version_word;
        int version = 0;
        if (!(h >> magic >> version_word >> version) || magic != "ricpr-mean-shape" || version_word != "version") {
            throw fail("expected header 'ricpr-mean-shape version 1'");
        }
        if (version != 1) {
            throw fail("unsupported version " + std::to_string(version));
        }
    }
    if (!next()) {
        throw fail("missing arity line");
    }
    std::size_t arity = 0;
    {
        std::istringstream h(line);
        std::string word;
        if (!(h >> word >> arity) || word != "arity") {
            throw fail("expected 'arity N'");
        }
    }
    std::vector<int> ids;
    std::vector<Point3> points;
    for (std::size_t i = 0; i < arity; ++i) {
        if (!next()) {
            throw fail("expected " + std::to_string(arity) + " point rows, got " + std::to_string(i));
        }
        std::istringstream row(line);
        int id = 0;
        Point3 p;
        std::string extra;
        if (!(row >> id >> p.x >> p.y >> p.z) || (row >> extra)) {
            throw fail("expected '<id> <x> <y> <z>'");
        }
        ids.push_back(id);
        points.push_back(p);
    }
    if (next()) {
        throw fail("unexpected trailing content");
    }
    MeanShape3D shape{std::move(ids), std::move(points)};
    shape.validate();
    return shape;
}

MeanShape3D load_mean_shape(const std::filesystem::path& path)
{
    try {
        return parse_mean_shape(read_text_file(path));
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

std::string format_mean_shape(const MeanShape3D& shape)
{
    std::ostringstream out;
    out.precision(17);
    out << "ricpr-mean-shape version 1\n";
    out << "arity " << shape.arity() << '\n';
    for (std::size_t i = 0; i < shape.arity(); ++i) {
        out << shape.ids[i] << ' ' << shape.points[i].x << ' ' << shape.points[i].y << ' ' << shape.points[i].z << '\n';
    }
    return out.str();
}

void save_mean_shape(const MeanShape3D& shape, const std::filesystem::path& path)
{
    write_text_file(path, format_mean_shape(shape));
}

DatasetManifest convert_cofw(const CofwConversion& input)
{
    const auto shapes = numeric_rows(input.shapes_text, 3 * kNumLandmarks, "shapes");
    const auto boxes = numeric_rows(input.boxes_text, 4, "boxes");
    if (shapes.size() != boxes.size()) {
        throw Error("convert: " + std::to_string(shapes.size()) + " shape rows but " + std::to_string(boxes.size()) +
                    " box rows");
    }
    if (shapes.size() != input.image_paths.size()) {
        throw Error("convert: " + std::to_string(shapes.size()) + " shape rows but " +
                    std::to_string(input.image_paths.size()) + " image paths");
    }
    const double shift = input.one_based ? 1.0 : 0.0;
    DatasetManifest manifest;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        DatasetRecord r;
        r.id = input.id_prefix + std::to_string(i);
        r.image = input.image_paths[i];
        r.box = {boxes[i][0] - shift, boxes[i][1] - shift, boxes[i][2], boxes[i][3]};
        if (!r.box.valid()) {
            throw Error("convert: box row " + std::to_string(i + 1) + " has non-positive size");
        }
        AnnotatedShape s;
        for (std::size_t j = 0; j < kNumLandmarks; ++j) {
            s.points[j] = {shapes[i][j] - shift, shapes[i][kNumLandmarks + j] - shift};
            const double occ = shapes[i][2 * kNumLandmarks + j];
            if (occ != 0.0 && occ != 1.0) {
                throw Error("convert: shape row " + std::to_string(i + 1) + " has occlusion flag " +
                            std::to_string(occ) + " (expected 0 or 1)");
            }
            s.occluded[j] = occ == 1.0;
        }
        r.truth = s;
        r.split = input.split;
        manifest.records.push_back(std::move(r));
    }
    return manifest;
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write '" + path.string() + "'");
    }
    out << text;
    if (!out) {
        throw Error("write failed for '" + path.string() + "'");
    }
}

} // namespace ricpr
