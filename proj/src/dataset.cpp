#include "esvforge/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "esvforge/error.hpp"
#include "esvforge/transcode.hpp"

namespace esvforge {

namespace fs = std::filesystem;

double remaining_time(double total_duration_s, double t) {
    if (!(t >= 0.0) || t > total_duration_s) {
        throw Error(ErrorCode::OutOfRange, "time " + std::to_string(t) + " outside [0, " +
                                               std::to_string(total_duration_s) + "]");
    }
    return total_duration_s - t;
}

namespace {

void check_component(const std::string& s, const char* what) {
    if (s.empty() || s.find_first_of("/\\") != std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be non-empty and free of path separators");
    }
}

std::int64_t to_millis(double seconds) { return std::llround(seconds * 1000.0); }

std::string format_3dp(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void make_dirs(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + p.string() + ": " + ec.message());
}

Frame render_signature(const FrameSignature& sig) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(sig.values.size()))));
    if (side <= 0 || static_cast<std::size_t>(side) * side != sig.values.size()) {
        throw Error(ErrorCode::InvalidArgument, "signature is not square");
    }
    const double peak = sig.values.empty() ? 0.0 : *std::max_element(sig.values.begin(), sig.values.end());
    Frame f(side, side, 1);
    for (std::size_t i = 0; i < sig.values.size(); ++i) {
        f.pixels[i] = peak > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * sig.values[i] / peak)) : 0;
    }
    return f;
}

}  // namespace

std::string encode_frame_filename(const FrameName& name) {
    check_component(name.surgery_id, "surgery id");
    check_component(name.clip_id, "clip id");
    if (name.frame_index < 0 || name.frame_index > 999'999) {
        throw Error(ErrorCode::InvalidArgument, "frame index does not fit six digits");
    }
    if (name.timestamp_ms < 0 || name.timestamp_ms > 999'999'999) {
        throw Error(ErrorCode::InvalidArgument, "timestamp does not fit nine millisecond digits");
    }
    char tail[64];
    std::snprintf(tail, sizeof tail, "_frame_%06lld_ts_%09lld.png", static_cast<long long>(name.frame_index),
                  static_cast<long long>(name.timestamp_ms));
    return name.surgery_id + "/" + name.clip_id + tail;
}

std::string encode_frame_filename(const std::string& surgery_id, const std::string& clip_id,
                                  std::int64_t frame_index, double timestamp_s) {
    if (!(timestamp_s >= 0.0)) throw Error(ErrorCode::InvalidArgument, "timestamp must be non-negative");
    return encode_frame_filename(FrameName{surgery_id, clip_id, frame_index, to_millis(timestamp_s)});
}

FrameName decode_frame_filename(std::string_view filename) {
    static const std::regex pattern(R"(^([^/\\]+)/([^/\\]+)_frame_([0-9]{6})_ts_([0-9]{9})\.png$)");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_match(filename.begin(), filename.end(), m, pattern)) {
        throw Error(ErrorCode::MalformedFilename, "not a keyframe filename: '" + std::string(filename) + "'");
    }
    FrameName out;
    out.surgery_id = m[1].str();
    out.clip_id = m[2].str();
    out.frame_index = std::stoll(m[3].str());
    out.timestamp_ms = std::stoll(m[4].str());
    return out;
}

DatasetRow make_row(const std::string& filename, const Triplet& label, double time_to_finish,
                    const TaxonomyRegistry& reg) {
    DatasetRow row;
    row.filename = filename;
    row.timeline_phase_label = reg.slug(Level::Phase, label.phase.ordinal);
    row.timeline_task_label = reg.slug(Level::Task, label.task.ordinal);
    row.timeline_action_label = reg.slug(Level::Action, label.action.ordinal);
    row.timeline_label = row.timeline_phase_label + "." + row.timeline_task_label + "." + row.timeline_action_label;
    row.time_to_finish = time_to_finish;
    return row;
}

std::string format_rows_csv(const std::vector<DatasetRow>& rows) {
    std::string out(kCsvHeader);
    out.push_back('\n');
    for (const auto& r : rows) {
        out += r.filename + ',' + r.timeline_label + ',' + r.timeline_phase_label + ',' + r.timeline_task_label +
               ',' + r.timeline_action_label + ',' + format_3dp(r.time_to_finish) + '\n';
    }
    return out;
}

std::vector<DatasetRow> parse_rows_csv(std::string_view text) {
    std::vector<DatasetRow> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || (line != kCsvHeader && line != std::string(kCsvHeader) + "\r")) {
        throw Error(ErrorCode::SchemaError, "labels CSV: unexpected header");
    }
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t begin = 0;
        while (true) {
            const auto comma = line.find(',', begin);
            cells.push_back(line.substr(begin, comma == std::string::npos ? std::string::npos : comma - begin));
            if (comma == std::string::npos) break;
            begin = comma + 1;
        }
        if (cells.size() != 6) throw Error(ErrorCode::SchemaError, "labels CSV: expected 6 columns");
        DatasetRow r{cells[0], cells[1], cells[2], cells[3], cells[4], 0.0};
        const auto& t = cells[5];
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), r.time_to_finish);
        if (ec != std::errc{} || ptr != t.data() + t.size()) {
            throw Error(ErrorCode::SchemaError, "labels CSV: bad time_to_finish '" + t + "'");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<DatasetRow> read_rows_csv(const fs::path& path) { return parse_rows_csv(read_text(path)); }

void DatasetManifest::absorb(const DatasetManifest& other) {
    keyframes += other.keyframes;
    cutouts += other.cutouts;
    rows += other.rows;
    dropped += other.dropped;
    for (const auto& [id, counts] : other.surgeries) surgeries[id] = counts;
}

DatasetManifest emit_dataset(const SurgeryTimeline& timeline, const std::vector<KeyframeRecord>& keyframes,
                             const fs::path& out_root, const EmitOptions& options) {
    const auto& reg = options.registry != nullptr ? *options.registry : TaxonomyRegistry::builtin();
    const auto& surgery = timeline.surgery_id;
    check_component(surgery, "surgery id");

    const auto frames_dir = out_root / "frames" / surgery;
    const auto cutouts_dir = out_root / "cutouts" / surgery;
    for (const auto& d : {frames_dir, cutouts_dir, out_root / "cutout-frames" / surgery,
                          out_root / "videos" / surgery, out_root / "labels"}) {
        make_dirs(d);
    }

    DatasetManifest manifest;
    manifest.root = out_root;
    std::vector<DatasetRow> rows;
    std::vector<std::pair<CutoutSpec, std::string>> cutouts;
    std::map<std::string, std::int64_t> last_ms;

    for (const auto& kf : keyframes) {
        if (kf.surgery_id != surgery) {
            throw Error(ErrorCode::InvalidArgument, "keyframe of " + kf.surgery_id + " passed to " + surgery);
        }
        const auto ms = to_millis(kf.timestamp_s);
        if (auto it = last_ms.find(kf.clip_id); it != last_ms.end() && ms <= it->second) {
            throw Error(ErrorCode::UnorderedInput, "keyframe timestamps of clip " + kf.clip_id +
                                                       " are not strictly increasing at millisecond resolution");
        }
        last_ms[kf.clip_id] = ms;

        const FrameName name{surgery, kf.clip_id, kf.frame_index, ms};
        const double global = timeline.clip_offset(kf.clip_id) + name.timestamp_s();
        const double left = remaining_time(timeline.total_duration_s, global);
        Triplet label;
        try {
            label = lookup_label(timeline, global);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Unlabelled) throw;
            ++manifest.dropped;
            continue;
        }

        const auto filename = encode_frame_filename(name);
        const auto target = out_root / "frames" / filename;
        std::optional<fs::path> source;
        if (options.frame_source) source = options.frame_source(kf);
        if (source) {
            std::error_code ec;
            fs::copy_file(*source, target, fs::copy_options::overwrite_existing, ec);
            if (ec) throw Error(ErrorCode::IoFailure, "cannot copy " + source->string() + ": " + ec.message());
        } else {
            write_png(render_signature(kf.signature), target);
        }

        const auto window = cutout_window(name.timestamp_s());
        auto cutout_name = filename.substr(0, filename.size() - 4) + ".mp4";
        cutouts.push_back({CutoutSpec{kf.clip_id, window.start_s, window.duration_s, cutout_name}, filename});
        rows.push_back(make_row(filename, label, left, reg));
    }

    std::string plan = "output_name,source_clip,start_s,duration_s\n";
    for (const auto& [spec, frame_file] : cutouts) {
        plan += spec.output_name + ',' + spec.source_clip + ',' + format_3dp(spec.start_s) + ',' +
                format_3dp(spec.duration_s) + '\n';
        if (options.run_transcoder && options.clip_video) {
            const auto video = options.clip_video(surgery, spec.source_clip);
            const auto cmd = transcode_plan(video, CutoutTask{spec, out_root / "cutouts" / spec.output_name},
                                            options.transcoder);
            if (run_plan(cmd) != 0) throw Error(ErrorCode::IoFailure, "transcoder failed: " + cmd.to_shell());
        }
    }
    write_text(cutouts_dir / "cutout_plan.csv", plan);
    write_text(out_root / "labels" / (surgery + ".csv"), format_rows_csv(rows));

    manifest.keyframes = rows.size();
    manifest.cutouts = cutouts.size();
    manifest.rows = rows.size();
    manifest.surgeries[surgery] = SurgeryCounts{rows.size(), manifest.dropped, timeline.total_duration_s};
    return manifest;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
    nlohmann::ordered_json doc;
    doc["schema"] = "esv-forge.dataset-manifest";
    doc["version"] = 1;
    doc["keyframes"] = manifest.keyframes;
    doc["cutouts"] = manifest.cutouts;
    doc["rows"] = manifest.rows;
    doc["dropped"] = manifest.dropped;
    auto& per = doc["surgeries"];
    per = nlohmann::ordered_json::object();
    for (const auto& [id, c] : manifest.surgeries) {
        per[id] = {{"rows", c.rows}, {"dropped", c.dropped}, {"total_duration_s", c.total_duration_s}};
    }
    return doc.dump(2) + "\n";
}

void merge_dataset(const fs::path& out_root, const DatasetManifest& manifest) {
    std::vector<DatasetRow> all;
    for (const auto& [id, counts] : manifest.surgeries) {
        auto rows = read_rows_csv(out_root / "labels" / (id + ".csv"));
        if (rows.size() != counts.rows) {
            throw Error(ErrorCode::IoFailure, "label file for " + id + " does not match its manifest entry");
        }
        all.insert(all.end(), rows.begin(), rows.end());
    }
    write_text(out_root / std::string(kLabelsCsvName), format_rows_csv(all));
    write_text(out_root / "manifest.json", manifest_to_json(manifest));
}

}  // namespace esvforge
