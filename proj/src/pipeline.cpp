#include "esvforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "esvforge/error.hpp"
#include "esvforge/metrics.hpp"
#include "esvforge/param_file.hpp"
#include "esvforge/transcode.hpp"

namespace esvforge {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kTimelinesFile = "timelines.json";
constexpr const char* kKeyframesFile = "keyframes.json";
constexpr const char* kSignaturesFile = "signatures.bin";
constexpr const char* kScoresFile = "prediction_scores.csv";
constexpr const char* kIndexFile = "timeline_index.json";

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

void require_dir(const fs::path& p, const char* what) {
    if (p.empty()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " path is not set");
    if (!fs::is_directory(p)) throw Error(ErrorCode::IoFailure, std::string(what) + " directory not found: " + p.string());
}

void require_file(const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::IoFailure, std::string(what) + " not found: " + p.string());
}

std::string shortest(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, end);
}

double now_ms() {
    using namespace std::chrono;
    return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

std::vector<ClipManifest> load_manifest(const fs::path& input, const std::string& surgery) {
    const auto path = input / surgery / "clips.csv";
    require_file(path, "clip manifest");
    auto clips = parse_clip_manifest(read_text(path));
    std::erase_if(clips, [&](const ClipManifest& c) { return c.surgery_id != surgery; });
    std::sort(clips.begin(), clips.end(),
              [](const ClipManifest& a, const ClipManifest& b) { return a.part_index < b.part_index; });
    return clips;
}

fs::path annotation_file(const fs::path& dir, const std::string& surgery) {
    for (const auto& p : {dir / surgery / (surgery + ".json"), dir / (surgery + ".json")}) {
        if (fs::is_regular_file(p)) return p;
    }
    throw Error(ErrorCode::IoFailure, "no annotation export for " + surgery + " under " + dir.string());
}

std::int64_t frame_number(const fs::path& p) {
    const auto stem = p.stem().string();
    std::int64_t n = 0;
    const auto digits = stem.substr(std::string_view("frame_").size());
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
        throw Error(ErrorCode::MalformedFilename, "unexpected frame file " + p.string());
    }
    return n;
}

struct KeyframeSet {
    int side = kSignatureSide;
    std::vector<KeyframeRecord> records;
};

void save_keyframes(const fs::path& out, const KeyframeSet& set) {
    ordered_json doc;
    doc["schema"] = "esv-forge.keyframes";
    doc["version"] = 1;
    doc["signature_side"] = set.side;
    auto& list = doc["keyframes"];
    list = ordered_json::array();
    const std::size_t dim = static_cast<std::size_t>(set.side) * set.side;
    Matrix sig(set.records.size(), dim);
    for (std::size_t i = 0; i < set.records.size(); ++i) {
        const auto& r = set.records[i];
        list.push_back({{"surgery", r.surgery_id},
                        {"clip", r.clip_id},
                        {"frame_index", r.frame_index},
                        {"timestamp_s", r.timestamp_s}});
        if (r.signature.values.size() != dim) throw Error(ErrorCode::DimensionMismatch, "signature width");
        std::copy(r.signature.values.begin(), r.signature.values.end(), sig.row(i).begin());
    }
    write_text(out / kKeyframesFile, doc.dump(2) + "\n");
    const auto bytes = encode_tensors({{"signatures", sig}});
    std::ofstream bin(out / kSignaturesFile, std::ios::binary | std::ios::trunc);
    bin.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!bin) throw Error(ErrorCode::IoFailure, "cannot write signatures");
}

KeyframeSet load_keyframes(const fs::path& out) {
    require_file(out / kKeyframesFile, "keyframe list (run the keyframes stage first)");
    const auto raw = read_text(out / kSignaturesFile);
    const auto tensors = decode_tensors(std::vector<std::uint8_t>(raw.begin(), raw.end()));
    const auto it = tensors.find("signatures");
    if (it == tensors.end()) throw Error(ErrorCode::SchemaError, "signature file has no signatures tensor");
    json doc;
    try {
        doc = json::parse(read_text(out / kKeyframesFile));
        if (doc.at("schema") != "esv-forge.keyframes") throw Error(ErrorCode::SchemaError, "keyframes schema");
        if (doc.at("version") != 1) throw Error(ErrorCode::VersionMismatch, "keyframes version");
        KeyframeSet set;
        set.side = doc.at("signature_side").get<int>();
        const auto& list = doc.at("keyframes");
        if (list.size() != it->second.rows()) {
            throw Error(ErrorCode::DimensionMismatch, "keyframe list and signatures disagree");
        }
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto& k = list[i];
            const auto row = it->second.row(i);
            set.records.push_back({k.at("surgery").get<std::string>(), k.at("clip").get<std::string>(),
                                   k.at("frame_index").get<std::int64_t>(), k.at("timestamp_s").get<double>(),
                                   FrameSignature{{row.begin(), row.end()}}});
        }
        return set;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("keyframes.json: ") + e.what());
    }
}

std::vector<SurgeryTimeline> load_timelines(const fs::path& out, const TaxonomyRegistry& reg) {
    require_file(out / kTimelinesFile, "timelines (run the import stage first)");
    return timelines_from_json(read_text(out / kTimelinesFile), reg);
}

std::string format_fact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

struct RowKey {
    std::string surgery;
    std::string clip;
    std::int64_t frame = 0;
    auto operator<=>(const RowKey&) const = default;
};

}  // namespace

// ---------------------------------------------------------------- config

void PipelineConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
    if (!(threshold > 0.0 && threshold < 1.0)) fail("threshold must lie in (0, 1)");
    if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) fail("frame-rate must be positive");
    if (signature_side < 1 || signature_side > 256) fail("signature-side must lie in [1, 256]");
    if (sequence_length < 1 || sequence_length > 4096) fail("sequence-length must lie in [1, 4096]");
    if (smoothing_k < 1 || smoothing_k > 1000) fail("smoothing-k must lie in [1, 1000]");
    for (double w : {alpha, beta, gamma}) {
        if (!(w >= 0.0) || !std::isfinite(w)) fail("loss weights must be finite and non-negative");
    }
    if (source != "annotation" && source != "prediction") fail("source must be annotation or prediction");
    if (jobs < 0) fail("jobs must be non-negative");
    if (transcoder.empty()) fail("transcoder must not be empty");
    parse_bind(bind);
}

fs::path PipelineConfig::predictions_path() const {
    return predictions.empty() ? output / "predictions.csv" : predictions;
}

fs::path PipelineConfig::targets_path() const {
    return targets.empty() ? output / std::string(kLabelsCsvName) : targets;
}

void bind_options(CLI::App& app, PipelineConfig& c) {
    app.add_option("--input", c.input, "Root with <surgery>/clips.csv and <surgery>/<clip>/frame_NNNNNN.png");
    app.add_option("--annotations", c.annotations, "Directory of annotation exports (default: input)");
    app.add_option("--output", c.output, "Output root");
    app.add_option("--params", c.params, "Head parameter file(s); several form a mean ensemble");
    app.add_option("--taxonomy", c.taxonomy, "Taxonomy declaration (default: built in)");
    app.add_option("--predictions", c.predictions, "Prediction CSV (default: <output>/predictions.csv)");
    app.add_option("--targets", c.targets, "Target CSV (default: <output>/timeline_labels.csv)");
    app.add_option("--static-dir", c.static_dir, "Directory served under / by the index service");
    app.add_option("--threshold", c.threshold, "Keyframe cosine-distance threshold")->capture_default_str();
    app.add_option("--frame-rate", c.frame_rate, "Frame rate of the exported frame sequences")->capture_default_str();
    app.add_option("--crop", c.crop, "Crop to the field of view before signatures")->capture_default_str();
    app.add_option("--signature-side", c.signature_side, "Signature grid side")->capture_default_str();
    app.add_option("--sequence-length", c.sequence_length, "Keyframes per inference window")->capture_default_str();
    app.add_option("--smoothing-k", c.smoothing_k, "Longest run removed by prediction smoothing")
        ->capture_default_str();
    app.add_option("--alpha", c.alpha, "Phase loss weight")->capture_default_str();
    app.add_option("--beta", c.beta, "Task loss weight")->capture_default_str();
    app.add_option("--gamma", c.gamma, "Action loss weight")->capture_default_str();
    app.add_option("--source", c.source, "Index source: annotation or prediction")->capture_default_str();
    app.add_option("--bind", c.bind, "Service address host:port")->capture_default_str();
    app.add_flag("--run-transcoder", c.run_transcoder, "Execute cutout commands instead of only planning them");
    app.add_option("--transcoder", c.transcoder, "Transcoder program")->capture_default_str();
    app.add_option("--jobs", c.jobs, "Worker threads (0: all cores)")->capture_default_str();
}

std::string to_config_text(const PipelineConfig& c) {
    std::string out;
    auto str = [&](const char* key, const std::string& v) { out += std::string(key) + " = " + json(v).dump() + "\n"; };
    auto path = [&](const char* key, const fs::path& p) {
        if (!p.empty()) str(key, p.string());
    };
    auto num = [&](const char* key, double v) { out += std::string(key) + " = " + shortest(v) + "\n"; };
    auto boolean = [&](const char* key, bool v) { out += std::string(key) + " = " + (v ? "true" : "false") + "\n"; };

    path("input", c.input);
    path("annotations", c.annotations);
    path("output", c.output);
    if (!c.params.empty()) {
        out += "params = [";
        for (std::size_t i = 0; i < c.params.size(); ++i) {
            out += (i ? ", " : "") + json(c.params[i].string()).dump();
        }
        out += "]\n";
    }
    path("taxonomy", c.taxonomy);
    path("predictions", c.predictions);
    path("targets", c.targets);
    path("static-dir", c.static_dir);
    num("threshold", c.threshold);
    num("frame-rate", c.frame_rate);
    boolean("crop", c.crop);
    out += "signature-side = " + std::to_string(c.signature_side) + "\n";
    out += "sequence-length = " + std::to_string(c.sequence_length) + "\n";
    out += "smoothing-k = " + std::to_string(c.smoothing_k) + "\n";
    num("alpha", c.alpha);
    num("beta", c.beta);
    num("gamma", c.gamma);
    str("source", c.source);
    str("bind", c.bind);
    boolean("run-transcoder", c.run_transcoder);
    str("transcoder", c.transcoder);
    out += "jobs = " + std::to_string(c.jobs) + "\n";
    return out;
}

PipelineConfig parse_config_text(const std::string& text) {
    PipelineConfig c;
    CLI::App app;
    bind_options(app, c);
    app.allow_config_extras(false);
    std::istringstream in(text);
    try {
        app.parse_from_stream(in);
    } catch (const CLI::ParseError& e) {
        throw Error(ErrorCode::UsageError, std::string("config: ") + e.what());
    }
    return c;
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos || colon == 0) throw Error(ErrorCode::InvalidArgument, "bind must be host:port");
    const auto port_text = bind.substr(colon + 1);
    int port = -1;
    auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port < 0 || port > 65535) {
        throw Error(ErrorCode::InvalidArgument, "bad port in bind address " + bind);
    }
    return {bind.substr(0, colon), port};
}

// ---------------------------------------------------------------- helpers

std::vector<std::string> list_surgeries(const fs::path& input) {
    require_dir(input, "input");
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(input)) {
        if (e.is_directory() && fs::is_regular_file(e.path() / "clips.csv")) ids.push_back(e.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<fs::path> list_clip_frames(const fs::path& clip_dir) {
    require_dir(clip_dir, "clip");
    std::vector<std::pair<std::int64_t, fs::path>> found;
    for (const auto& e : fs::directory_iterator(clip_dir)) {
        const auto name = e.path().filename().string();
        if (!e.is_regular_file() || !name.starts_with("frame_") || e.path().extension() != ".png") continue;
        found.emplace_back(frame_number(e.path()), e.path());
    }
    std::sort(found.begin(), found.end());
    std::vector<fs::path> out;
    for (auto& [n, p] : found) out.push_back(std::move(p));
    return out;
}

std::string timelines_to_json(const std::vector<SurgeryTimeline>& timelines, const TaxonomyRegistry& reg) {
    ordered_json doc;
    doc["schema"] = "esv-forge.timelines";
    doc["version"] = 1;
    auto& list = doc["surgeries"];
    list = ordered_json::array();
    for (const auto& t : timelines) {
        ordered_json clips = ordered_json::array();
        for (const auto& [id, off] : t.clip_offsets) clips.push_back({id, off});
        ordered_json segs = ordered_json::array();
        for (const auto& s : t.segments) segs.push_back({s.start_s, s.end_s, reg.format_triplet(s.label)});
        list.push_back({{"id", t.surgery_id},
                        {"duration_s", t.total_duration_s},
                        {"clips", clips},
                        {"segments", segs}});
    }
    return doc.dump(2) + "\n";
}

std::vector<SurgeryTimeline> timelines_from_json(const std::string& text, const TaxonomyRegistry& reg) {
    try {
        const auto doc = json::parse(text);
        if (doc.at("schema") != "esv-forge.timelines") throw Error(ErrorCode::SchemaError, "not a timelines document");
        if (doc.at("version") != 1) throw Error(ErrorCode::VersionMismatch, "unsupported timelines version");
        std::vector<SurgeryTimeline> out;
        for (const auto& s : doc.at("surgeries")) {
            SurgeryTimeline t;
            t.surgery_id = s.at("id").get<std::string>();
            t.total_duration_s = s.at("duration_s").get<double>();
            for (const auto& c : s.at("clips")) t.clip_offsets.emplace_back(c.at(0).get<std::string>(), c.at(1).get<double>());
            for (const auto& g : s.at("segments")) {
                t.segments.push_back({g.at(0).get<double>(), g.at(1).get<double>(),
                                      reg.parse_triplet(g.at(2).get<std::string>())});
            }
            out.push_back(std::move(t));
        }
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("timelines: ") + e.what());
    }
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = jobs > 0 ? static_cast<std::size_t>(jobs) : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n && !failed; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(m);
                    if (!first) first = std::current_exception();
                    failed = true;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------- stages

Pipeline::Pipeline(PipelineConfig config, StageLog log) : config_(std::move(config)), log_(std::move(log)) {
    config_.validate();
    if (config_.taxonomy.empty()) {
        registry_ = &TaxonomyRegistry::builtin();
    } else {
        owned_registry_ = std::make_shared<const TaxonomyRegistry>(TaxonomyRegistry::load(config_.taxonomy));
        registry_ = owned_registry_.get();
    }
}

StageResult Pipeline::finish(StageResult r, double started_ms) {
    r.elapsed_ms = now_ms() - started_ms;
    if (log_) {
        std::string line = "esv-forge: stage=" + r.stage + " elapsed_ms=" + format_fact(r.elapsed_ms);
        for (const auto& [k, v] : r.facts) line += " " + k + "=" + v;
        log_(line);
    }
    return r;
}

StageResult Pipeline::import_annotations() {
    const double t0 = now_ms();
    if (config_.output.empty()) throw Error(ErrorCode::InvalidArgument, "output path is not set");
    const auto ids = list_surgeries(config_.input);
    std::vector<SurgeryTimeline> timelines(ids.size());
    parallel_for(ids.size(), config_.jobs, [&](std::size_t i) {
        const auto clips = load_manifest(config_.input, ids[i]);
        const auto raw = parse_annotation_export(read_text(annotation_file(config_.annotations_dir(), ids[i])), *registry_);
        timelines[i] = assemble_timeline(raw, clips, *registry_);
    });
    std::size_t segments = 0;
    for (const auto& t : timelines) segments += t.segments.size();
    write_text(config_.output / kTimelinesFile, timelines_to_json(timelines, *registry_));
    return finish({"import", 0.0, {{"surgeries", std::to_string(ids.size())}, {"segments", std::to_string(segments)}}},
                  t0);
}

StageResult Pipeline::extract_keyframes() {
    const double t0 = now_ms();
    if (config_.output.empty()) throw Error(ErrorCode::InvalidArgument, "output path is not set");
    struct ClipJob {
        std::string surgery;
        std::string clip;
    };
    std::vector<ClipJob> jobs;
    for (const auto& s : list_surgeries(config_.input)) {
        for (const auto& c : load_manifest(config_.input, s)) jobs.push_back({s, c.clip_id});
    }
    std::vector<std::vector<KeyframeRecord>> per_clip(jobs.size());
    std::vector<std::size_t> frame_counts(jobs.size());
    std::vector<std::size_t> crop_fallbacks(jobs.size());
    parallel_for(jobs.size(), config_.jobs, [&](std::size_t j) {
        const auto frames = list_clip_frames(config_.input / jobs[j].surgery / jobs[j].clip);
        frame_counts[j] = frames.size();
        KeyframeSelector selector(config_.threshold);
        for (const auto& path : frames) {
            const auto index = frame_number(path);
            Frame frame = read_png(path);
            if (config_.crop) {
                try {
                    frame = crop_surgical_view(frame);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::NoForeground) throw;
                    ++crop_fallbacks[j];
                }
            }
            TimedSignature ts{static_cast<double>(index) / config_.frame_rate,
                              frame_signature(frame, config_.signature_side)};
            if (selector.offer(ts)) {
                per_clip[j].push_back({jobs[j].surgery, jobs[j].clip, index, ts.timestamp_s, std::move(ts.signature)});
            }
        }
    });
    KeyframeSet set;
    set.side = config_.signature_side;
    std::size_t frames = 0, fallbacks = 0;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        frames += frame_counts[j];
        fallbacks += crop_fallbacks[j];
        for (auto& r : per_clip[j]) set.records.push_back(std::move(r));
    }
    save_keyframes(config_.output, set);
    return finish({"keyframes",
                   0.0,
                   {{"clips", std::to_string(jobs.size())},
                    {"frames", std::to_string(frames)},
                    {"keyframes", std::to_string(set.records.size())},
                    {"crop_fallbacks", std::to_string(fallbacks)}}},
                  t0);
}

StageResult Pipeline::emit() {
    const double t0 = now_ms();
    const auto timelines = load_timelines(config_.output, *registry_);
    const auto keyframes = load_keyframes(config_.output);
    std::map<std::string, std::vector<KeyframeRecord>> by_surgery;
    for (const auto& k : keyframes.records) by_surgery[k.surgery_id].push_back(k);

    EmitOptions options;
    options.registry = registry_;
    options.run_transcoder = config_.run_transcoder;
    options.transcoder = config_.transcoder;
    options.frame_source = [&](const KeyframeRecord& k) -> std::optional<fs::path> {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%06lld.png", static_cast<long long>(k.frame_index));
        auto p = config_.input / k.surgery_id / k.clip_id / name;
        if (fs::is_regular_file(p)) return p;
        return std::nullopt;
    };
    options.clip_video = [&](const std::string& s, const std::string& clip) {
        for (const char* ext : {".mp4", ".m4v", ".mov", ".mkv", ".avi", ".ts"}) {
            auto p = config_.input / s / (clip + ext);
            if (fs::is_regular_file(p)) return p;
        }
        return config_.input / s / (clip + ".mp4");
    };

    std::vector<DatasetManifest> parts(timelines.size());
    parallel_for(timelines.size(), config_.jobs, [&](std::size_t i) {
        static const std::vector<KeyframeRecord> none;
        const auto it = by_surgery.find(timelines[i].surgery_id);
        parts[i] = emit_dataset(timelines[i], it == by_surgery.end() ? none : it->second, config_.output, options);
    });
    DatasetManifest manifest;
    manifest.root = config_.output;
    for (const auto& p : parts) manifest.absorb(p);
    merge_dataset(config_.output, manifest);
    return finish({"emit",
                   0.0,
                   {{"rows", std::to_string(manifest.rows)},
                    {"dropped", std::to_string(manifest.dropped)},
                    {"cutouts", std::to_string(manifest.cutouts)}}},
                  t0);
}

StageResult Pipeline::infer() {
    const double t0 = now_ms();
    if (config_.params.empty()) throw Error(ErrorCode::InvalidArgument, "infer needs at least one --params file");
    std::vector<HeadParams> members;
    for (const auto& p : config_.params) members.push_back(load_params(p));

    const auto keyframes = load_keyframes(config_.output);
    std::map<RowKey, const FrameSignature*> signatures;
    for (const auto& k : keyframes.records) signatures[{k.surgery_id, k.clip_id, k.frame_index}] = &k.signature;

    const auto rows = read_rows_csv(config_.targets_path());
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> by_surgery;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto name = decode_frame_filename(rows[i].filename);
        auto& list = by_surgery[name.surgery_id];
        if (list.empty()) order.push_back(name.surgery_id);
        list.push_back(i);
    }

    const std::size_t dim = static_cast<std::size_t>(keyframes.side) * keyframes.side;
    std::vector<TripletScores> scores(rows.size());
    std::vector<Triplet> labels(rows.size());
    std::vector<std::size_t> repairs(order.size());
    parallel_for(order.size(), config_.jobs, [&](std::size_t s) {
        const auto& idx = by_surgery.at(order[s]);
        std::vector<const FrameSignature*> seq;
        for (auto i : idx) {
            const auto name = decode_frame_filename(rows[i].filename);
            const auto it = signatures.find({name.surgery_id, name.clip_id, name.frame_index});
            if (it == signatures.end()) throw Error(ErrorCode::InvalidArgument, "no keyframe for " + rows[i].filename);
            seq.push_back(it->second);
        }
        const auto L = static_cast<std::size_t>(config_.sequence_length);
        std::vector<Triplet> raw(idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const std::size_t first = j + 1 >= L ? j + 1 - L : 0;
            FeatureSequence fs{Matrix(j + 1 - first, dim)};
            for (std::size_t t = first; t <= j; ++t) {
                std::copy(seq[t]->values.begin(), seq[t]->values.end(), fs.values.row(t - first).begin());
            }
            std::vector<TripletScores> probs;
            for (const auto& m : members) probs.push_back(to_probabilities(head_forward(fs, m, {}, *registry_)));
            scores[idx[j]] = mean_ensemble(probs);
            raw[j] = decode_prediction(scores[idx[j]]);
        }
        CorrectionStats stats;
        const auto fixed = correct_predictions(raw, static_cast<std::size_t>(config_.smoothing_k), *registry_, &stats);
        repairs[s] = stats.hierarchy_repairs;
        for (std::size_t j = 0; j < idx.size(); ++j) labels[idx[j]] = fixed[j];
    });

    std::vector<DatasetRow> out;
    std::string scores_csv = "filename";
    for (auto level : kAllLevels) {
        for (int c = 0; c < static_cast<int>(registry_->size(level)); ++c) {
            scores_csv += std::string(",") + std::string(to_string(level)) + "." + registry_->slug(level, c);
        }
    }
    scores_csv += "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.push_back(make_row(rows[i].filename, labels[i], rows[i].time_to_finish, *registry_));
        scores_csv += rows[i].filename;
        char buf[32];
        for (double v : scores[i].concatenated()) {
            std::snprintf(buf, sizeof buf, ",%.9f", v);
            scores_csv += buf;
        }
        scores_csv += "\n";
    }
    const auto pred_path = config_.predictions_path();
    write_text(pred_path, format_rows_csv(out));
    write_text(pred_path.parent_path() / kScoresFile, scores_csv);
    std::size_t total_repairs = 0;
    for (auto r : repairs) total_repairs += r;
    return finish({"infer",
                   0.0,
                   {{"rows", std::to_string(rows.size())},
                    {"members", std::to_string(members.size())},
                    {"hierarchy_repairs", std::to_string(total_repairs)}}},
                  t0);
}

StageResult Pipeline::evaluate() {
    const double t0 = now_ms();
    const auto pred_path = config_.predictions_path();
    require_file(pred_path, "predictions");
    require_file(config_.targets_path(), "targets");
    const auto preds = read_rows_csv(pred_path);
    const auto targets = read_rows_csv(config_.targets_path());
    if (preds.size() != targets.size()) {
        throw Error(ErrorCode::LengthMismatch, "predictions have " + std::to_string(preds.size()) +
                                                  " rows but targets have " + std::to_string(targets.size()));
    }
    if (targets.empty()) throw Error(ErrorCode::Empty, "no rows to evaluate");

    // Optional probabilities written next to the predictions by infer.
    std::map<std::string, std::vector<double>> probs;
    const auto scores_path = pred_path.parent_path() / kScoresFile;
    if (fs::is_regular_file(scores_path)) {
        std::istringstream in(read_text(scores_path));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream cells(line);
            std::string cell, name;
            std::getline(cells, name, ',');
            std::vector<double> v;
            while (std::getline(cells, cell, ',')) v.push_back(std::stod(cell));
            if (v.size() != registry_->output_width()) throw Error(ErrorCode::DimensionMismatch, "score row width");
            probs[name] = std::move(v);
        }
    }

    std::vector<LevelReport> reports;
    for (auto level : kAllLevels) {
        std::vector<LevelSample> samples;
        std::size_t offset = 0;
        for (auto l : kAllLevels) {
            if (l == level) break;
            offset += registry_->size(l);
        }
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (preds[i].filename != targets[i].filename) {
                throw Error(ErrorCode::InvalidArgument, "row " + std::to_string(i + 1) + " pairs " +
                                                            preds[i].filename + " with " + targets[i].filename);
            }
            auto pick = [&](const DatasetRow& r) -> const std::string& {
                switch (level) {
                    case Level::Phase: return r.timeline_phase_label;
                    case Level::Task: return r.timeline_task_label;
                    case Level::Action: return r.timeline_action_label;
                }
                return r.timeline_phase_label;
            };
            LevelSample s;
            s.group = decode_frame_filename(targets[i].filename).surgery_id;
            s.target = registry_->find(level, pick(targets[i]));
            s.predicted = registry_->find(level, pick(preds[i]));
            if (const auto it = probs.find(targets[i].filename); it != probs.end()) {
                s.scores.assign(it->second.begin() + static_cast<std::ptrdiff_t>(offset),
                                it->second.begin() + static_cast<std::ptrdiff_t>(offset + registry_->size(level)));
            }
            samples.push_back(std::move(s));
        }
        reports.push_back(evaluate_level(level, samples, *registry_));
    }
    write_text(config_.output / "report.json", report_to_json(reports, *registry_));
    write_text(config_.output / "roc_points.csv", roc_points_csv(reports, *registry_));
    return finish({"evaluate",
                   0.0,
                   {{"rows", std::to_string(targets.size())},
                    {"phase_accuracy", format_fact(reports[0].accuracy)},
                    {"phase_macro_f1", format_fact(reports[0].macro_f1)}}},
                  t0);
}

StageResult Pipeline::build_index() {
    const double t0 = now_ms();
    const auto timelines = load_timelines(config_.output, *registry_);
    const auto source = parse_source(config_.source);
    const auto path = source == SegmentSource::Annotation ? config_.targets_path() : config_.predictions_path();
    require_file(path, source == SegmentSource::Annotation ? "label CSV" : "predictions");
    const auto rows = read_rows_csv(path);

    std::map<std::string, const SurgeryTimeline*> by_id;
    std::map<std::string, double> durations;
    for (const auto& t : timelines) {
        by_id[t.surgery_id] = &t;
        durations[t.surgery_id] = t.total_duration_s;
    }
    std::vector<LabelSample> samples;
    for (const auto& r : rows) {
        const auto name = decode_frame_filename(r.filename);
        const auto it = by_id.find(name.surgery_id);
        if (it == by_id.end()) throw Error(ErrorCode::UnknownClip, "no timeline for surgery " + name.surgery_id);
        samples.push_back({name.surgery_id, it->second->clip_offset(name.clip_id) + name.timestamp_s(),
                           registry_->parse_triplet(r.timeline_label)});
    }
    std::stable_sort(samples.begin(), samples.end(), [](const LabelSample& a, const LabelSample& b) {
        return std::tie(a.surgery_id, a.timestamp_s) < std::tie(b.surgery_id, b.timestamp_s);
    });
    const auto index = TimelineIndex::build(samples, source, durations);
    persist(index, config_.output / kIndexFile, *registry_);
    return finish({"index",
                   0.0,
                   {{"source", std::string(to_string(source))},
                    {"surgeries", std::to_string(index.surgeries().size())},
                    {"segments", std::to_string(index.segment_count())}}},
                  t0);
}

std::vector<StageResult> Pipeline::run_all() {
    std::vector<StageResult> out;
    out.push_back(import_annotations());
    out.push_back(extract_keyframes());
    out.push_back(emit());
    if (!config_.params.empty()) {
        out.push_back(infer());
        out.push_back(evaluate());
    } else if (config_.source == "prediction") {
        throw Error(ErrorCode::InvalidArgument, "a prediction-sourced index needs --params");
    }
    out.push_back(build_index());
    return out;
}

}  // namespace esvforge
