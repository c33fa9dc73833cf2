#include "esvforge/annotations.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "esvforge/error.hpp"

namespace esvforge {

using nlohmann::json;

double SurgeryTimeline::clip_offset(std::string_view clip_id) const {
    for (const auto& [id, offset] : clip_offsets) {
        if (id == clip_id) return offset;
    }
    throw Error(ErrorCode::UnknownClip, "clip '" + std::string(clip_id) + "' not in surgery " + surgery_id);
}

namespace {

std::string clip_id_from_file(const std::string& file) {
    auto name = std::filesystem::path(file).filename().stem().string();
    if (name.empty()) throw Error(ErrorCode::SchemaError, "task file name is empty");
    return name;
}

double seconds_field(const json& value, const char* key) {
    const auto it = value.find(key);
    if (it == value.end()) {
        throw Error(ErrorCode::SchemaError, std::string("region missing '") + key + "'");
    }
    if (!it->is_number()) {
        throw Error(ErrorCode::SchemaError, std::string("region field '") + key + "' is not a number");
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
        throw Error(ErrorCode::SchemaError, std::string("region field '") + key + "' is not finite");
    }
    return v;
}

const json* pick_annotation(const json& task) {
    const auto it = task.find("annotations");
    if (it == task.end()) return nullptr;
    if (!it->is_array()) throw Error(ErrorCode::SchemaError, "'annotations' must be a list");
    const json* chosen = nullptr;
    for (const auto& a : *it) {
        if (a.value("was_cancelled", false)) continue;
        chosen = &a;
    }
    return chosen;
}

void parse_task(const json& task, const TaxonomyRegistry& reg,
                std::vector<RawAnnotationSegment>& out) {
    if (!task.is_object()) throw Error(ErrorCode::SchemaError, "task entry must be an object");
    std::string clip_id;
    if (auto it = task.find("clip_id"); it != task.end()) {
        clip_id = it->get<std::string>();
    } else if (auto f = task.find("file_upload"); f != task.end() && f->is_string()) {
        clip_id = clip_id_from_file(f->get<std::string>());
    } else {
        throw Error(ErrorCode::SchemaError, "task has neither 'clip_id' nor 'file_upload'");
    }

    const json* annotation = pick_annotation(task);
    if (annotation == nullptr) return;
    const auto results = annotation->find("result");
    if (results == annotation->end()) {
        throw Error(ErrorCode::SchemaError, "annotation missing 'result' in clip " + clip_id);
    }
    for (const auto& entry : *results) {
        const auto value_it = entry.find("value");
        if (value_it == entry.end() || !value_it->is_object()) {
            throw Error(ErrorCode::SchemaError, "result entry missing 'value' in clip " + clip_id);
        }
        const json& value = *value_it;
        const json* labels = nullptr;
        if (auto l = value.find("labels"); l != value.end()) labels = &*l;
        else if (auto tl = value.find("timelinelabels"); tl != value.end()) labels = &*tl;
        if (labels == nullptr || (labels->is_array() && labels->empty())) continue;
        if (!labels->is_array() || labels->size() != 1 || !(*labels)[0].is_string()) {
            throw Error(ErrorCode::SchemaError,
                        "region in clip " + clip_id + " must carry exactly one string label");
        }

        RawAnnotationSegment seg;
        seg.clip_id = clip_id;
        seg.start_s = seconds_field(value, "start");
        seg.end_s = seconds_field(value, "end");
        seg.label = (*labels)[0].get<std::string>();
        if (seg.start_s < 0.0 || !(seg.start_s < seg.end_s)) {
            throw Error(ErrorCode::SchemaError, "region in clip " + clip_id + " has start/end out of order");
        }
        try {
            reg.parse_triplet(seg.label);
        } catch (const Error& e) {
            throw Error(ErrorCode::BadLabel, "clip " + clip_id + ": " + e.what());
        }
        out.push_back(std::move(seg));
    }
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t begin = 0;
    while (true) {
        const auto comma = line.find(',', begin);
        cells.push_back(trim(line.substr(begin, comma == std::string_view::npos ? line.npos : comma - begin)));
        if (comma == std::string_view::npos) break;
        begin = comma + 1;
    }
    return cells;
}

template <typename T>
T parse_number(const std::string& text, const char* what) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        throw Error(ErrorCode::SchemaError, std::string("clip manifest: bad ") + what + " '" + text + "'");
    }
    return value;
}

}  // namespace

std::vector<RawAnnotationSegment> parse_annotation_export(std::string_view document,
                                                          const TaxonomyRegistry& reg) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("annotation export: ") + e.what());
    }

    std::vector<RawAnnotationSegment> out;
    try {
        const json* tasks = &doc;
        if (doc.is_object()) {
            const auto it = doc.find("tasks");
            if (it == doc.end()) throw Error(ErrorCode::SchemaError, "annotation export: missing 'tasks'");
            tasks = &*it;
        }
        if (!tasks->is_array()) throw Error(ErrorCode::SchemaError, "annotation export: tasks must be a list");
        for (const auto& task : *tasks) parse_task(task, reg, out);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("annotation export: ") + e.what());
    }
    return out;
}

std::vector<ClipManifest> parse_clip_manifest(std::string_view text) {
    std::vector<ClipManifest> clips;
    std::istringstream in{std::string(text)};
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (!header_seen) {
            const std::vector<std::string> expected{"surgery_id", "clip_id", "part_index", "duration_s"};
            if (cells != expected) {
                throw Error(ErrorCode::SchemaError, "clip manifest: header must be surgery_id,clip_id,part_index,duration_s");
            }
            header_seen = true;
            continue;
        }
        if (cells.size() != 4) throw Error(ErrorCode::SchemaError, "clip manifest: expected 4 columns");
        ClipManifest c;
        c.surgery_id = cells[0];
        c.clip_id = cells[1];
        c.part_index = parse_number<int>(cells[2], "part_index");
        c.duration_s = parse_number<double>(cells[3], "duration_s");
        if (c.surgery_id.empty() || c.clip_id.empty()) {
            throw Error(ErrorCode::SchemaError, "clip manifest: empty id");
        }
        if (!(c.duration_s > 0.0) || !std::isfinite(c.duration_s)) {
            throw Error(ErrorCode::SchemaError, "clip manifest: duration must be positive for " + c.clip_id);
        }
        clips.push_back(std::move(c));
    }
    if (!header_seen) throw Error(ErrorCode::SchemaError, "clip manifest: empty document");
    return clips;
}

std::string format_clip_manifest(const std::vector<ClipManifest>& clips) {
    std::ostringstream out;
    out.precision(17);
    out << "surgery_id,clip_id,part_index,duration_s\n";
    for (const auto& c : clips) {
        out << c.surgery_id << ',' << c.clip_id << ',' << c.part_index << ',' << c.duration_s << '\n';
    }
    return out.str();
}

std::vector<TimelineSegment> normalize_segments(std::vector<TimelineSegment> segments) {
    std::stable_sort(segments.begin(), segments.end(),
                     [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
    for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
        segments[i].end_s = std::min(segments[i].end_s, segments[i + 1].start_s);
    }
    std::vector<TimelineSegment> out;
    out.reserve(segments.size());
    for (const auto& s : segments) {
        if (!(s.start_s < s.end_s)) continue;
        if (!out.empty() && out.back().end_s == s.start_s && out.back().label == s.label) {
            out.back().end_s = s.end_s;
            continue;
        }
        out.push_back(s);
    }
    return out;
}

SurgeryTimeline assemble_timeline(const std::vector<RawAnnotationSegment>& segments,
                                  const std::vector<ClipManifest>& clips,
                                  const TaxonomyRegistry& reg) {
    if (clips.empty()) throw Error(ErrorCode::SchemaError, "surgery has no clips");

    std::vector<ClipManifest> ordered = clips;
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.part_index < b.part_index; });
    std::set<std::string> ids;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (ordered[i].surgery_id != ordered.front().surgery_id) {
            throw Error(ErrorCode::SchemaError, "clips belong to more than one surgery");
        }
        if (i > 0 && ordered[i].part_index != ordered[i - 1].part_index + 1) {
            throw Error(ErrorCode::SchemaError,
                        "clip part indices of " + ordered.front().surgery_id + " are not contiguous");
        }
        if (!ids.insert(ordered[i].clip_id).second) {
            throw Error(ErrorCode::SchemaError, "duplicate clip id " + ordered[i].clip_id);
        }
        if (!(ordered[i].duration_s > 0.0)) {
            throw Error(ErrorCode::SchemaError, "clip " + ordered[i].clip_id + " has non-positive duration");
        }
    }

    SurgeryTimeline timeline;
    timeline.surgery_id = ordered.front().surgery_id;
    std::map<std::string, std::pair<double, double>, std::less<>> clip_span;
    double offset = 0.0;
    for (const auto& c : ordered) {
        timeline.clip_offsets.emplace_back(c.clip_id, offset);
        clip_span[c.clip_id] = {offset, c.duration_s};
        offset += c.duration_s;
    }
    timeline.total_duration_s = offset;

    std::vector<TimelineSegment> lifted;
    lifted.reserve(segments.size());
    for (const auto& s : segments) {
        const auto it = clip_span.find(s.clip_id);
        if (it == clip_span.end()) {
            throw Error(ErrorCode::UnknownClip, "segment references unknown clip '" + s.clip_id + "'");
        }
        const auto [clip_offset, duration] = it->second;
        if (s.end_s > duration + kClipEndTolerance) {
            throw Error(ErrorCode::SegmentExceedsClip,
                        "segment ends past clip " + s.clip_id + " (" + std::to_string(s.end_s) + " > " +
                            std::to_string(duration) + ")");
        }
        const double local_end = std::min(s.end_s, duration);
        if (!(s.start_s < local_end)) continue;
        Triplet label;
        try {
            label = reg.parse_triplet(s.label);
        } catch (const Error& e) {
            throw Error(ErrorCode::BadLabel, "clip " + s.clip_id + ": " + e.what());
        }
        lifted.push_back({clip_offset + s.start_s, clip_offset + local_end, label});
    }
    timeline.segments = normalize_segments(std::move(lifted));
    return timeline;
}

Triplet lookup_label(const SurgeryTimeline& timeline, double t) {
    if (!(t >= 0.0) || t > timeline.total_duration_s) {
        throw Error(ErrorCode::OutOfRange, "time " + std::to_string(t) + " outside surgery " +
                                               timeline.surgery_id);
    }
    const auto& segs = timeline.segments;
    auto it = std::upper_bound(segs.begin(), segs.end(), t,
                               [](double v, const TimelineSegment& s) { return v < s.start_s; });
    if (it != segs.begin()) {
        --it;
        if (t < it->end_s) return it->label;
    }
    throw Error(ErrorCode::Unlabelled, "no label at t=" + std::to_string(t) + " in " + timeline.surgery_id);
}

}  // namespace esvforge
