#include "esvforge/timeline_index.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "esvforge/error.hpp"

namespace esvforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(SegmentSource source) {
    return source == SegmentSource::Annotation ? "annotation" : "prediction";
}

SegmentSource parse_source(std::string_view text) {
    if (text == "annotation") return SegmentSource::Annotation;
    if (text == "prediction") return SegmentSource::Prediction;
    throw Error(ErrorCode::InvalidArgument, "unknown segment source '" + std::string(text) + "'");
}

const std::optional<std::string>& SearchQuery::label(Level level) const {
    switch (level) {
        case Level::Phase: return phase;
        case Level::Task: return task;
        case Level::Action: return action;
    }
    return phase;
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SurgeryEntry build_surgery(const std::string& id, const std::vector<const LabelSample*>& samples,
                           SegmentSource source, std::optional<double> duration) {
    SurgeryEntry entry;
    entry.id = id;
    std::vector<double> gaps;
    for (std::size_t i = 1; i < samples.size(); ++i) gaps.push_back(samples[i]->timestamp_s - samples[i - 1]->timestamp_s);
    const double half = gaps.empty() ? kSingleSampleHalfExtent : 0.5 * median(gaps);

    const double first = samples.front()->timestamp_s;
    const double last = samples.back()->timestamp_s;
    const double lo = std::max(0.0, first - half);
    double hi = last + half;
    if (duration) hi = std::max(std::min(hi, *duration), std::nextafter(last, std::numeric_limits<double>::infinity()));
    entry.duration_s = duration ? std::max(*duration, hi) : hi;

    for (auto level : kAllLevels) {
        auto& out = entry.levels[static_cast<int>(level)];
        std::size_t run_begin = 0;
        for (std::size_t i = 1; i <= samples.size(); ++i) {
            if (i < samples.size() && samples[i]->label.ordinal(level) == samples[run_begin]->label.ordinal(level)) {
                continue;
            }
            const double start = run_begin == 0
                                     ? lo
                                     : 0.5 * (samples[run_begin - 1]->timestamp_s + samples[run_begin]->timestamp_s);
            const double end = i == samples.size() ? hi : 0.5 * (samples[i - 1]->timestamp_s + samples[i]->timestamp_s);
            out.push_back({id, level, samples[run_begin]->label.ordinal(level), start, end, source});
            run_begin = i;
        }
    }
    return entry;
}

// Sorted, disjoint [start, end) ranges of the surgery where the level has the label.
std::vector<std::pair<double, double>> label_ranges(const SurgeryEntry& e, Level level, int label) {
    std::vector<std::pair<double, double>> out;
    for (const auto& s : e.segments(level)) {
        if (s.label == label) out.emplace_back(s.start_s, s.end_s);
    }
    return out;
}

std::vector<std::pair<double, double>> intersect(const std::vector<std::pair<double, double>>& a,
                                                 const std::vector<std::pair<double, double>>& b) {
    std::vector<std::pair<double, double>> out;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double lo = std::max(a[i].first, b[j].first);
        const double hi = std::min(a[i].second, b[j].second);
        if (lo < hi) out.emplace_back(lo, hi);
        if (a[i].second < b[j].second) ++i;
        else ++j;
    }
    return out;
}

double number_param(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::InvalidArgument, "query parameter '" + key + "' is not a number");
    }
    return v;
}

}  // namespace

TimelineIndex TimelineIndex::build(std::span<const LabelSample> samples, SegmentSource source,
                                   const std::map<std::string, double>& durations) {
    std::map<std::string, std::vector<const LabelSample*>> by_surgery;
    for (const auto& s : samples) {
        auto& list = by_surgery[s.surgery_id];
        if (!std::isfinite(s.timestamp_s) || s.timestamp_s < 0.0) {
            throw Error(ErrorCode::InvalidArgument, "sample timestamps must be finite and non-negative");
        }
        if (!list.empty() && !(s.timestamp_s > list.back()->timestamp_s)) {
            throw Error(ErrorCode::UnorderedInput, "timestamps of " + s.surgery_id + " are not increasing");
        }
        list.push_back(&s);
    }
    TimelineIndex index;
    index.source_ = source;
    for (const auto& [id, list] : by_surgery) {
        std::optional<double> duration;
        if (auto it = durations.find(id); it != durations.end()) duration = it->second;
        index.surgeries_.push_back(build_surgery(id, list, source, duration));
    }
    return index;
}

const SurgeryEntry* TimelineIndex::find(std::string_view surgery_id) const {
    const auto it = std::lower_bound(surgeries_.begin(), surgeries_.end(), surgery_id,
                                     [](const SurgeryEntry& e, std::string_view id) { return e.id < id; });
    return it != surgeries_.end() && it->id == surgery_id ? &*it : nullptr;
}

std::size_t TimelineIndex::segment_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : surgeries_) {
        for (const auto& l : s.levels) n += l.size();
    }
    return n;
}

std::vector<IndexSegment> TimelineIndex::search(const SearchQuery& q, const TaxonomyRegistry& reg) const {
    if (!q.has_criterion()) throw Error(ErrorCode::InvalidArgument, "search needs at least one criterion");
    const double from = q.from_s.value_or(-std::numeric_limits<double>::infinity());
    const double to = q.to_s.value_or(std::numeric_limits<double>::infinity());
    if (!(from < to)) throw Error(ErrorCode::InvalidArgument, "search window must satisfy from < to");

    std::array<std::optional<int>, 3> wanted;
    std::optional<Level> finest;
    for (auto level : kAllLevels) {
        if (const auto& name = q.label(level)) {
            try {
                wanted[static_cast<int>(level)] = reg.find(level, *name);
            } catch (const Error&) {
                throw Error(ErrorCode::UnknownLabelName,
                            "unknown " + std::string(to_string(level)) + " name '" + *name + "'");
            }
            finest = level;
        }
    }

    std::vector<IndexSegment> out;
    for (const auto& entry : surgeries_) {
        if (q.surgery && entry.id != *q.surgery) continue;
        std::vector<Level> targets;
        if (finest) targets.push_back(*finest);
        else targets.assign(kAllLevels.begin(), kAllLevels.end());

        // Where every coarser criterion holds, within the window.
        std::vector<std::pair<double, double>> allowed{{from, to}};
        if (finest) {
            for (auto level : kAllLevels) {
                if (level == *finest || !wanted[static_cast<int>(level)]) continue;
                allowed = intersect(allowed, label_ranges(entry, level, *wanted[static_cast<int>(level)]));
            }
        }

        for (auto level : targets) {
            const auto& want = wanted[static_cast<int>(level)];
            for (const auto& seg : entry.segments(level)) {
                if (want && seg.label != *want) continue;
                for (const auto& piece : intersect({{seg.start_s, seg.end_s}}, allowed)) {
                    IndexSegment s = seg;
                    s.start_s = piece.first;
                    s.end_s = piece.second;
                    if (q.min_duration_s && s.duration() < *q.min_duration_s) continue;
                    out.push_back(std::move(s));
                }
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const IndexSegment& a, const IndexSegment& b) {
        if (a.surgery_id != b.surgery_id) return a.surgery_id < b.surgery_id;
        if (a.start_s != b.start_s) return a.start_s < b.start_s;
        return a.level < b.level;
    });
    return out;
}

json segment_to_json(const IndexSegment& s, const TaxonomyRegistry& reg) {
    return json{{"surgery", s.surgery_id},
                {"level", std::string(to_string(s.level))},
                {"label", reg.slug(s.level, s.label)},
                {"name", reg.name(s.level, s.label)},
                {"ordinal", s.label},
                {"start", s.start_s},
                {"end", s.end_s},
                {"source", std::string(to_string(s.source))}};
}

IndexSegment segment_from_json(const json& j, const TaxonomyRegistry& reg) {
    IndexSegment s;
    s.surgery_id = j.at("surgery").get<std::string>();
    s.level = parse_level(j.at("level").get<std::string>());
    s.label = reg.find(s.level, j.at("label").get<std::string>());
    s.start_s = j.at("start").get<double>();
    s.end_s = j.at("end").get<double>();
    s.source = parse_source(j.at("source").get<std::string>());
    return s;
}

json TimelineIndex::to_json(const TaxonomyRegistry& reg) const {
    json doc;
    doc["schema"] = "esv-forge.timeline-index";
    doc["version"] = 1;
    doc["source"] = std::string(to_string(source_));
    auto& list = doc["surgeries"];
    list = json::array();
    for (const auto& e : surgeries_) {
        json s;
        s["id"] = e.id;
        s["duration_s"] = e.duration_s;
        for (auto level : kAllLevels) {
            auto& rows = s[std::string(to_string(level))];
            rows = json::array();
            for (const auto& seg : e.segments(level)) {
                rows.push_back(json::array({seg.start_s, seg.end_s, reg.slug(level, seg.label)}));
            }
        }
        list.push_back(std::move(s));
    }
    return doc;
}

TimelineIndex TimelineIndex::from_json(const json& doc, const TaxonomyRegistry& reg) {
    if (!doc.is_object() || doc.value("schema", std::string{}) != "esv-forge.timeline-index") {
        throw Error(ErrorCode::VersionMismatch, "not a timeline index document");
    }
    if (!doc.contains("version") || doc["version"] != 1) {
        throw Error(ErrorCode::VersionMismatch, "unsupported timeline index version");
    }
    TimelineIndex index;
    try {
        index.source_ = parse_source(doc.at("source").get<std::string>());
        for (const auto& s : doc.at("surgeries")) {
            SurgeryEntry e;
            e.id = s.at("id").get<std::string>();
            e.duration_s = s.at("duration_s").get<double>();
            for (auto level : kAllLevels) {
                auto& out = e.levels[static_cast<int>(level)];
                for (const auto& row : s.at(std::string(to_string(level)))) {
                    if (!row.is_array() || row.size() != 3) {
                        throw Error(ErrorCode::SchemaError, "index segment rows must be [start, end, label]");
                    }
                    IndexSegment seg{e.id, level, reg.find(level, row[2].get<std::string>()), row[0].get<double>(),
                                     row[1].get<double>(), index.source_};
                    if (!(seg.start_s < seg.end_s) || (!out.empty() && seg.start_s < out.back().end_s)) {
                        throw Error(ErrorCode::SchemaError, "index segments of " + e.id + " overlap or are empty");
                    }
                    out.push_back(std::move(seg));
                }
            }
            if (!index.surgeries_.empty() && !(index.surgeries_.back().id < e.id)) {
                throw Error(ErrorCode::SchemaError, "index surgeries must be sorted and unique");
            }
            index.surgeries_.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("timeline index: ") + e.what());
    }
    return index;
}

void persist(const TimelineIndex& index, const fs::path& path, const TaxonomyRegistry& reg) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
        out << index.to_json(reg).dump(1) << '\n';
        if (!out) throw Error(ErrorCode::IoFailure, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot move index into place: " + ec.message());
}

TimelineIndex load_index(const fs::path& path, const TaxonomyRegistry& reg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
        doc = json::parse(buf.str());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IoFailure, "corrupt index file " + path.string() + ": " + e.what());
    }
    return TimelineIndex::from_json(doc, reg);
}

SearchQuery query_from_params(const std::multimap<std::string, std::string>& params) {
    SearchQuery q;
    for (const auto& [key, value] : params) {
        if (key == "phase") q.phase = value;
        else if (key == "task") q.task = value;
        else if (key == "action") q.action = value;
        else if (key == "surgery") q.surgery = value;
        else if (key == "from") q.from_s = number_param(key, value);
        else if (key == "to") q.to_s = number_param(key, value);
        else if (key == "min_duration") q.min_duration_s = number_param(key, value);
        else throw Error(ErrorCode::InvalidArgument, "unknown query parameter '" + key + "'");
    }
    return q;
}

}  // namespace esvforge
