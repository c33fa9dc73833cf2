#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "esvforge/taxonomy.hpp"

namespace esvforge {

enum class SegmentSource { Annotation, Prediction };

std::string_view to_string(SegmentSource source);
SegmentSource parse_source(std::string_view text);

struct IndexSegment {
    std::string surgery_id;
    Level level = Level::Phase;
    int label = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    SegmentSource source = SegmentSource::Annotation;

    double duration() const noexcept { return end_s - start_s; }
    friend bool operator==(const IndexSegment&, const IndexSegment&) = default;
};

struct LabelSample {
    std::string surgery_id;
    double timestamp_s = 0.0;
    Triplet label;
};

struct SurgeryEntry {
    std::string id;
    double duration_s = 0.0;
    std::array<std::vector<IndexSegment>, 3> levels;

    const std::vector<IndexSegment>& segments(Level level) const { return levels[static_cast<int>(level)]; }
    friend bool operator==(const SurgeryEntry&, const SurgeryEntry&) = default;
};

struct SearchQuery {
    std::optional<std::string> phase;
    std::optional<std::string> task;
    std::optional<std::string> action;
    std::optional<std::string> surgery;
    std::optional<double> from_s;
    std::optional<double> to_s;
    std::optional<double> min_duration_s;

    bool has_criterion() const noexcept {
        return phase || task || action || surgery || from_s || to_s || min_duration_s;
    }
    const std::optional<std::string>& label(Level level) const;
};

/// Half-extent used when a surgery has a single sample and no sampling interval.
inline constexpr double kSingleSampleHalfExtent = 0.5;

/// Immutable run-length segment index, one segment list per (surgery, level).
class TimelineIndex {
public:
    TimelineIndex() = default;

    /// Run-length encodes each level. Boundaries sit at midpoints between
    /// differing samples; terminal runs extend half the surgery's median
    /// sampling interval, clipped to [0, duration] when a duration is known.
    static TimelineIndex build(std::span<const LabelSample> samples, SegmentSource source,
                               const std::map<std::string, double>& durations = {});

    const std::vector<SurgeryEntry>& surgeries() const noexcept { return surgeries_; }
    const SurgeryEntry* find(std::string_view surgery_id) const;
    SegmentSource source() const noexcept { return source_; }
    std::size_t segment_count() const noexcept;

    /// Segments matching every criterion, clipped to the time window and to
    /// coarser-level label criteria, ordered by (surgery, start, level).
    std::vector<IndexSegment> search(const SearchQuery& q,
                                     const TaxonomyRegistry& reg = TaxonomyRegistry::builtin()) const;

    nlohmann::json to_json(const TaxonomyRegistry& reg = TaxonomyRegistry::builtin()) const;
    static TimelineIndex from_json(const nlohmann::json& doc,
                                   const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());

    friend bool operator==(const TimelineIndex&, const TimelineIndex&) = default;

private:
    SegmentSource source_ = SegmentSource::Annotation;
    std::vector<SurgeryEntry> surgeries_;  // sorted by id
};

/// Writes via a temporary file and rename, so readers never see a partial file.
void persist(const TimelineIndex& index, const std::filesystem::path& path,
             const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());
TimelineIndex load_index(const std::filesystem::path& path, const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());

nlohmann::json segment_to_json(const IndexSegment& s, const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());
IndexSegment segment_from_json(const nlohmann::json& j, const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());

/// Parses URL-style parameters (phase, task, action, surgery, from, to, min_duration).
SearchQuery query_from_params(const std::multimap<std::string, std::string>& params);

}  // namespace esvforge
