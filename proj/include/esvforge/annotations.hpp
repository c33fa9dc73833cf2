#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "esvforge/taxonomy.hpp"

namespace esvforge {

/// One labelled region of one clip, in clip-local seconds.
struct RawAnnotationSegment {
    std::string clip_id;
    double start_s = 0.0;
    double end_s = 0.0;
    std::string label;

    friend bool operator==(const RawAnnotationSegment&, const RawAnnotationSegment&) = default;
};

struct ClipManifest {
    std::string surgery_id;
    std::string clip_id;
    int part_index = 0;
    double duration_s = 0.0;

    friend bool operator==(const ClipManifest&, const ClipManifest&) = default;
};

struct TimelineSegment {
    double start_s = 0.0;
    double end_s = 0.0;
    Triplet label;

    friend bool operator==(const TimelineSegment&, const TimelineSegment&) = default;
};

/// Segments on the global surgery clock, half-open, sorted and disjoint.
struct SurgeryTimeline {
    std::string surgery_id;
    std::vector<TimelineSegment> segments;
    double total_duration_s = 0.0;
    /// Global offset of each clip, in part order.
    std::vector<std::pair<std::string, double>> clip_offsets;

    double clip_offset(std::string_view clip_id) const;

    friend bool operator==(const SurgeryTimeline&, const SurgeryTimeline&) = default;
};

/// Excess past a clip's end tolerated (and clamped) before SegmentExceedsClip.
inline constexpr double kClipEndTolerance = 0.05;

/// Parses the annotation export subset documented in docs/annotation-export.md.
std::vector<RawAnnotationSegment> parse_annotation_export(
    std::string_view document, const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());

/// Reads `surgery_id,clip_id,part_index,duration_s` rows (header required).
std::vector<ClipManifest> parse_clip_manifest(std::string_view text);
std::string format_clip_manifest(const std::vector<ClipManifest>& clips);

/// Sorts by start and resolves overlaps: a later-starting segment wins from its
/// start, abutting equal labels merge, empty pieces vanish.
std::vector<TimelineSegment> normalize_segments(std::vector<TimelineSegment> segments);

SurgeryTimeline assemble_timeline(const std::vector<RawAnnotationSegment>& segments,
                                  const std::vector<ClipManifest>& clips,
                                  const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());

/// Label of the segment with start <= t < end, by binary search.
Triplet lookup_label(const SurgeryTimeline& timeline, double t);

}  // namespace esvforge
