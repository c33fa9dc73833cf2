#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "esvforge/annotations.hpp"
#include "esvforge/frame_pipeline.hpp"

namespace esvforge {

inline constexpr std::string_view kLabelsCsvName = "timeline_labels.csv";
inline constexpr std::string_view kCsvHeader =
    "filename,timeline_label,timeline_phase_label,timeline_task_label,timeline_action_label,time_to_finish";

/// Seconds left in the surgery after time t.
double remaining_time(double total_duration_s, double t);

struct FrameName {
    std::string surgery_id;
    std::string clip_id;
    std::int64_t frame_index = 0;
    /// Milliseconds; the filename carries nothing finer.
    std::int64_t timestamp_ms = 0;

    double timestamp_s() const noexcept { return static_cast<double>(timestamp_ms) / 1000.0; }
    friend bool operator==(const FrameName&, const FrameName&) = default;
};

/// "{surgery}/{clip}_frame_{index:06}_ts_{millis:09}.png"
std::string encode_frame_filename(const FrameName& name);
std::string encode_frame_filename(const std::string& surgery_id, const std::string& clip_id,
                                  std::int64_t frame_index, double timestamp_s);
FrameName decode_frame_filename(std::string_view filename);

struct DatasetRow {
    std::string filename;
    std::string timeline_label;
    std::string timeline_phase_label;
    std::string timeline_task_label;
    std::string timeline_action_label;
    double time_to_finish = 0.0;

    friend bool operator==(const DatasetRow&, const DatasetRow&) = default;
};

DatasetRow make_row(const std::string& filename, const Triplet& label, double time_to_finish,
                    const TaxonomyRegistry& reg = TaxonomyRegistry::builtin());
std::string format_rows_csv(const std::vector<DatasetRow>& rows);
std::vector<DatasetRow> parse_rows_csv(std::string_view text);
std::vector<DatasetRow> read_rows_csv(const std::filesystem::path& path);

struct SurgeryCounts {
    std::size_t rows = 0;
    std::size_t dropped = 0;
    double total_duration_s = 0.0;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::size_t keyframes = 0;
    std::size_t cutouts = 0;
    std::size_t rows = 0;
    std::size_t dropped = 0;
    std::map<std::string, SurgeryCounts> surgeries;

    void absorb(const DatasetManifest& other);
};

struct EmitOptions {
    /// Source image for a keyframe; when unset or returning nullopt the
    /// emitter renders the keyframe's signature as a small grayscale image.
    std::function<std::optional<std::filesystem::path>(const KeyframeRecord&)> frame_source;
    /// Source video for a clip; needed only when cutouts are executed.
    std::function<std::filesystem::path(const std::string& surgery_id, const std::string& clip_id)> clip_video;
    bool run_transcoder = false;
    std::string transcoder = "ffmpeg";
    const TaxonomyRegistry* registry = nullptr;
};

/// Writes frames/, cutouts/ plans and labels/{surgery}.csv for one surgery.
/// Keyframes falling in unlabelled gaps are dropped and counted.
DatasetManifest emit_dataset(const SurgeryTimeline& timeline, const std::vector<KeyframeRecord>& keyframes,
                             const std::filesystem::path& out_root, const EmitOptions& options = {});

/// Concatenates per-surgery label files (surgeries in id order) into the root
/// CSV and writes manifest.json.
void merge_dataset(const std::filesystem::path& out_root, const DatasetManifest& manifest);

std::string manifest_to_json(const DatasetManifest& manifest);

}  // namespace esvforge
