#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "esvforge/frame_pipeline.hpp"

namespace esvforge {

inline constexpr long kCompressedBitrate = 1'000'000;

struct CompressTask {
    std::filesystem::path output;
    long bitrate_bps = kCompressedBitrate;
};

struct BlankAudioTask {
    std::filesystem::path output;
    /// Result of probing the source; an audio-bearing clip needs no silent track.
    bool source_has_audio = false;
};

struct CutoutTask {
    CutoutSpec spec;
    std::filesystem::path output;
};

struct FrameExportTask {
    std::filesystem::path output_dir;
    double frames_per_second = 1.0;
};

using TranscodeTask = std::variant<CompressTask, BlankAudioTask, CutoutTask, FrameExportTask>;

/// Argument vector for the external transcoder. `no_op` plans carry no args.
struct CommandPlan {
    std::vector<std::string> args;
    bool no_op = false;

    std::string to_shell() const;
};

/// Containers the transcoder templates are written for.
bool is_supported_container(const std::filesystem::path& clip);

/// Builds the command; throws ClipNotFound or UnsupportedContainer.
CommandPlan transcode_plan(const std::filesystem::path& clip, const TranscodeTask& task,
                           const std::string& program = "ffmpeg");

/// Fixed-point seconds with millisecond resolution, as passed to -ss / -t.
std::string format_seconds(double seconds);

/// Runs the plan without a shell; returns the process exit status.
int run_plan(const CommandPlan& plan);

/// True when `program -version` runs successfully.
bool transcoder_available(const std::string& program = "ffmpeg");

}  // namespace esvforge
