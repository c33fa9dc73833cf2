#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "esvforge/annotations.hpp"
#include "esvforge/frame_pipeline.hpp"

namespace esvforge {

/// Procedural surgeries: multi-part clips exported as PNG frame sequences,
/// scripted hard scene changes and a scripted annotation export per surgery.
struct SyntheticSpec {
    int surgeries = 3;
    int clips_per_surgery = 3;
    double min_clip_seconds = 90.0;
    double max_clip_seconds = 150.0;
    double min_scene_seconds = 8.0;
    double max_scene_seconds = 30.0;
    double frame_rate = 1.0;
    int width = 64;
    int height = 64;
    /// Seconds of unlabelled time left between two segments of each surgery.
    double gap_seconds = 6.0;
    std::uint64_t seed = 7;
};

struct SyntheticClip {
    ClipManifest manifest;
    std::size_t frames = 0;
    /// Frame indices at which a new scene starts (frame 0 included).
    std::vector<std::size_t> scene_starts;
};

struct SyntheticSurgery {
    std::string id;
    std::vector<SyntheticClip> clips;
    std::vector<RawAnnotationSegment> annotations;
};

/// Writes <root>/<surgery>/{clips.csv, <surgery>.json, <clip>/frame_NNNNNN.png}.
std::vector<SyntheticSurgery> write_synthetic_corpus(const std::filesystem::path& root, const SyntheticSpec& spec);

/// The frame a scripted scene shows at a given frame index; deterministic.
Frame synthetic_scene_frame(std::uint64_t scene_seed, std::size_t frame_index, int width, int height);

/// Annotation export document in the accepted schema.
std::string annotation_export_json(const std::vector<RawAnnotationSegment>& segments,
                                   const std::vector<ClipManifest>& clips);

/// Signature streams with scripted jumps, for selection tests without images.
struct SignatureStream {
    std::vector<TimedSignature> frames;
    std::vector<std::size_t> scene_starts;
};
SignatureStream synthetic_signature_stream(std::size_t frames, std::size_t scenes, int side, std::uint64_t seed);

}  // namespace esvforge
