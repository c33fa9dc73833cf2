#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esvforge/image.hpp"

namespace esvforge {

/// Grayscale level above which a pixel belongs to the field of view.
inline constexpr std::uint8_t kForegroundThreshold = 10;
inline constexpr int kSignatureSide = 32;
inline constexpr double kDefaultKeyframeThreshold = 0.05;
inline constexpr double kCutoutSeconds = 30.0;

struct BoundingBox {
    int x0 = 0, y0 = 0;  // inclusive
    int x1 = 0, y1 = 0;  // inclusive

    int width() const noexcept { return x1 - x0 + 1; }
    int height() const noexcept { return y1 - y0 + 1; }
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Largest 4-connected component of a binary mask (row-major, nonzero = set).
/// Ties go to the component whose first pixel in scan order comes first.
struct Component {
    std::vector<std::uint8_t> mask;
    std::size_t area = 0;
    BoundingBox box;
};
std::optional<Component> largest_component(std::span<const std::uint8_t> binary, int width, int height);

/// Bilinear resize with pixel-centre alignment; edges clamp.
Frame resize_bilinear(const Frame& src, int width, int height);

/// Masks the frame to the largest bright region, crops its bounding box and
/// scales it back to the input size. Throws NoForeground on an empty mask.
Frame crop_surgical_view(const Frame& frame);

struct FrameSignature {
    std::vector<double> values;

    friend bool operator==(const FrameSignature&, const FrameSignature&) = default;
};

/// Luma, area-average downsample to side x side, flatten, L2-normalise.
/// An all-black frame yields the zero vector.
FrameSignature frame_signature(const Frame& frame, int side = kSignatureSide);

/// 1 - cosine similarity; zero vectors are treated as identical to each other
/// and at distance 1 from anything else.
double cosine_distance(const FrameSignature& a, const FrameSignature& b);

struct TimedSignature {
    double timestamp_s = 0.0;
    FrameSignature signature;
};

struct KeyframeRecord {
    std::string surgery_id;
    std::string clip_id;
    std::int64_t frame_index = 0;
    double timestamp_s = 0.0;
    FrameSignature signature;
};

/// Indices of the selected frames: the first frame, then every frame whose
/// distance to the last selected frame exceeds the threshold.
std::vector<std::size_t> select_keyframe_indices(std::span<const TimedSignature> stream, double threshold);

/// Incremental form of the selection rule for frame-at-a-time streams.
class KeyframeSelector {
public:
    explicit KeyframeSelector(double threshold = kDefaultKeyframeThreshold);

    /// Returns true if the frame becomes a keyframe.
    bool offer(const TimedSignature& frame);
    std::size_t offered() const noexcept { return offered_; }

private:
    double threshold_;
    std::optional<FrameSignature> anchor_;
    double last_ts_ = 0.0;
    std::size_t offered_ = 0;
};

std::vector<KeyframeRecord> select_keyframes(std::span<const TimedSignature> stream, double threshold,
                                             const std::string& surgery_id = {},
                                             const std::string& clip_id = {});

struct CutoutWindow {
    double start_s = 0.0;
    double duration_s = 0.0;
};

/// start = max(0, ts - 30); the window ends at the keyframe.
CutoutWindow cutout_window(double keyframe_ts);

struct CutoutSpec {
    std::string source_clip;
    double start_s = 0.0;
    double duration_s = 0.0;
    std::string output_name;
};

}  // namespace esvforge
