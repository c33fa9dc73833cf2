#include "esvforge/frame_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "esvforge/error.hpp"

namespace esvforge {

std::optional<Component> largest_component(std::span<const std::uint8_t> binary, int width, int height) {
    const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (width <= 0 || height <= 0 || binary.size() != n) {
        throw Error(ErrorCode::InvalidArgument, "mask size does not match dimensions");
    }

    std::vector<int> labels(n, 0);
    std::vector<std::size_t> areas{0};
    std::vector<BoundingBox> boxes{BoundingBox{}};
    std::deque<std::size_t> queue;

    for (std::size_t seed = 0; seed < n; ++seed) {
        if (binary[seed] == 0 || labels[seed] != 0) continue;
        const int id = static_cast<int>(areas.size());
        const int sx = static_cast<int>(seed % width);
        const int sy = static_cast<int>(seed / width);
        BoundingBox box{sx, sy, sx, sy};
        std::size_t area = 0;
        labels[seed] = id;
        queue.push_back(seed);
        while (!queue.empty()) {
            const auto p = queue.front();
            queue.pop_front();
            ++area;
            const int x = static_cast<int>(p % width);
            const int y = static_cast<int>(p / width);
            box.x0 = std::min(box.x0, x);
            box.x1 = std::max(box.x1, x);
            box.y0 = std::min(box.y0, y);
            box.y1 = std::max(box.y1, y);
            auto visit = [&](int nx, int ny) {
                if (nx < 0 || ny < 0 || nx >= width || ny >= height) return;
                const auto q = static_cast<std::size_t>(ny) * width + nx;
                if (binary[q] != 0 && labels[q] == 0) {
                    labels[q] = id;
                    queue.push_back(q);
                }
            };
            visit(x - 1, y);
            visit(x + 1, y);
            visit(x, y - 1);
            visit(x, y + 1);
        }
        areas.push_back(area);
        boxes.push_back(box);
    }

    if (areas.size() == 1) return std::nullopt;
    int best = 1;
    for (int id = 2; id < static_cast<int>(areas.size()); ++id) {
        if (areas[static_cast<std::size_t>(id)] > areas[static_cast<std::size_t>(best)]) best = id;
    }
    Component c;
    c.area = areas[static_cast<std::size_t>(best)];
    c.box = boxes[static_cast<std::size_t>(best)];
    c.mask.resize(n);
    for (std::size_t i = 0; i < n; ++i) c.mask[i] = labels[i] == best ? 1 : 0;
    return c;
}

Frame resize_bilinear(const Frame& src, int width, int height) {
    src.check();
    Frame dst(width, height, src.channels, src.timestamp_s);
    const double sx = static_cast<double>(src.width) / width;
    const double sy = static_cast<double>(src.height) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < src.channels; ++c) {
                const double top = (1.0 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
                const double bottom = (1.0 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
                const double v = (1.0 - wy) * top + wy * bottom;
                dst.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return dst;
}

Frame crop_surgical_view(const Frame& frame) {
    frame.check();
    if (frame.empty()) throw Error(ErrorCode::InvalidArgument, "frame is empty");

    std::vector<std::uint8_t> binary(static_cast<std::size_t>(frame.width) * frame.height);
    for (int y = 0; y < frame.height; ++y) {
        for (int x = 0; x < frame.width; ++x) {
            binary[static_cast<std::size_t>(y) * frame.width + x] =
                std::lround(luma(frame, x, y)) > kForegroundThreshold ? 1 : 0;
        }
    }
    const auto component = largest_component(binary, frame.width, frame.height);
    if (!component) throw Error(ErrorCode::NoForeground, "no pixel above the field-of-view threshold");

    const auto& box = component->box;
    Frame cropped(box.width(), box.height(), frame.channels, frame.timestamp_s);
    for (int y = box.y0; y <= box.y1; ++y) {
        for (int x = box.x0; x <= box.x1; ++x) {
            if (component->mask[static_cast<std::size_t>(y) * frame.width + x] == 0) continue;
            for (int c = 0; c < frame.channels; ++c) cropped.at(x - box.x0, y - box.y0, c) = frame.at(x, y, c);
        }
    }
    return resize_bilinear(cropped, frame.width, frame.height);
}

namespace {

struct AxisWeight {
    int src;
    double weight;
};

// Overlap of each output cell with the source pixels, as fractions of the cell.
std::vector<std::vector<AxisWeight>> area_weights(int src_len, int dst_len) {
    std::vector<std::vector<AxisWeight>> out(static_cast<std::size_t>(dst_len));
    const double cell = static_cast<double>(src_len) / dst_len;
    for (int o = 0; o < dst_len; ++o) {
        const double lo = o * cell;
        const double hi = (o + 1) * cell;
        for (int s = static_cast<int>(std::floor(lo)); s < src_len && s < hi; ++s) {
            const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
            if (overlap > 0.0) out[static_cast<std::size_t>(o)].push_back({s, overlap / cell});
        }
    }
    return out;
}

}  // namespace

FrameSignature frame_signature(const Frame& frame, int side) {
    frame.check();
    if (frame.empty()) throw Error(ErrorCode::InvalidArgument, "frame is empty");
    if (side <= 0) throw Error(ErrorCode::InvalidArgument, "signature side must be positive");

    std::vector<double> gray(static_cast<std::size_t>(frame.width) * frame.height);
    for (int y = 0; y < frame.height; ++y) {
        for (int x = 0; x < frame.width; ++x) gray[static_cast<std::size_t>(y) * frame.width + x] = luma(frame, x, y);
    }
    const auto wx = area_weights(frame.width, side);
    const auto wy = area_weights(frame.height, side);

    FrameSignature sig;
    sig.values.assign(static_cast<std::size_t>(side) * side, 0.0);
    double norm2 = 0.0;
    for (int oy = 0; oy < side; ++oy) {
        for (int ox = 0; ox < side; ++ox) {
            double acc = 0.0;
            for (const auto& [y, fy] : wy[static_cast<std::size_t>(oy)]) {
                for (const auto& [x, fx] : wx[static_cast<std::size_t>(ox)]) {
                    acc += fy * fx * gray[static_cast<std::size_t>(y) * frame.width + x];
                }
            }
            sig.values[static_cast<std::size_t>(oy) * side + ox] = acc;
            norm2 += acc * acc;
        }
    }
    if (norm2 > 0.0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& v : sig.values) v *= inv;
    }
    return sig;
}

double cosine_distance(const FrameSignature& a, const FrameSignature& b) {
    if (a.values.size() != b.values.size()) {
        throw Error(ErrorCode::DimensionMismatch, "signature lengths differ");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 && nb == 0.0) return 0.0;
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

KeyframeSelector::KeyframeSelector(double threshold) : threshold_(threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "keyframe threshold must lie in (0, 1)");
    }
}

bool KeyframeSelector::offer(const TimedSignature& frame) {
    if (offered_ > 0 && !(frame.timestamp_s > last_ts_)) {
        throw Error(ErrorCode::UnorderedInput, "frame timestamps must be strictly increasing");
    }
    ++offered_;
    last_ts_ = frame.timestamp_s;
    if (anchor_ && cosine_distance(frame.signature, *anchor_) <= threshold_) return false;
    anchor_ = frame.signature;
    return true;
}

std::vector<std::size_t> select_keyframe_indices(std::span<const TimedSignature> stream, double threshold) {
    if (stream.empty()) throw Error(ErrorCode::EmptyStream, "no frames to select from");
    KeyframeSelector selector(threshold);
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (selector.offer(stream[i])) picked.push_back(i);
    }
    return picked;
}

std::vector<KeyframeRecord> select_keyframes(std::span<const TimedSignature> stream, double threshold,
                                             const std::string& surgery_id, const std::string& clip_id) {
    std::vector<KeyframeRecord> out;
    for (const auto i : select_keyframe_indices(stream, threshold)) {
        out.push_back({surgery_id, clip_id, static_cast<std::int64_t>(i), stream[i].timestamp_s, stream[i].signature});
    }
    return out;
}

CutoutWindow cutout_window(double keyframe_ts) {
    if (!(keyframe_ts >= 0.0) || !std::isfinite(keyframe_ts)) {
        throw Error(ErrorCode::InvalidArgument, "keyframe timestamp must be non-negative");
    }
    const double start = std::max(0.0, keyframe_ts - kCutoutSeconds);
    return {start, std::min(kCutoutSeconds, keyframe_ts - start)};
}

}  // namespace esvforge
