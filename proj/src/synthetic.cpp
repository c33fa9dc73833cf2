#include "esvforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "esvforge/error.hpp"

namespace esvforge {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Scripted surgical flow; lengths are drawn per surgery.
constexpr const char* kScript[] = {
    "setup.scope_setup.scope_insertion",
    "setup.instrument_setup.instrument_positioning",
    "setup.pressure_setup.inflate_rectum",
    "dissection.landmarking.marking",
    "dissection.mucosal_dissection.dissection",
    "dissection.mucosal_dissection.bleeding",
    "dissection.submucosal_dissection.dissection",
    "dissection.submucosal_dissection.smoke",
    "specimen_removal.specimen_removal.specimen_removal",
    "closure.suturing.stitching",
    "closure.suturing.clipping_suture",
    "scope_removal.scope_removal.scope_removal",
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out << text;
}

}  // namespace

Frame synthetic_scene_frame(std::uint64_t scene_seed, std::size_t frame_index, int width, int height) {
    constexpr int kBlocks = 8;
    Frame f(width, height, 3);
    const double cx = (width - 1) / 2.0;
    const double cy = (height - 1) / 2.0;
    const double radius = 0.46 * std::min(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (std::hypot(x - cx, y - cy) > radius) continue;
            const int bx = x * kBlocks / width;
            const int by = y * kBlocks / height;
            const auto block = splitmix(scene_seed ^ splitmix(static_cast<std::uint64_t>(by * kBlocks + bx)));
            const auto noise = splitmix(scene_seed + 0x51ed27ULL * (frame_index + 1) +
                                        static_cast<std::uint64_t>(y) * width + x);
            // Dark or bright blocks; dark stays above the foreground threshold.
            const bool bright = (block >> 63) != 0;
            for (int c = 0; c < 3; ++c) {
                const int shade = static_cast<int>((block >> (16 * c)) % 41);
                const int base = bright ? 190 + shade : 25 + shade;
                const int jitter = static_cast<int>((noise >> (8 * c)) % 5) - 2;
                f.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(base + jitter, 0, 255));
            }
        }
    }
    return f;
}

std::string annotation_export_json(const std::vector<RawAnnotationSegment>& segments,
                                   const std::vector<ClipManifest>& clips) {
    nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
    int task_id = 1;
    for (const auto& clip : clips) {
        nlohmann::ordered_json result = nlohmann::ordered_json::array();
        int region = 0;
        for (const auto& s : segments) {
            if (s.clip_id != clip.clip_id) continue;
            result.push_back({{"id", clip.clip_id + "-r" + std::to_string(region++)},
                              {"type", "labels"},
                              {"value", {{"start", s.start_s}, {"end", s.end_s}, {"labels", {s.label}}}}});
        }
        tasks.push_back({{"id", task_id++},
                         {"file_upload", clip.clip_id + ".mp4"},
                         {"annotations", {{{"id", 1}, {"was_cancelled", false}, {"result", result}}}}});
    }
    return tasks.dump(2) + "\n";
}

std::vector<SyntheticSurgery> write_synthetic_corpus(const fs::path& root, const SyntheticSpec& spec) {
    if (spec.surgeries < 1 || spec.clips_per_surgery < 1 || !(spec.frame_rate > 0.0) ||
        !(spec.min_clip_seconds > 0.0) || spec.max_clip_seconds < spec.min_clip_seconds ||
        !(spec.min_scene_seconds > 0.0) || spec.max_scene_seconds < spec.min_scene_seconds) {
        throw Error(ErrorCode::InvalidArgument, "synthetic spec out of range");
    }
    std::mt19937_64 rng(spec.seed);
    auto uniform_int = [&](long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng); };

    std::vector<SyntheticSurgery> out;
    for (int s = 0; s < spec.surgeries; ++s) {
        char id[32];
        std::snprintf(id, sizeof id, "surg-%03d", s + 1);
        SyntheticSurgery surgery;
        surgery.id = id;
        const auto dir = root / surgery.id;
        fs::create_directories(dir);

        std::vector<ClipManifest> manifests;
        std::uint64_t previous_scene = 0;
        FrameSignature previous_sig;
        for (int c = 0; c < spec.clips_per_surgery; ++c) {
            SyntheticClip clip;
            char clip_id[32];
            std::snprintf(clip_id, sizeof clip_id, "clip%02d", c + 1);
            const double seconds = static_cast<double>(uniform_int(static_cast<long>(spec.min_clip_seconds),
                                                                   static_cast<long>(spec.max_clip_seconds)));
            clip.manifest = {surgery.id, clip_id, c, seconds};
            clip.frames = static_cast<std::size_t>(std::floor(seconds * spec.frame_rate));
            const auto clip_dir = dir / clip_id;
            fs::create_directories(clip_dir);

            std::size_t next_change = 0;
            std::uint64_t scene = 0;
            for (std::size_t i = 0; i < clip.frames; ++i) {
                if (i == next_change) {
                    // Redraw until the new scene is far from the previous one.
                    for (int attempt = 0;; ++attempt) {
                        scene = splitmix(rng());
                        const auto sig = frame_signature(crop_surgical_view(
                            synthetic_scene_frame(scene, 0, spec.width, spec.height)));
                        if (previous_sig.values.empty() || cosine_distance(sig, previous_sig) > 0.12) {
                            previous_sig = sig;
                            break;
                        }
                        if (attempt > 100) throw Error(ErrorCode::InvalidArgument, "cannot draw distinct scenes");
                    }
                    previous_scene = scene;
                    clip.scene_starts.push_back(i);
                    const auto len = uniform_int(static_cast<long>(spec.min_scene_seconds * spec.frame_rate),
                                                 static_cast<long>(spec.max_scene_seconds * spec.frame_rate));
                    next_change = i + static_cast<std::size_t>(std::max(1L, len));
                }
                char name[32];
                std::snprintf(name, sizeof name, "frame_%06zu.png", i);
                write_png(synthetic_scene_frame(previous_scene, i, spec.width, spec.height), clip_dir / name);
            }
            manifests.push_back(clip.manifest);
            surgery.clips.push_back(std::move(clip));
        }

        // Global script boundaries at half-second marks so integer-second
        // frames never sit on a boundary.
        double total = 0.0;
        for (const auto& m : manifests) total += m.duration_s;
        constexpr std::size_t kSteps = std::size(kScript);
        std::vector<double> weights(kSteps);
        for (auto& w : weights) w = 1.0 + static_cast<double>(uniform_int(0, 100)) / 50.0;
        double weight_sum = 0.0;
        for (double w : weights) weight_sum += w;
        std::vector<double> bounds{0.0};
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < kSteps; ++k) {
            acc += weights[k];
            bounds.push_back(std::floor(total * acc / weight_sum) + 0.5);
        }
        bounds.push_back(total);
        const std::size_t gap_after = 4;

        double clip_start = 0.0;
        for (const auto& m : manifests) {
            const double clip_end = clip_start + m.duration_s;
            for (std::size_t k = 0; k < kSteps; ++k) {
                double g0 = bounds[k];
                double g1 = bounds[k + 1];
                if (k == gap_after) g1 = std::max(g0 + 1.0, g1 - spec.gap_seconds);
                const double lo = std::max(g0, clip_start);
                const double hi = std::min(g1, clip_end);
                if (lo < hi) surgery.annotations.push_back({m.clip_id, lo - clip_start, hi - clip_start, kScript[k]});
            }
            clip_start = clip_end;
        }

        write_text(dir / "clips.csv", format_clip_manifest(manifests));
        write_text(dir / (surgery.id + ".json"), annotation_export_json(surgery.annotations, manifests));
        out.push_back(std::move(surgery));
    }
    return out;
}

SignatureStream synthetic_signature_stream(std::size_t frames, std::size_t scenes, int side, std::uint64_t seed) {
    if (frames == 0 || scenes == 0 || scenes > frames) throw Error(ErrorCode::InvalidArgument, "bad stream shape");
    std::mt19937_64 rng(seed);
    const auto dim = static_cast<std::size_t>(side) * side;
    std::uniform_real_distribution<double> base(0.0, 1.0);
    std::uniform_real_distribution<double> noise(-1e-4, 1e-4);

    SignatureStream s;
    s.scene_starts.push_back(0);
    std::vector<std::size_t> cuts(frames - 1);
    for (std::size_t i = 0; i < cuts.size(); ++i) cuts[i] = i + 1;
    std::shuffle(cuts.begin(), cuts.end(), rng);
    cuts.resize(scenes - 1);
    std::sort(cuts.begin(), cuts.end());
    s.scene_starts.insert(s.scene_starts.end(), cuts.begin(), cuts.end());

    std::vector<double> scene(dim);
    std::size_t next = 0;
    for (std::size_t i = 0; i < frames; ++i) {
        if (next < s.scene_starts.size() && s.scene_starts[next] == i) {
            for (auto& v : scene) v = base(rng);
            ++next;
        }
        FrameSignature sig;
        sig.values.resize(dim);
        double n2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            sig.values[j] = scene[j] + noise(rng);
            n2 += sig.values[j] * sig.values[j];
        }
        for (auto& v : sig.values) v /= std::sqrt(n2);
        s.frames.push_back({static_cast<double>(i) / 25.0, std::move(sig)});
    }
    return s;
}

}  // namespace esvforge
