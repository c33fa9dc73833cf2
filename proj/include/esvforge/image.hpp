#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace esvforge {

/// Row-major 8-bit image, 1 (gray) or 3 (RGB) interleaved channels.
struct Frame {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;
    double timestamp_s = 0.0;

    Frame() = default;
    Frame(int w, int h, int c, double ts = 0.0);

    bool empty() const noexcept { return width <= 0 || height <= 0 || pixels.empty(); }
    std::uint8_t& at(int x, int y, int c = 0) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c = 0) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    /// Throws InvalidArgument unless dimensions and buffer agree.
    void check() const;

    friend bool operator==(const Frame&, const Frame&) = default;
};

/// ITU-R BT.601 luma as a real in [0, 255].
double luma(const Frame& f, int x, int y);
Frame to_grayscale(const Frame& f);

Frame read_png(const std::filesystem::path& path);
void write_png(const Frame& frame, const std::filesystem::path& path);

}  // namespace esvforge
