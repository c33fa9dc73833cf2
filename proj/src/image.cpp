#include "esvforge/image.hpp"

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include <png.h>

#include "esvforge/error.hpp"

namespace esvforge {

Frame::Frame(int w, int h, int c, double ts)
    : width(w), height(h), channels(c), timestamp_s(ts) {
    check();
    pixels.assign(static_cast<std::size_t>(w) * h * c, 0);
}

void Frame::check() const {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "frame dimensions must be positive");
    if (channels != 1 && channels != 3) throw Error(ErrorCode::InvalidArgument, "frame must have 1 or 3 channels");
    if (!pixels.empty() && pixels.size() != static_cast<std::size_t>(width) * height * channels) {
        throw Error(ErrorCode::InvalidArgument, "frame buffer length does not match dimensions");
    }
}

double luma(const Frame& f, int x, int y) {
    if (f.channels == 1) return f.at(x, y);
    return 0.299 * f.at(x, y, 0) + 0.587 * f.at(x, y, 1) + 0.114 * f.at(x, y, 2);
}

Frame to_grayscale(const Frame& f) {
    f.check();
    if (f.channels == 1) return f;
    Frame g(f.width, f.height, 1, f.timestamp_s);
    for (int y = 0; y < f.height; ++y) {
        for (int x = 0; x < f.width; ++x) {
            g.at(x, y) = static_cast<std::uint8_t>(std::lround(luma(f, x, y)));
        }
    }
    return g;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors by longjmp; the message is kept for the exception.
struct PngErrorSink {
    char message[256] = {};
};

void png_fail(png_structp png, png_const_charp message) {
    auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
    std::snprintf(sink->message, sizeof sink->message, "%s", message);
    png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Frame read_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());

    PngErrorSink sink;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, png_fail, png_warn);
    if (png == nullptr) throw Error(ErrorCode::IoFailure, "png: out of memory");
    png_infop info = png_create_info_struct(png);

    Frame frame;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::IoFailure, "png: " + std::string(sink.message) + " in " + path.string());
    }

    png_init_io(png, file.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    if (channels == 1 || channels == 3) {
        frame.width = width;
        frame.height = height;
        frame.channels = channels;
        frame.pixels.assign(static_cast<std::size_t>(width) * height * channels, 0);
        rows.resize(static_cast<std::size_t>(height));
        for (int y = 0; y < height; ++y) {
            rows[static_cast<std::size_t>(y)] =
                frame.pixels.data() + static_cast<std::size_t>(y) * width * channels;
        }
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (frame.pixels.empty()) {
        throw Error(ErrorCode::IoFailure, "png: unsupported channel layout in " + path.string());
    }
    return frame;
}

void write_png(const Frame& frame, const std::filesystem::path& path) {
    frame.check();
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());

    PngErrorSink sink;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, png_fail, png_warn);
    if (png == nullptr) throw Error(ErrorCode::IoFailure, "png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::IoFailure, "png: " + std::string(sink.message) + " in " + path.string());
    }

    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(frame.width), static_cast<png_uint_32>(frame.height), 8,
                 frame.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < frame.height; ++y) {
        png_write_row(png, frame.pixels.data() + static_cast<std::size_t>(y) * frame.width * frame.channels);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace esvforge
