// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <vector>

#include <json.hpp>
#include <png.h>

#include "dfd/io.hpp"

namespace dfd {

namespace {

struct PngWriter {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngWriter(const std::string& path, int width, int height, int bit_depth, int color_type) {
        fp = std::fopen(path.c_str(), "wb");
        if (!fp) throw IoError("cannot open for writing: " + path);
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info || setjmp(png_jmpbuf(png))) {
            cleanup();
            throw IoError("libpng init failed: " + path);
        }
        png_init_io(png, fp);
        png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
    }
    void write_rows(std::vector<png_bytep>& rows) {
        if (setjmp(png_jmpbuf(png))) throw IoError("libpng write failed");
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
    }
    void cleanup() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
        png = nullptr;
        info = nullptr;
        fp = nullptr;
    }
    ~PngWriter() { cleanup(); }
};

uint16_t to_u16(double v) {
    v = clamp01(v);
    return static_cast<uint16_t>(std::lround(v * 65535.0));
}
uint8_t to_u8(double v) {
    v = clamp01(v);
    return static_cast<uint8_t>(std::lround(v * 255.0));
}

// Compact blue->green->red scale for depth previews.
void heat_color(double t, uint8_t rgb[3]) {
    t = clamp01(t);
    const double r = clamp01(1.5 - std::fabs(4.0 * t - 3.0));
    const double g = clamp01(1.5 - std::fabs(4.0 * t - 2.0));
    const double b = clamp01(1.5 - std::fabs(4.0 * t - 1.0));
    rgb[0] = to_u8(r);
    rgb[1] = to_u8(g);
    rgb[2] = to_u8(b);
}

}  // namespace

void write_png16(const std::string& path, const ImageD& rgb) {
    if (rgb.channels != 3) throw IoError("write_png16 expects 3 channels: " + path);
    const int W = rgb.width, H = rgb.height;
    std::vector<uint8_t> buf(static_cast<size_t>(W) * H * 6);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            for (int c = 0; c < 3; ++c) {
                const uint16_t v = to_u16(rgb.at(x, y, c));
                const size_t o = ((static_cast<size_t>(y) * W + x) * 3 + c) * 2;
                buf[o] = static_cast<uint8_t>(v >> 8);  // PNG is big-endian
                buf[o + 1] = static_cast<uint8_t>(v & 0xff);
            }
        }
    }
    PngWriter w(path, W, H, 16, PNG_COLOR_TYPE_RGB);
    std::vector<png_bytep> rows(H);
    for (int y = 0; y < H; ++y) rows[y] = buf.data() + static_cast<size_t>(y) * W * 6;
    w.write_rows(rows);
}

void write_png8(const std::string& path, const ImageD& img) {
    const int W = img.width, H = img.height, C = img.channels;
    if (C != 1 && C != 3) throw IoError("write_png8 expects 1 or 3 channels: " + path);
    std::vector<uint8_t> buf(static_cast<size_t>(W) * H * C);
    for (size_t i = 0; i < img.data.size(); ++i) buf[i] = to_u8(img.data[i]);
    PngWriter w(path, W, H, 8, C == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB);
    std::vector<png_bytep> rows(H);
    for (int y = 0; y < H; ++y) rows[y] = buf.data() + static_cast<size_t>(y) * W * C;
    w.write_rows(rows);
}

void write_png_depth(const std::string& path, const ImageD& depth, double lo, double hi) {
    if (depth.channels != 1) throw IoError("write_png_depth expects 1 channel: " + path);
    const int W = depth.width, H = depth.height;
    std::vector<uint8_t> buf(static_cast<size_t>(W) * H * 3, 0);
    const double span = hi > lo ? hi - lo : 1.0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const double z = depth.at(x, y);
            if (!std::isfinite(z)) continue;  // NaN stays black
            heat_color((z - lo) / span, &buf[(static_cast<size_t>(y) * W + x) * 3]);
        }
    }
    PngWriter w(path, W, H, 8, PNG_COLOR_TYPE_RGB);
    std::vector<png_bytep> rows(H);
    for (int y = 0; y < H; ++y) rows[y] = buf.data() + static_cast<size_t>(y) * W * 3;
    w.write_rows(rows);
    nlohmann::json scale{{"color_scale_min", lo}, {"color_scale_max", hi}};
    write_text_file(path + ".scale.json", scale.dump(2) + "\n");
}

}  // namespace dfd
