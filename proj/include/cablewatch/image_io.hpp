#pragma once

// PGM (binary P5) and PNG codecs. PNG output uses fixed zlib settings and
// writes no time or text chunks, so identical rasters encode to identical bytes.

#include <png.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include "cablewatch/frame.hpp"

namespace cablewatch {

namespace fs = std::filesystem;

inline std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return data;
}

inline void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_file_text(const fs::path& path, const std::string& text) {
    write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// ---------------------------------------------------------------------------
// PGM

inline std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
    std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

inline GrayImage decode_pgm(std::span<const std::uint8_t> data, const std::string& what = "pgm") {
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < data.size()) {
            if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else if (std::isspace(data[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_ws();
        long v = 0;
        std::size_t start = pos;
        while (pos < data.size() && std::isdigit(data[pos])) v = v * 10 + (data[pos++] - '0');
        if (pos == start) throw DataError(what + ": malformed PGM header");
        return v;
    };
    if (data.size() < 2 || data[0] != 'P' || data[1] != '5') throw DataError(what + ": not a binary PGM (P5)");
    pos = 2;
    long w = read_int(), h = read_int(), maxval = read_int();
    if (maxval != 255) throw DataError(what + ": only maxval 255 is supported");
    if (pos >= data.size() || !std::isspace(data[pos])) throw DataError(what + ": malformed PGM header");
    ++pos;
    std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (data.size() - pos < n) throw DataError(what + ": truncated PGM payload");
    return GrayImage(static_cast<int>(w), static_cast<int>(h),
                     std::vector<std::uint8_t>(data.begin() + pos, data.begin() + pos + n));
}

inline void write_pgm(const fs::path& path, const GrayImage& img) { write_file_bytes(path, encode_pgm(img)); }

inline GrayImage read_pgm(const fs::path& path) { return decode_pgm(read_file_bytes(path), path.string()); }

// ---------------------------------------------------------------------------
// PNG

namespace detail {

struct PngWriteState {
    std::vector<std::uint8_t>* out;
};

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
    auto* st = static_cast<PngWriteState*>(png_get_io_ptr(png));
    st->out->insert(st->out->end(), data, data + len);
}

inline void png_flush_noop(png_structp) {}

struct PngReadState {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;
};

inline void png_read_from_span(png_structp png, png_bytep out, png_size_t len) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->data.size() - st->pos < len) png_error(png, "truncated PNG");
    std::memcpy(out, st->data.data() + st->pos, len);
    st->pos += len;
}

inline void png_warning_ignore(png_structp, png_const_charp) {}

// All libpng calls go through these two helpers; errors longjmp back into the
// helper (no C++ objects live across the setjmp) and are rethrown as DataError.
inline bool encode_png_raw_impl(png_structp png, png_infop info, int width, int height, int channels,
                                const std::uint8_t* pixels) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(pixels + y * stride));
    png_write_end(png, nullptr);
    return true;
}

inline std::vector<std::uint8_t> encode_png_raw(int width, int height, int channels, const std::uint8_t* pixels) {
    std::vector<std::uint8_t> out;
    PngWriteState state{&out};
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_ignore);
    if (!png) throw IoError("png: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    png_set_write_fn(png, &state, png_write_to_vector, png_flush_noop);
    const bool ok = info && encode_png_raw_impl(png, info, width, height, channels, pixels);
    png_destroy_write_struct(&png, &info);
    if (!ok) throw DataError("png: encoding failed");
    return out;
}

struct PngHeader {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int channels = 0;
    std::size_t rowbytes = 0;
};

inline bool decode_png_header(png_structp png, png_infop info, PngHeader* hdr) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) != 8) return false;
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    hdr->width = png_get_image_width(png, info);
    hdr->height = png_get_image_height(png, info);
    hdr->channels = png_get_channels(png, info);
    hdr->rowbytes = png_get_rowbytes(png, info);
    return true;
}

inline bool decode_png_rows(png_structp png, png_bytepp rows) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_image(png, rows);
    png_read_end(png, nullptr);
    return true;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const GrayImage& img) {
    return detail::encode_png_raw(img.width, img.height, 1, img.pixels.data());
}

inline std::vector<std::uint8_t> encode_png(const RgbImage& img) {
    return detail::encode_png_raw(img.width, img.height, 3, img.pixels.data());
}

/// Decoded PNG: either gray (channels == 1) or RGB (channels == 3).
struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

inline DecodedPng decode_png(std::span<const std::uint8_t> data, const std::string& what = "png") {
    if (data.size() < 8 || png_sig_cmp(data.data(), 0, 8) != 0) throw DataError(what + ": not a PNG file");
    detail::PngReadState state{data, 0};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, detail::png_warning_ignore);
    if (!png) throw IoError("png: cannot allocate reader");
    png_infop info = png_create_info_struct(png);
    png_set_read_fn(png, &state, detail::png_read_from_span);
    detail::PngHeader hdr;
    DecodedPng out;
    bool ok = info && detail::decode_png_header(png, info, &hdr) && (hdr.channels == 1 || hdr.channels == 3);
    if (ok) {
        out.width = static_cast<int>(hdr.width);
        out.height = static_cast<int>(hdr.height);
        out.channels = hdr.channels;
        out.pixels.resize(hdr.rowbytes * hdr.height);
        std::vector<png_bytep> rows(hdr.height);
        for (png_uint_32 y = 0; y < hdr.height; ++y) rows[y] = out.pixels.data() + y * hdr.rowbytes;
        ok = detail::decode_png_rows(png, rows.data());
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (!ok) throw DataError(what + ": unsupported or corrupt PNG (8-bit gray/RGB expected)");
    return out;
}

inline void write_png(const fs::path& path, const GrayImage& img) { write_file_bytes(path, encode_png(img)); }
inline void write_png(const fs::path& path, const RgbImage& img) { write_file_bytes(path, encode_png(img)); }

}  // namespace cablewatch
