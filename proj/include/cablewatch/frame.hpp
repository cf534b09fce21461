#pragma once

#include <cstddef>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cablewatch {

/// Error categories map onto CLI exit codes (see cli.hpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem or stream failure; message carries the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

/// A configuration value violates an invariant.
class ConfigError : public Error {
public:
    ConfigError(std::string field, std::string message)
        : Error(field + ": " + message), field_(std::move(field)), message_(std::move(message)) {}

    const std::string& field() const noexcept { return field_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string field_;
    std::string message_;
};

/// Input data is malformed (truncated raw file, mixed dimensions, ...).
class DataError : public Error {
public:
    using Error::Error;
};

inline constexpr int kMinFrameSide = 8;

/// Single-channel 8-bit raster without sequence bookkeeping. Used for
/// intermediate results (blurred frames, reference means, crops).
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}
    GrayImage(int w, int h, std::vector<std::uint8_t> data) : width(w), height(h), pixels(std::move(data)) {
        if (pixels.size() != size())
            throw DataError("pixel buffer length " + std::to_string(pixels.size()) + " != " +
                            std::to_string(w) + "x" + std::to_string(h));
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::span<const std::uint8_t> row(int y) const {
        return {pixels.data() + static_cast<std::size_t>(y) * width, static_cast<std::size_t>(width)};
    }
    bool same_shape(const GrayImage& o) const noexcept { return width == o.width && height == o.height; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// One timestamped grayscale frame of a sequence. Immutable once built.
class Frame {
public:
    Frame() = default;
    Frame(std::int64_t index, std::int64_t timestamp_ms, GrayImage image)
        : index_(index), timestamp_ms_(timestamp_ms), image_(std::move(image)) {
        if (index_ < 0) throw DataError("frame index must be nonnegative");
        if (timestamp_ms_ < 0) throw DataError("frame timestamp must be nonnegative");
        if (image_.width < kMinFrameSide || image_.height < kMinFrameSide)
            throw DataError("frame must be at least 8x8, got " + std::to_string(image_.width) + "x" +
                            std::to_string(image_.height));
        if (image_.pixels.size() != image_.size()) throw DataError("frame pixel buffer has wrong length");
    }

    std::int64_t index() const noexcept { return index_; }
    std::int64_t timestamp_ms() const noexcept { return timestamp_ms_; }
    int width() const noexcept { return image_.width; }
    int height() const noexcept { return image_.height; }
    const GrayImage& image() const noexcept { return image_; }
    std::span<const std::uint8_t> pixels() const noexcept { return image_.pixels; }

    friend bool operator==(const Frame&, const Frame&) = default;

private:
    std::int64_t index_ = 0;
    std::int64_t timestamp_ms_ = 0;
    GrayImage image_;
};

struct SequenceMeta {
    std::int64_t frame_count = 0;
    int width = 0;
    int height = 0;
    double fps = 30.0;
    std::string source_id;
};

/// round(1000 * index / fps), used whenever a source carries no timestamps.
inline std::int64_t timestamp_from_fps(std::int64_t index, double fps) {
    if (!(fps > 0.0)) throw ConfigError("fps", "must be > 0");
    return static_cast<std::int64_t>(std::llround(1000.0 * static_cast<double>(index) / fps));
}

/// Interleaved 8-bit RGB raster.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // r,g,b per pixel

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
    std::uint8_t* px(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* px(int x, int y) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        auto* p = px(x, y);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Round half away from zero and clamp into [0, 255].
inline std::uint8_t saturate_u8(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(v + 0.5);
}

}  // namespace cablewatch
