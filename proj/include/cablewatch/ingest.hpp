#pragma once

#include <algorithm>
#include <memory>
#include <optional>

#include <nlohmann/json.hpp>

#include "cablewatch/frame.hpp"
#include "cablewatch/image_io.hpp"

namespace cablewatch {

/// Luma of one RGB pixel: round(0.299R + 0.587G + 0.114B), evaluated exactly
/// in integers (ties round up).
constexpr std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
    return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

inline GrayImage to_grayscale(const RgbImage& rgb) {
    if (rgb.pixels.size() != rgb.pixel_count() * 3) throw DataError("rgb raster has wrong length");
    GrayImage out(rgb.width, rgb.height);
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = luma(rgb.pixels[3 * i], rgb.pixels[3 * i + 1], rgb.pixels[3 * i + 2]);
    return out;
}

inline GrayImage load_gray_image(const fs::path& path) {
    auto bytes = read_file_bytes(path);
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".pgm") return decode_pgm(bytes, path.string());
    auto png = decode_png(bytes, path.string());
    if (png.channels == 1) return GrayImage(png.width, png.height, std::move(png.pixels));
    RgbImage rgb(png.width, png.height);
    rgb.pixels = std::move(png.pixels);
    return to_grayscale(rgb);
}

/// Random-access frame provider. Implementations must return identical
/// frames for identical indices (iteration is deterministic).
class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual const SequenceMeta& meta() const = 0;
    virtual Frame frame_at(std::int64_t index) const = 0;

protected:
    void check_index(std::int64_t index) const {
        if (index < 0 || index >= meta().frame_count)
            throw DataError("frame index " + std::to_string(index) + " out of range [0, " +
                            std::to_string(meta().frame_count) + ")");
    }
};

/// Frames held in memory. Indices are renumbered 0..n-1 and timestamps kept.
class MemorySource final : public FrameSource {
public:
    MemorySource(std::vector<GrayImage> images, double fps, std::string source_id = "memory") {
        if (images.empty()) throw DataError("empty frame list");
        meta_ = {static_cast<std::int64_t>(images.size()), images.front().width, images.front().height, fps,
                 std::move(source_id)};
        frames_.reserve(images.size());
        for (std::size_t i = 0; i < images.size(); ++i) {
            if (!images[i].same_shape(images.front())) throw DataError("mixed frame dimensions in sequence");
            auto idx = static_cast<std::int64_t>(i);
            frames_.emplace_back(idx, timestamp_from_fps(idx, fps), std::move(images[i]));
        }
    }

    const SequenceMeta& meta() const override { return meta_; }
    Frame frame_at(std::int64_t index) const override {
        check_index(index);
        return frames_[static_cast<std::size_t>(index)];
    }

private:
    SequenceMeta meta_;
    std::vector<Frame> frames_;
};

namespace detail {

inline std::pair<int, int> probe_dimensions(const fs::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") {
        std::ifstream in(path, std::ios::binary);
        std::uint8_t hdr[24] = {};
        if (!in.read(reinterpret_cast<char*>(hdr), 24)) throw DataError(path.string() + ": truncated PNG");
        auto be32 = [&](int o) {
            return (std::uint32_t(hdr[o]) << 24) | (std::uint32_t(hdr[o + 1]) << 16) | (std::uint32_t(hdr[o + 2]) << 8) |
                   std::uint32_t(hdr[o + 3]);
        };
        return {static_cast<int>(be32(16)), static_cast<int>(be32(20))};
    }
    auto img = read_pgm(path);
    return {img.width, img.height};
}

}  // namespace detail

/// Directory of lexicographically ordered .pgm / .png files. An optional
/// `sequence.json` ({"fps": x, "source_id": s}) supplies the frame rate.
class DirectorySource final : public FrameSource {
public:
    explicit DirectorySource(const fs::path& dir) {
        std::error_code ec;
        if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
        for (const auto& entry : fs::directory_iterator(dir)) {
            auto ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (entry.is_regular_file() && (ext == ".pgm" || ext == ".png")) files_.push_back(entry.path());
        }
        std::sort(files_.begin(), files_.end(),
                  [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
        if (files_.empty()) throw DataError("no PGM/PNG frames in " + dir.string());

        meta_.frame_count = static_cast<std::int64_t>(files_.size());
        meta_.source_id = dir.filename().string();
        if (meta_.source_id.empty()) meta_.source_id = dir.parent_path().filename().string();
        auto side = dir / "sequence.json";
        if (fs::exists(side)) {
            auto j = nlohmann::json::parse(read_file_bytes(side), nullptr, false);
            if (j.is_discarded() || !j.is_object()) throw DataError(side.string() + ": invalid JSON");
            meta_.fps = j.value("fps", 30.0);
            meta_.source_id = j.value("source_id", meta_.source_id);
        }
        if (!(meta_.fps > 0.0)) throw DataError(side.string() + ": fps must be > 0");
        for (const auto& f : files_) {
            auto [w, h] = detail::probe_dimensions(f);
            if (&f == &files_.front()) {
                meta_.width = w;
                meta_.height = h;
            } else if (w != meta_.width || h != meta_.height) {
                throw DataError("mixed dimensions: " + f.string() + " is " + std::to_string(w) + "x" +
                                std::to_string(h) + ", expected " + std::to_string(meta_.width) + "x" +
                                std::to_string(meta_.height));
            }
        }
    }

    const SequenceMeta& meta() const override { return meta_; }
    Frame frame_at(std::int64_t index) const override {
        check_index(index);
        auto img = load_gray_image(files_[static_cast<std::size_t>(index)]);
        if (img.width != meta_.width || img.height != meta_.height)
            throw DataError("mixed dimensions: " + files_[static_cast<std::size_t>(index)].string());
        return Frame(index, timestamp_from_fps(index, meta_.fps), std::move(img));
    }

private:
    SequenceMeta meta_;
    std::vector<fs::path> files_;
};

inline fs::path y8_sidecar_path(const fs::path& raw) { return fs::path(raw.string() + ".json"); }

/// Tightly packed 8-bit luma frames with a JSON sidecar at `<file>.json`:
/// {"width": int, "height": int, "fps": float}.
class RawY8Source final : public FrameSource {
public:
    explicit RawY8Source(fs::path path) : path_(std::move(path)) {
        auto side = y8_sidecar_path(path_);
        if (!fs::exists(path_)) throw IoError("missing raw file: " + path_.string());
        if (!fs::exists(side)) throw IoError("missing sidecar: " + side.string());
        auto j = nlohmann::json::parse(read_file_bytes(side), nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw DataError(side.string() + ": invalid JSON");
        try {
            meta_.width = j.at("width").get<int>();
            meta_.height = j.at("height").get<int>();
            meta_.fps = j.at("fps").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(side.string() + ": " + e.what());
        }
        meta_.source_id = j.value("source_id", path_.stem().string());
        if (meta_.width < kMinFrameSide || meta_.height < kMinFrameSide)
            throw DataError(side.string() + ": frames must be at least 8x8");
        if (!(meta_.fps > 0.0)) throw DataError(side.string() + ": fps must be > 0");
        frame_bytes_ = static_cast<std::uintmax_t>(meta_.width) * static_cast<std::uintmax_t>(meta_.height);
        auto size = fs::file_size(path_);
        if (size % frame_bytes_ != 0)
            throw DataError(path_.string() + ": truncated raw file (" + std::to_string(size % frame_bytes_) +
                            " trailing bytes do not form a whole frame)");
        meta_.frame_count = static_cast<std::int64_t>(size / frame_bytes_);
        if (meta_.frame_count == 0) throw DataError(path_.string() + ": empty raw file");
    }

    const SequenceMeta& meta() const override { return meta_; }
    Frame frame_at(std::int64_t index) const override {
        check_index(index);
        std::ifstream in(path_, std::ios::binary);
        if (!in) throw IoError("cannot open " + path_.string());
        in.seekg(static_cast<std::streamoff>(index * frame_bytes_));
        std::vector<std::uint8_t> buf(frame_bytes_);
        if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
            throw IoError("short read in " + path_.string());
        return Frame(index, timestamp_from_fps(index, meta_.fps), GrayImage(meta_.width, meta_.height, std::move(buf)));
    }

private:
    fs::path path_;
    SequenceMeta meta_;
    std::uintmax_t frame_bytes_ = 0;
};

inline std::shared_ptr<const FrameSource> open_source(const fs::path& path) {
    std::error_code ec;
    if (!fs::exists(path, ec)) throw IoError("missing input: " + path.string());
    if (fs::is_directory(path, ec)) return std::make_shared<DirectorySource>(path);
    return std::make_shared<RawY8Source>(path);
}

/// Single-consumer cursor over a FrameSource, yielding frames in index order.
class FrameSequence {
public:
    explicit FrameSequence(std::shared_ptr<const FrameSource> source) : source_(std::move(source)) {}

    const SequenceMeta& meta() const { return source_->meta(); }
    std::optional<Frame> next() {
        if (cursor_ >= source_->meta().frame_count) return std::nullopt;
        return source_->frame_at(cursor_++);
    }
    void rewind() noexcept { cursor_ = 0; }
    const FrameSource& source() const noexcept { return *source_; }

private:
    std::shared_ptr<const FrameSource> source_;
    std::int64_t cursor_ = 0;
};

inline FrameSequence open_sequence(const fs::path& path) { return FrameSequence(open_source(path)); }

/// Appends frames to a .y8 file and writes its sidecar on finish().
class Y8Writer {
public:
    Y8Writer(fs::path path, int width, int height, double fps, std::string source_id = {})
        : path_(std::move(path)), width_(width), height_(height), fps_(fps), source_id_(std::move(source_id)),
          out_(path_, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot create " + path_.string());
    }

    void write(const GrayImage& img) {
        if (img.width != width_ || img.height != height_) throw DataError("Y8Writer: frame dimension mismatch");
        out_.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
        if (!out_) throw IoError("write failed: " + path_.string());
    }

    void finish() {
        out_.close();
        nlohmann::ordered_json j;
        j["width"] = width_;
        j["height"] = height_;
        j["fps"] = fps_;
        if (!source_id_.empty()) j["source_id"] = source_id_;
        write_file_text(y8_sidecar_path(path_), j.dump(2) + "\n");
    }

private:
    fs::path path_;
    int width_, height_;
    double fps_;
    std::string source_id_;
    std::ofstream out_;
};

}  // namespace cablewatch
