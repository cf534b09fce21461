#pragma once

// Operator outputs: red change overlays, ROI outlines, and the score CSV /
// events JSON / peak-frame PNG bundle written per run.

#include <charconv>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cablewatch/change_detect.hpp"
#include "cablewatch/image_io.hpp"
#include "cablewatch/pipeline.hpp"
#include "cablewatch/roi.hpp"

namespace cablewatch {

struct Rgb {
    std::uint8_t r, g, b;
};

inline constexpr Rgb kRoiOutlineColor{255, 200, 0};

inline RgbImage gray_to_rgb(const GrayImage& img) {
    RgbImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = img.pixels[i];
    return out;
}

/// Changed pixels become (255, 0.3v, 0.3v); all others stay (v, v, v).
inline RgbImage overlay_changes(const GrayImage& frame, const ChangeMap& change) {
    if (frame.width != change.width || frame.height != change.height)
        throw DataError("overlay_changes: frame/change map dimension mismatch");
    RgbImage out = gray_to_rgb(frame);
    for (std::size_t i = 0; i < change.bits.size(); ++i)
        if (change.bits[i]) {
            const auto dim = saturate_u8(0.3 * frame.pixels[i]);
            out.pixels[3 * i] = 255;
            out.pixels[3 * i + 1] = dim;
            out.pixels[3 * i + 2] = dim;
        }
    return out;
}

/// Calls plot(x, y) for every pixel of the Bresenham segment a -> b, endpoints included.
template <class Plot>
void bresenham_line(int x0, int y0, int x1, int y1, Plot&& plot) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
        plot(x0, y0);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

/// Pixel holding a continuous vertex coordinate, clamped into the raster.
inline std::pair<int, int> vertex_pixel(const Point2& v, int width, int height) {
    const int x = std::clamp(static_cast<int>(std::floor(v.x)), 0, width - 1);
    const int y = std::clamp(static_cast<int>(std::floor(v.y)), 0, height - 1);
    return {x, y};
}

inline void draw_roi_outline(RgbImage& img, const RoiPolygon& poly, Rgb color = kRoiOutlineColor) {
    const auto& v = poly.vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto [x0, y0] = vertex_pixel(v[i], img.width, img.height);
        auto [x1, y1] = vertex_pixel(v[(i + 1) % v.size()], img.width, img.height);
        bresenham_line(x0, y0, x1, y1, [&](int x, int y) { img.set(x, y, color.r, color.g, color.b); });
    }
}

// ---------------------------------------------------------------------------
// Score CSV

inline constexpr const char* kScoreCsvHeader = "frame,timestamp_ms,count,score,event_id";

/// Shortest decimal that round-trips to the same double.
inline std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Event id open at each record (0 = none), from the kept events.
inline std::vector<int> event_ids_for(const ScoreSeries& series, const std::vector<SlackEvent>& events) {
    std::vector<int> ids(series.size(), 0);
    std::size_t e = 0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto f = series[i].frame;
        while (e < events.size() && events[e].end_frame < f) ++e;
        if (e < events.size() && events[e].start_frame <= f) ids[i] = events[e].id;
    }
    return ids;
}

inline std::string score_csv(const ScoreSeries& series, const std::vector<SlackEvent>& events, std::size_t first = 0,
                             std::size_t last = static_cast<std::size_t>(-1)) {
    const auto ids = event_ids_for(series, events);
    std::string out = std::string(kScoreCsvHeader) + "\n";
    for (std::size_t i = first; i < series.size() && i < last; ++i) {
        const auto& r = series[i];
        out += std::to_string(r.frame) + ',' + std::to_string(r.timestamp_ms) + ',' + format_number(r.count) +
               ',' + format_number(r.score) + ',' + (ids[i] ? std::to_string(ids[i]) : std::string()) + '\n';
    }
    return out;
}

struct ParsedScores {
    ScoreSeries series;
    std::vector<int> event_ids;  // 0 = empty column
};

inline ParsedScores parse_score_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kScoreCsvHeader) throw DataError("score CSV: missing or wrong header");
    std::vector<ScoreRecord> recs;
    ParsedScores out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        for (;;) {
            auto comma = line.find(',', start);
            cols.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cols.size() != 5) throw DataError("score CSV line " + std::to_string(lineno) + ": expected 5 columns");
        auto parse = [&](const std::string& s, auto& v) {
            auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
                throw DataError("score CSV line " + std::to_string(lineno) + ": bad number '" + s + "'");
        };
        ScoreRecord r;
        parse(cols[0], r.frame);
        parse(cols[1], r.timestamp_ms);
        parse(cols[2], r.count);
        parse(cols[3], r.score);
        int id = 0;
        if (!cols[4].empty()) parse(cols[4], id);
        recs.push_back(r);
        out.event_ids.push_back(id);
    }
    out.series = ScoreSeries::from_records(std::move(recs));
    return out;
}

// ---------------------------------------------------------------------------
// Events JSON

inline nlohmann::ordered_json event_to_json(const SlackEvent& e) {
    return {{"id", e.id},
            {"start_frame", e.start_frame},
            {"end_frame", e.end_frame},
            {"peak_score", e.peak_score},
            {"peak_frame", e.peak_frame},
            {"start_ms", e.start_ms},
            {"end_ms", e.end_ms}};
}

inline nlohmann::ordered_json events_to_json(const std::vector<SlackEvent>& events) {
    auto j = nlohmann::ordered_json::array();
    for (const auto& e : events) j.push_back(event_to_json(e));
    return j;
}

inline std::vector<SlackEvent> events_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw DataError("events JSON: expected an array");
    std::vector<SlackEvent> out;
    try {
        for (const auto& e : j)
            out.push_back({e.at("id").get<int>(), e.at("start_frame").get<std::int64_t>(),
                           e.at("end_frame").get<std::int64_t>(), e.at("peak_score").get<double>(),
                           e.at("peak_frame").get<std::int64_t>(), e.at("start_ms").get<std::int64_t>(),
                           e.at("end_ms").get<std::int64_t>()});
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("events JSON: ") + ex.what());
    }
    return out;
}

inline std::vector<SlackEvent> plain_events(const std::vector<EventSnapshot>& snaps) {
    std::vector<SlackEvent> out;
    out.reserve(snaps.size());
    for (const auto& s : snaps) out.push_back(s.event);
    return out;
}

inline std::string event_png_name(const SlackEvent& e) {
    return "event_" + std::to_string(e.id) + "_frame_" + std::to_string(e.peak_frame) + ".png";
}

/// Peak-frame overlay with the ROI outline drawn on top.
inline RgbImage event_overlay(const EventSnapshot& snap, const std::vector<RoiPolygon>& outline) {
    auto img = overlay_changes(snap.frame.image(), snap.change);
    for (const auto& p : outline) draw_roi_outline(img, p);
    return img;
}

struct ExportedRun {
    fs::path csv;
    fs::path events_json;
    std::vector<fs::path> pngs;
};

/// Writes scores.csv, events.json and one overlay PNG per event into out_dir.
inline ExportedRun export_run(const ScoreSeries& series, const std::vector<EventSnapshot>& events,
                              const fs::path& out_dir, const std::vector<RoiPolygon>& outline = {}) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    ExportedRun out{out_dir / "scores.csv", out_dir / "events.json", {}};
    const auto plain = plain_events(events);
    write_file_text(out.csv, score_csv(series, plain));
    write_file_text(out.events_json, events_to_json(plain).dump(2) + "\n");
    for (const auto& snap : events) {
        auto path = out_dir / event_png_name(snap.event);
        write_png(path, event_overlay(snap, outline));
        out.pngs.push_back(path);
    }
    return out;
}

}  // namespace cablewatch
