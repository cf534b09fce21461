#pragma once

// Ground-truthed synthetic cable scenes: a quadratic cable over a flat
// background, with downward sag injections, global flicker and Gaussian
// pixel noise. Every frame is a pure function of (spec, frame index).

#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "cablewatch/ingest.hpp"
#include "cablewatch/roi.hpp"

namespace cablewatch {

struct CableSpec {
    // the cable centerline is the quadratic y(x) through these three points
    Point2 left{0.0, 40.0};
    Point2 mid{160.0, 100.0};
    Point2 right{320.0, 90.0};
    double thickness = 5.0;
    double intensity = 180.0;

    friend bool operator==(const CableSpec&, const CableSpec&) = default;
};

struct SlackInjection {
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;  // inclusive; may run past the last rendered frame
    double sag_px = 0.0;
    double span_x0 = 0.0;
    double span_x1 = 0.0;

    friend bool operator==(const SlackInjection&, const SlackInjection&) = default;
};

struct SceneSpec {
    std::string name = "scene";
    int width = 320;
    int height = 240;
    std::int64_t frame_count = 100;
    double fps = 30.0;
    CableSpec cable;
    double background_intensity = 50.0;
    double noise_sigma = 0.0;
    double flicker_amplitude = 0.0;
    double flicker_period = 120.0;  // frames
    std::vector<SlackInjection> slack_events;
    std::uint64_t rng_seed = 1;

    friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Quadratic through the three cable control points.
inline double cable_base_y(const CableSpec& c, double x) {
    const auto& [x0, y0] = c.left;
    const auto& [x1, y1] = c.mid;
    const auto& [x2, y2] = c.right;
    return y0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2)) + y1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2)) +
           y2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
}

/// Temporal envelope in (0, 1] inside [start, end]: raised-cosine ramps over
/// the first and last 10% of the event's frames, 0 outside.
inline double slack_envelope(const SlackInjection& e, std::int64_t frame) {
    if (frame < e.start_frame || frame > e.end_frame) return 0.0;
    const std::int64_t len = e.end_frame - e.start_frame + 1;
    const std::int64_t ramp = std::max<std::int64_t>(1, std::llround(0.1 * static_cast<double>(len)));
    auto rc = [&](std::int64_t k) {
        return k >= ramp ? 1.0 : 0.5 * (1.0 - std::cos(std::numbers::pi * double(k + 1) / double(ramp + 1)));
    };
    return std::min(rc(frame - e.start_frame), rc(e.end_frame - frame));
}

/// Spatial profile over the affected span: flat core with raised-cosine
/// tapers over the outer quarter on each side.
inline double slack_profile(const SlackInjection& e, double x) {
    if (e.span_x1 <= e.span_x0 || x <= e.span_x0 || x >= e.span_x1) return 0.0;
    const double u = (x - e.span_x0) / (e.span_x1 - e.span_x0);
    constexpr double kTaper = 0.25;
    if (u < kTaper) return 0.5 * (1.0 - std::cos(std::numbers::pi * u / kTaper));
    if (u > 1.0 - kTaper) return 0.5 * (1.0 - std::cos(std::numbers::pi * (1.0 - u) / kTaper));
    return 1.0;
}

inline double sag_at(const SceneSpec& s, double x, std::int64_t frame) {
    double sag = 0.0;
    for (const auto& e : s.slack_events) sag += e.sag_px * slack_envelope(e, frame) * slack_profile(e, x);
    return sag;
}

/// Peak downward displacement at a frame (sum of active injections).
inline double frame_sag(const SceneSpec& s, std::int64_t frame) {
    double sag = 0.0;
    for (const auto& e : s.slack_events) sag += e.sag_px * slack_envelope(e, frame);
    return sag;
}

inline void validate(const SceneSpec& s) {
    if (s.width < kMinFrameSide || s.height < kMinFrameSide) throw ConfigError("width", "scene must be at least 8x8");
    if (s.frame_count < 1) throw ConfigError("frame_count", "must be >= 1");
    if (!(s.fps > 0.0)) throw ConfigError("fps", "must be > 0");
    if (!(s.cable.thickness > 0.0)) throw ConfigError("cable.thickness", "must be > 0");
    if (s.noise_sigma < 0.0) throw ConfigError("noise_sigma", "must be >= 0");
    if (!(s.flicker_period > 0.0)) throw ConfigError("flicker_period", "must be > 0");
    const auto& c = s.cable;
    if (!(c.left.x < c.mid.x && c.mid.x < c.right.x)) throw ConfigError("cable", "control points need increasing x");
    double max_sag = 0.0;
    for (const auto& e : s.slack_events) {
        if (e.end_frame < e.start_frame) throw ConfigError("slack_events", "end_frame before start_frame");
        if (e.sag_px < 0.0) throw ConfigError("slack_events", "sag_px must be >= 0");
        max_sag += e.sag_px;
    }
    const double half = 0.5 * c.thickness;
    for (int x = 0; x < s.width; ++x) {
        const double y = cable_base_y(c, x + 0.5);
        if (y - half < 0.0 || y + half + max_sag > s.height)
            throw ConfigError("cable", "cable leaves the image at x=" + std::to_string(x));
    }
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Box-Muller over raw mt19937_64 output, which is fully specified by the
/// standard (std::normal_distribution is not).
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : eng_(seed) {}
    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = (double((eng_() >> 11)) + 1.0) * 0x1.0p-53;  // (0, 1]
        const double u2 = double(eng_() >> 11) * 0x1.0p-53;            // [0, 1)
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace detail

/// Anti-aliased cable coverage of each pixel at one frame, 4x4 supersampled.
inline std::vector<double> cable_coverage(const SceneSpec& s, std::int64_t frame) {
    constexpr int kSub = 4;
    std::vector<double> cov(static_cast<std::size_t>(s.width) * s.height, 0.0);
    const double half = 0.5 * s.cable.thickness;
    auto center = [&](double x) { return cable_base_y(s.cable, x) + sag_at(s, x, frame); };
    for (int px = 0; px < s.width; ++px) {
        for (int sx = 0; sx < kSub; ++sx) {
            const double x = px + (sx + 0.5) / kSub;
            const double yc = center(x);
            const double slope = (center(x + 0.25) - center(x - 0.25)) / 0.5;
            const double reach = half * std::sqrt(1.0 + slope * slope);  // vertical half-extent of the band
            const int y_lo = std::max(0, static_cast<int>(std::floor(yc - reach)) - 1);
            const int y_hi = std::min(s.height - 1, static_cast<int>(std::ceil(yc + reach)) + 1);
            for (int py = y_lo; py <= y_hi; ++py)
                for (int sy = 0; sy < kSub; ++sy) {
                    const double y = py + (sy + 0.5) / kSub;
                    if (std::abs(y - yc) <= reach) cov[static_cast<std::size_t>(py) * s.width + px] += 1.0 / (kSub * kSub);
                }
        }
    }
    return cov;
}

inline GrayImage render_frame(const SceneSpec& s, std::int64_t frame) {
    const auto cov = cable_coverage(s, frame);
    const double flicker =
        1.0 + s.flicker_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(frame) / s.flicker_period);
    detail::NormalStream noise(detail::splitmix64(s.rng_seed ^ detail::splitmix64(static_cast<std::uint64_t>(frame))));
    GrayImage img(s.width, s.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double base = s.background_intensity + cov[i] * (s.cable.intensity - s.background_intensity);
        double v = base * flicker;
        if (s.noise_sigma > 0.0) v += s.noise_sigma * noise.next();
        img.pixels[i] = saturate_u8(v);
    }
    return img;
}

/// Renders frames on demand; frame i is identical however it is reached.
class SynthSource final : public FrameSource {
public:
    explicit SynthSource(SceneSpec spec) : spec_(std::move(spec)) {
        validate(spec_);
        meta_ = {spec_.frame_count, spec_.width, spec_.height, spec_.fps, spec_.name};
    }
    const SceneSpec& spec() const noexcept { return spec_; }
    const SequenceMeta& meta() const override { return meta_; }
    Frame frame_at(std::int64_t index) const override {
        check_index(index);
        return Frame(index, timestamp_from_fps(index, spec_.fps), render_frame(spec_, index));
    }

private:
    SceneSpec spec_;
    SequenceMeta meta_;
};

struct TruthInterval {
    std::int64_t start = 0;
    std::int64_t end = 0;
    double sag_px = 0.0;

    friend bool operator==(const TruthInterval&, const TruthInterval&) = default;
};

/// Injections clipped to the rendered frames; zero-sag injections render
/// nothing and are omitted.
inline std::vector<TruthInterval> truth_intervals(const SceneSpec& s) {
    std::vector<TruthInterval> out;
    for (const auto& e : s.slack_events) {
        if (e.sag_px <= 0.0) continue;
        const auto a = std::max<std::int64_t>(0, e.start_frame);
        const auto b = std::min<std::int64_t>(s.frame_count - 1, e.end_frame);
        if (a <= b) out.push_back({a, b, e.sag_px});
    }
    return out;
}

inline nlohmann::ordered_json ground_truth_json(const SceneSpec& s) {
    nlohmann::ordered_json j;
    j["events"] = nlohmann::ordered_json::array();
    for (const auto& t : truth_intervals(s)) j["events"].push_back({{"start", t.start}, {"end", t.end}, {"sag_px", t.sag_px}});
    j["per_frame_sag"] = nlohmann::ordered_json::array();
    for (std::int64_t f = 0; f < s.frame_count; ++f) j["per_frame_sag"].push_back(frame_sag(s, f));
    return j;
}


struct RenderedScene {
    fs::path raw;
    fs::path sidecar;
    fs::path truth;
};

/// Writes <name>.y8, its sidecar and <name>.truth.json into out_dir.
inline RenderedScene render_scene(const SceneSpec& s, const fs::path& out_dir) {
    validate(s);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    RenderedScene r{out_dir / (s.name + ".y8"), {}, out_dir / (s.name + ".truth.json")};
    r.sidecar = y8_sidecar_path(r.raw);
    Y8Writer w(r.raw, s.width, s.height, s.fps, s.name);
    for (std::int64_t f = 0; f < s.frame_count; ++f) w.write(render_frame(s, f));
    w.finish();
    write_file_text(r.truth, ground_truth_json(s).dump(2) + "\n");
    return r;
}

// ---------------------------------------------------------------------------
// Scene JSON

inline nlohmann::ordered_json scene_to_json(const SceneSpec& s) {
    nlohmann::ordered_json j;
    j["name"] = s.name;
    j["width"] = s.width;
    j["height"] = s.height;
    j["frame_count"] = s.frame_count;
    j["fps"] = s.fps;
    j["cable"] = {{"points", {{s.cable.left.x, s.cable.left.y}, {s.cable.mid.x, s.cable.mid.y}, {s.cable.right.x, s.cable.right.y}}},
                  {"thickness", s.cable.thickness},
                  {"intensity", s.cable.intensity}};
    j["background_intensity"] = s.background_intensity;
    j["noise_sigma"] = s.noise_sigma;
    j["flicker_amplitude"] = s.flicker_amplitude;
    j["flicker_period"] = s.flicker_period;
    j["slack_events"] = nlohmann::ordered_json::array();
    for (const auto& e : s.slack_events)
        j["slack_events"].push_back({{"start_frame", e.start_frame},
                                     {"end_frame", e.end_frame},
                                     {"sag_px", e.sag_px},
                                     {"span", {e.span_x0, e.span_x1}}});
    j["rng_seed"] = s.rng_seed;
    return j;
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("scene", "expected a JSON object");
    SceneSpec s;
    try {
        s.name = j.value("name", s.name);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.frame_count = j.value("frame_count", s.frame_count);
        s.fps = j.value("fps", s.fps);
        if (j.contains("cable")) {
            const auto& c = j.at("cable");
            if (c.contains("points")) {
                const auto& p = c.at("points");
                if (!p.is_array() || p.size() != 3) throw ConfigError("cable.points", "need exactly 3 [x, y] points");
                s.cable.left = {p[0].at(0).get<double>(), p[0].at(1).get<double>()};
                s.cable.mid = {p[1].at(0).get<double>(), p[1].at(1).get<double>()};
                s.cable.right = {p[2].at(0).get<double>(), p[2].at(1).get<double>()};
            }
            s.cable.thickness = c.value("thickness", s.cable.thickness);
            s.cable.intensity = c.value("intensity", s.cable.intensity);
        }
        s.background_intensity = j.value("background_intensity", s.background_intensity);
        s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
        s.flicker_amplitude = j.value("flicker_amplitude", s.flicker_amplitude);
        s.flicker_period = j.value("flicker_period", s.flicker_period);
        if (j.contains("slack_events")) {
            for (const auto& e : j.at("slack_events")) {
                SlackInjection inj;
                inj.start_frame = e.at("start_frame").get<std::int64_t>();
                inj.end_frame = e.at("end_frame").get<std::int64_t>();
                inj.sag_px = e.at("sag_px").get<double>();
                const auto& span = e.at("span");
                inj.span_x0 = span.at(0).get<double>();
                inj.span_x1 = span.at(1).get<double>();
                s.slack_events.push_back(inj);
            }
        }
        s.rng_seed = j.value("rng_seed", s.rng_seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("scene", e.what());
    }
    validate(s);
    return s;
}

// ---------------------------------------------------------------------------
// Scenario suite

/// Default slack ROI for the synthetic scene geometry: an L-shaped region
/// over the right-hand run of the cable, where injected slack forms.
inline RoiConfig default_synth_roi() {
    return {"synth", {{"slack", {{170, 70}, {310, 70}, {310, 200}, {240, 200}, {240, 160}, {170, 160}}}}};
}

/// Whole-frame ROI for a scene.
inline RoiConfig full_frame_roi(int width, int height, std::string source_id = "synth") {
    return {std::move(source_id),
            {{"full", {{0, 0}, {double(width), 0}, {double(width), double(height)}, {0, double(height)}}}}};
}

/// S1 medium slack, maintained to the end of the clip.
/// S2 severe propagating slack: three clustered episodes, then a large final one.
/// S3 noise only. S4 lighting flicker. S5 slack outside the default ROI.
inline SceneSpec scenario(const std::string& id) {
    SceneSpec s;
    s.name = id;
    if (id == "S1") {
        s.frame_count = 400;
        s.noise_sigma = 2.0;
        s.slack_events = {{250, 449, 5.0, 180.0, 300.0}};
        s.rng_seed = 101;
    } else if (id == "S2") {
        s.frame_count = 900;
        s.noise_sigma = 2.0;
        s.slack_events = {{200, 259, 3.0, 180.0, 240.0},
                          {330, 389, 3.5, 210.0, 270.0},
                          {460, 519, 4.0, 240.0, 300.0},
                          {600, 1099, 10.0, 170.0, 310.0}};
        s.rng_seed = 202;
    } else if (id == "S3") {
        s.frame_count = 2000;
        s.noise_sigma = 4.0;
        s.rng_seed = 303;
    } else if (id == "S4") {
        s.frame_count = 1200;
        s.noise_sigma = 2.0;
        s.flicker_amplitude = 0.03;
        s.flicker_period = 120.0;
        s.rng_seed = 404;
    } else if (id == "S5") {
        s.frame_count = 400;
        s.noise_sigma = 2.0;
        s.slack_events = {{250, 449, 6.0, 20.0, 130.0}};
        s.rng_seed = 505;
    } else {
        throw ConfigError("scenario", "unknown scenario '" + id + "' (S1..S5)");
    }
    return s;
}

inline std::vector<SceneSpec> scenario_suite() {
    return {scenario("S1"), scenario("S2"), scenario("S3"), scenario("S4"), scenario("S5")};
}

}  // namespace cablewatch
