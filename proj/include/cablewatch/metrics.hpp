#pragma once

// Detection scoring against synthetic ground truth.

#include <cmath>
#include <future>
#include <limits>
#include <optional>
#include <sstream>
#include <iomanip>

#include "cablewatch/config.hpp"
#include "cablewatch/pipeline.hpp"
#include "cablewatch/render.hpp"
#include "cablewatch/synth.hpp"

namespace cablewatch {

struct FrameInterval {
    std::int64_t start = 0;
    std::int64_t end = 0;  // inclusive
};

inline std::int64_t interval_overlap(const FrameInterval& a, const FrameInterval& b) {
    return std::max<std::int64_t>(0, std::min(a.end, b.end) - std::max(a.start, b.start) + 1);
}

namespace detail {

inline std::vector<FrameInterval> merge_intervals(std::vector<FrameInterval> v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    std::vector<FrameInterval> out;
    for (const auto& i : v) {
        if (!out.empty() && i.start <= out.back().end + 1)
            out.back().end = std::max(out.back().end, i.end);
        else
            out.push_back(i);
    }
    return out;
}

inline std::int64_t total_length(const std::vector<FrameInterval>& v) {
    std::int64_t n = 0;
    for (const auto& i : v) n += i.end - i.start + 1;
    return n;
}

}  // namespace detail

/// |A ∩ B| / |A ∪ B| over the frame sets covered by each list. NaN when both are empty.
inline double temporal_iou(const std::vector<FrameInterval>& a, const std::vector<FrameInterval>& b) {
    const auto ma = detail::merge_intervals(a), mb = detail::merge_intervals(b);
    std::int64_t inter = 0;
    for (const auto& x : ma)
        for (const auto& y : mb) inter += interval_overlap(x, y);
    const std::int64_t uni = detail::total_length(ma) + detail::total_length(mb) - inter;
    if (uni == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline std::vector<FrameInterval> intervals_of(const std::vector<SlackEvent>& events) {
    std::vector<FrameInterval> out;
    for (const auto& e : events) out.push_back({e.start_frame, e.end_frame});
    return out;
}

inline std::vector<FrameInterval> intervals_of(const std::vector<TruthInterval>& truth) {
    std::vector<FrameInterval> out;
    for (const auto& t : truth) out.push_back({t.start, t.end});
    return out;
}

struct DetectionScore {
    std::size_t events = 0;
    std::size_t truth_events = 0;
    double iou = std::numeric_limits<double>::quiet_NaN();
    /// Frames from the first ground-truth start to the opening of the first
    /// event overlapping it (0 if it opened earlier).
    std::optional<std::int64_t> latency;
    std::size_t false_events = 0;
};

inline DetectionScore score_detection(const std::vector<SlackEvent>& events, const std::vector<TruthInterval>& truth) {
    DetectionScore s;
    s.events = events.size();
    s.truth_events = truth.size();
    const auto gt = intervals_of(truth);
    s.iou = temporal_iou(intervals_of(events), gt);
    for (const auto& e : events) {
        bool hit = false;
        for (const auto& g : gt) hit = hit || interval_overlap({e.start_frame, e.end_frame}, g) > 0;
        if (!hit) ++s.false_events;
    }
    if (!gt.empty()) {
        for (const auto& e : events)
            if (interval_overlap({e.start_frame, e.end_frame}, gt.front()) > 0) {
                s.latency = std::max<std::int64_t>(0, e.start_frame - gt.front().start);
                break;
            }
    }
    return s;
}

struct BenchCell {
    std::string scenario;
    DetectorKind detector = DetectorKind::diff;
    int tau = 0;
    DetectionScore score;
};

/// Runs every (scenario, detector) pair with `base` config (detector field
/// replaced) on the default synthetic ROI. Cells run concurrently; output
/// order follows the input order.
inline std::vector<BenchCell> run_bench(const std::vector<std::string>& scenarios,
                                        const std::vector<DetectorKind>& detectors, const DetectorConfig& base,
                                        const RoiConfig& roi = default_synth_roi()) {
    std::vector<std::future<BenchCell>> jobs;
    for (const auto& id : scenarios) {
        const auto spec = scenario(id);
        for (auto det : detectors) {
            jobs.push_back(std::async(std::launch::async, [spec, det, base, roi] {
                DetectorConfig cfg = base;
                cfg.detector = det;
                SynthSource src(spec);
                auto res = run_pipeline(src, roi, cfg);
                return BenchCell{spec.name, det, res.config.tau,
                                 score_detection(plain_events(res.events), truth_intervals(spec))};
            }));
        }
    }
    std::vector<BenchCell> out;
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

inline std::string bench_csv(const std::vector<BenchCell>& cells) {
    std::ostringstream os;
    os << "scenario,detector,tau,events,truth_events,iou,latency_frames,false_events\n";
    for (const auto& c : cells) {
        os << c.scenario << ',' << to_string(c.detector) << ',' << c.tau << ',' << c.score.events << ','
           << c.score.truth_events << ',';
        if (!std::isnan(c.score.iou)) os << std::fixed << std::setprecision(4) << c.score.iou << std::defaultfloat;
        os << ',';
        if (c.score.latency) os << *c.score.latency;
        os << ',' << c.score.false_events << '\n';
    }
    return os.str();
}

inline std::string bench_table(const std::vector<BenchCell>& cells) {
    std::ostringstream os;
    os << std::left << std::setw(9) << "scenario" << std::setw(9) << "detector" << std::right << std::setw(5) << "tau"
       << std::setw(8) << "events" << std::setw(7) << "truth" << std::setw(8) << "iou" << std::setw(9) << "latency"
       << std::setw(8) << "false" << '\n';
    for (const auto& c : cells) {
        os << std::left << std::setw(9) << c.scenario << std::setw(9) << to_string(c.detector) << std::right
           << std::setw(5) << c.tau << std::setw(8) << c.score.events << std::setw(7) << c.score.truth_events;
        if (std::isnan(c.score.iou))
            os << std::setw(8) << "-";
        else
            os << std::setw(8) << std::fixed << std::setprecision(3) << c.score.iou << std::defaultfloat;
        if (c.score.latency)
            os << std::setw(9) << *c.score.latency;
        else
            os << std::setw(9) << "-";
        os << std::setw(8) << c.score.false_events << '\n';
    }
    return os.str();
}

}  // namespace cablewatch
