#pragma once

// Streaming composition: load -> mask -> blur -> reference subtraction ->
// threshold -> count -> running average -> events. One SlackMonitor per
// video source; memory is bounded by the reference history.

#include <memory>
#include <optional>

#include "cablewatch/alt_detect.hpp"
#include "cablewatch/calibrate.hpp"
#include "cablewatch/change_detect.hpp"
#include "cablewatch/config.hpp"
#include "cablewatch/ingest.hpp"
#include "cablewatch/roi.hpp"

namespace cablewatch {

/// A kept event with the raw frame and change map at its peak.
struct EventSnapshot {
    SlackEvent event;
    Frame frame;
    ChangeMap change;
};

struct FrameStep {
    ScoreRecord record;
    ChangeMap change;
    bool event_open = false;
    std::optional<SlackEvent> closed;
};

class SlackMonitor {
public:
    SlackMonitor(DetectorConfig config, RoiMask mask)
        : config_(std::move(config)), mask_(std::move(mask)), history_(config_.reference.history_needed()),
          gmm_(config_.gmm), tracker_(config_.event_rule()) {
        validate(config_);
    }

    const DetectorConfig& config() const noexcept { return config_; }
    const RoiMask& mask() const noexcept { return mask_; }
    const ScoreSeries& series() const noexcept { return series_; }
    const std::vector<EventSnapshot>& events() const noexcept { return events_; }
    bool event_open() const noexcept { return tracker_.is_open(); }
    const EventTracker& tracker() const noexcept { return tracker_; }

    /// Takes effect from the next frame. Changing blur, reference policy,
    /// detector or detector parameters restarts the reference state, and the
    /// frame after the change becomes the new seed frame.
    void set_config(DetectorConfig c) {
        validate(c);
        const bool restart = c.detector != config_.detector || !(c.blur == config_.blur) ||
                             !(c.reference == config_.reference) || !(c.gmm == config_.gmm) ||
                             c.edgefit.degree != config_.edgefit.degree ||
                             c.edgefit.canny_low != config_.edgefit.canny_low ||
                             c.edgefit.canny_high != config_.edgefit.canny_high;
        config_ = std::move(c);
        tracker_.set_rule(config_.event_rule());
        if (restart) restart_reference();
    }

    /// The edge-profile baseline depends on the mask, so edgefit re-seeds.
    void set_mask(RoiMask m) {
        if (m.width() != mask_.width() || m.height() != mask_.height())
            throw ConfigError("polygons", "mask dimensions do not match the video");
        mask_ = std::move(m);
        if (config_.detector == DetectorKind::edgefit) restart_reference();
    }

    /// Processes the next frame; the seed frame yields no record.
    std::optional<FrameStep> process(const Frame& frame) {
        if (frame.width() != mask_.width() || frame.height() != mask_.height())
            throw DataError("frame " + std::to_string(frame.index()) + " does not match the ROI mask dimensions");
        if (last_index_ && frame.index() != *last_index_ + 1)
            throw DataError("expected frame " + std::to_string(*last_index_ + 1) + ", got " +
                            std::to_string(frame.index()));
        if (!origin_) origin_ = frame.index();
        last_index_ = frame.index();
        const std::int64_t n = frame.index() - *origin_;

        std::optional<std::pair<ChangeMap, double>> measured;
        switch (config_.detector) {
            case DetectorKind::diff: measured = step_diff(frame, n); break;
            case DetectorKind::gmm: measured = step_gmm(frame, n); break;
            case DetectorKind::edgefit: measured = step_edgefit(frame, n); break;
        }
        if (!measured) return std::nullopt;

        FrameStep step;
        step.change = std::move(measured->first);
        step.record = series_.update(frame.index(), frame.timestamp_ms(), measured->second,
                                     static_cast<std::size_t>(config_.avg_window));
        step.closed = tracker_.feed(step.record);
        if (step.closed) events_.push_back({*step.closed, std::move(peak_frame_), std::move(peak_change_)});
        if (tracker_.peak_updated()) {
            peak_frame_ = frame;
            peak_change_ = step.change;
        }
        step.event_open = tracker_.is_open();
        return step;
    }

    /// Closes an event still open at end of input.
    std::optional<SlackEvent> finish() {
        auto ev = tracker_.finish();
        if (ev) events_.push_back({*ev, std::move(peak_frame_), std::move(peak_change_)});
        return ev;
    }

private:
    void restart_reference() {
        history_ = FrameHistory(config_.reference.history_needed());
        gmm_ = GmmModel(config_.gmm);
        baseline_.reset();
        origin_.reset();
        if (last_index_) origin_ = *last_index_ + 1;
    }

    std::optional<std::pair<ChangeMap, double>> step_diff(const Frame& frame, std::int64_t n) {
        auto blurred = apply_blur(frame.image(), config_.blur);
        if (n == 0) {
            history_.push(0, std::move(blurred));
            return std::nullopt;
        }
        auto ref = reference_frame(history_, n, config_.reference);
        auto cm = subtract_and_threshold(blurred, ref, mask_, config_.tau, frame.index());
        history_.push(n, std::move(blurred));
        const double count = static_cast<double>(cm.count);
        return std::make_pair(std::move(cm), count);
    }

    std::optional<std::pair<ChangeMap, double>> step_gmm(const Frame& frame, std::int64_t n) {
        auto fg = gmm_.update_and_classify(apply_blur(frame.image(), config_.blur));
        if (n == 0) return std::nullopt;
        ChangeMap cm{frame.index(), frame.width(), frame.height(), std::move(fg), 0};
        for (std::size_t i = 0; i < cm.bits.size(); ++i) {
            cm.bits[i] &= mask_.bits()[i];
            cm.count += cm.bits[i];
        }
        const double count = static_cast<double>(cm.count);
        return std::make_pair(std::move(cm), count);
    }

    std::optional<std::pair<ChangeMap, double>> step_edgefit(const Frame& frame, std::int64_t n) {
        const auto& p = config_.edgefit;
        auto edges = canny(frame.image(), p.canny_low, p.canny_high, config_.blur);
        if (n == 0) {
            const auto pts = edge_profile(edges, mask_);
            baseline_ = polyfit_least_squares(pts, p.degree);
            return std::nullopt;
        }
        const auto dev = edge_deviation_score(edges, *baseline_, mask_);
        ChangeMap cm{frame.index(), frame.width(), frame.height(),
                     std::vector<std::uint8_t>(static_cast<std::size_t>(frame.width()) * frame.height(), 0), 0};
        for (const auto& pt : edge_profile(edges, mask_)) {
            cm.bits[static_cast<std::size_t>(pt.y) * cm.width + static_cast<std::size_t>(pt.x)] = 1;
            ++cm.count;
        }
        return std::make_pair(std::move(cm), dev.score);
    }

    DetectorConfig config_;
    RoiMask mask_;
    FrameHistory history_;
    GmmModel gmm_;
    std::optional<EdgeFitModel> baseline_;
    ScoreSeries series_;
    EventTracker tracker_;
    std::vector<EventSnapshot> events_;
    Frame peak_frame_;
    ChangeMap peak_change_;
    std::optional<std::int64_t> origin_;
    std::optional<std::int64_t> last_index_;
};

struct PipelineResult {
    SequenceMeta meta;
    DetectorConfig config;  // as run (tau resolved when auto_tau was set)
    std::optional<double> calibrated_sigma;
    ScoreSeries series;
    std::vector<EventSnapshot> events;
};

/// Resolves auto_tau against the first calibration_frames of the source.
inline DetectorConfig resolve_config(DetectorConfig cfg, const FrameSource& src, const RoiMask& mask,
                                     std::optional<double>* sigma_out = nullptr) {
    if (cfg.auto_tau) {
        const double sigma = measure_noise_sigma(src, mask, cfg.calibration_frames);
        cfg.tau = tau_from_sigma(sigma);
        cfg.auto_tau = false;
        if (sigma_out) *sigma_out = sigma;
    }
    validate(cfg);
    return cfg;
}

inline PipelineResult run_pipeline(const FrameSource& src, const RoiMask& mask, const DetectorConfig& config) {
    PipelineResult res;
    res.meta = src.meta();
    res.config = resolve_config(config, src, mask, &res.calibrated_sigma);
    SlackMonitor monitor(res.config, mask);
    for (std::int64_t i = 0; i < res.meta.frame_count; ++i) monitor.process(src.frame_at(i));
    monitor.finish();
    res.series = monitor.series();
    res.events = monitor.events();
    return res;
}

inline PipelineResult run_pipeline(const FrameSource& src, const RoiConfig& roi, const DetectorConfig& config) {
    return run_pipeline(src, build_mask(roi, src.meta().width, src.meta().height), config);
}

}  // namespace cablewatch
