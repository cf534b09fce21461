#pragma once

// Lagged-reference background subtraction: per-pixel change thresholding inside
// the slack ROI, changed-pixel counting, running-average scoring and
// hysteresis event extraction.

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "cablewatch/frame.hpp"
#include "cablewatch/roi.hpp"

namespace cablewatch {

enum class ReferenceMode { lagged_frame, lagged_mean };

inline const char* to_string(ReferenceMode m) { return m == ReferenceMode::lagged_mean ? "lagged_mean" : "lagged_frame"; }

inline ReferenceMode reference_mode_from_string(const std::string& s) {
    if (s == "lagged_frame") return ReferenceMode::lagged_frame;
    if (s == "lagged_mean") return ReferenceMode::lagged_mean;
    throw ConfigError("reference.mode", "unknown mode '" + s + "' (lagged_frame|lagged_mean)");
}

/// Adjacent-frame differencing for the first `warmup_frames` frames, then a
/// fixed lag of `lag` frames (or the mean of the preceding `lag` frames).
struct ReferencePolicy {
    std::int64_t warmup_frames = 100;
    std::int64_t lag = 100;
    ReferenceMode mode = ReferenceMode::lagged_frame;

    /// Frames of blurred history the detector must retain.
    std::size_t history_needed() const noexcept { return static_cast<std::size_t>(lag < 1 ? 1 : lag); }

    friend bool operator==(const ReferencePolicy&, const ReferencePolicy&) = default;
};

inline void validate(const ReferencePolicy& p) {
    if (p.warmup_frames < 1) throw ConfigError("reference.warmup_frames", "must be >= 1");
    if (p.lag < 1) throw ConfigError("reference.lag", "must be >= 1");
    // keeps N - lag >= 0 at N = warmup_frames + 1
    if (p.lag > p.warmup_frames + 1) throw ConfigError("reference.lag", "must not exceed warmup_frames + 1");
}

/// Index of the reference frame for frame N (N >= 1). In lagged_mean mode this
/// is the oldest frame of the averaged window.
inline std::int64_t reference_index(std::int64_t n, const ReferencePolicy& policy) {
    if (n < 1) throw DataError("frame " + std::to_string(n) + " has no reference frame");
    if (n <= policy.warmup_frames) return n - 1;
    return n - policy.lag;
}

/// Ring buffer of the most recent blurred frames, keyed by frame index, with a
/// running per-pixel sum for lagged_mean references.
class FrameHistory {
public:
    explicit FrameHistory(std::size_t capacity) : capacity_(capacity) {
        if (capacity_ == 0) throw ConfigError("reference.lag", "history capacity must be >= 1");
    }

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return frames_.size(); }
    bool empty() const noexcept { return frames_.empty(); }
    std::int64_t newest_index() const noexcept { return newest_; }
    std::int64_t oldest_index() const noexcept { return newest_ - static_cast<std::int64_t>(frames_.size()) + 1; }

    void push(std::int64_t index, GrayImage img) {
        if (!frames_.empty() && index != newest_ + 1)
            throw DataError("history expects frame " + std::to_string(newest_ + 1) + ", got " + std::to_string(index));
        if (!frames_.empty() && !img.same_shape(frames_.front())) throw DataError("history: frame dimension mismatch");
        if (sum_.empty()) sum_.assign(img.size(), 0);
        if (frames_.size() == capacity_) {
            const auto& old = frames_.front();
            for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] -= old.pixels[i];
            frames_.pop_front();
        }
        for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += img.pixels[i];
        frames_.push_back(std::move(img));
        newest_ = index;
    }

    bool holds(std::int64_t index) const noexcept {
        return !frames_.empty() && index >= oldest_index() && index <= newest_;
    }

    const GrayImage& get(std::int64_t index) const {
        if (!holds(index))
            throw DataError("insufficient history: frame " + std::to_string(index) + " not retained (have " +
                            (frames_.empty() ? std::string("none")
                                             : std::to_string(oldest_index()) + ".." + std::to_string(newest_)) +
                            ")");
        return frames_[static_cast<std::size_t>(index - oldest_index())];
    }

    /// Rounded pixelwise mean of frames [first, last].
    GrayImage mean(std::int64_t first, std::int64_t last) const {
        if (!holds(first) || !holds(last) || first > last)
            throw DataError("insufficient history for mean of frames " + std::to_string(first) + ".." +
                            std::to_string(last));
        const auto n = static_cast<std::uint32_t>(last - first + 1);
        const auto& shape = get(first);
        GrayImage out(shape.width, shape.height);
        if (first == oldest_index() && last == newest_) {
            for (std::size_t i = 0; i < out.pixels.size(); ++i)
                out.pixels[i] = static_cast<std::uint8_t>((2 * sum_[i] + n) / (2 * n));
            return out;
        }
        std::vector<std::uint32_t> acc(out.pixels.size(), 0);
        for (auto k = first; k <= last; ++k) {
            const auto& f = get(k);
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += f.pixels[i];
        }
        for (std::size_t i = 0; i < out.pixels.size(); ++i)
            out.pixels[i] = static_cast<std::uint8_t>((2 * acc[i] + n) / (2 * n));
        return out;
    }

    void clear() noexcept {
        frames_.clear();
        sum_.clear();
        newest_ = -1;
    }

private:
    std::size_t capacity_;
    std::deque<GrayImage> frames_;
    std::vector<std::uint32_t> sum_;
    std::int64_t newest_ = -1;
};

/// Reference image for frame N (N relative to the start of the history).
inline GrayImage reference_frame(const FrameHistory& history, std::int64_t n, const ReferencePolicy& policy) {
    const auto ref = reference_index(n, policy);
    if (n > policy.warmup_frames && policy.mode == ReferenceMode::lagged_mean) return history.mean(ref, n - 1);
    return history.get(ref);
}

struct ChangeMap {
    std::int64_t frame_index = 0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // 1 = changed pixel inside the ROI
    std::size_t count = 0;

    bool changed(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    friend bool operator==(const ChangeMap&, const ChangeMap&) = default;
};

/// bit(p) = inside(p) && |current(p) - reference(p)| >= tau.
inline ChangeMap subtract_and_threshold(const GrayImage& current, const GrayImage& reference, const RoiMask& mask,
                                        int tau, std::int64_t frame_index = 0) {
    if (!current.same_shape(reference) || current.width != mask.width() || current.height != mask.height())
        throw DataError("subtract_and_threshold: dimension mismatch");
    ChangeMap cm{frame_index, current.width, current.height, std::vector<std::uint8_t>(current.size(), 0), 0};
    const auto bits = mask.bits();
    for (std::size_t i = 0; i < cm.bits.size(); ++i) {
        const int d = std::abs(int(current.pixels[i]) - int(reference.pixels[i]));
        const std::uint8_t hit = bits[i] & static_cast<std::uint8_t>(d >= tau);
        cm.bits[i] = hit;
        cm.count += hit;
    }
    return cm;
}

struct ScoreRecord {
    std::int64_t frame = 0;
    std::int64_t timestamp_ms = 0;
    double count = 0.0;  // changed pixels (diff, gmm) or edge deviation (edgefit)
    double score = 0.0;  // running average of count

    friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

class ScoreSeries {
public:
    const std::vector<ScoreRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const ScoreRecord& back() const { return records_.back(); }
    const ScoreRecord& operator[](std::size_t i) const { return records_[i]; }

    /// Appends (N, C_N, Score_N) where Score_N is the mean of the most recent
    /// min(W, available) counts.
    const ScoreRecord& update(std::int64_t frame, std::int64_t timestamp_ms, double count, std::size_t window) {
        if (window < 1) throw ConfigError("avg_window", "must be >= 1");
        if (!records_.empty() && frame <= records_.back().frame)
            throw DataError("out-of-order frame " + std::to_string(frame) + " after " +
                            std::to_string(records_.back().frame));
        records_.push_back({frame, timestamp_ms, count, 0.0});
        const std::size_t n = std::min(window, records_.size());
        double sum = 0.0;
        for (std::size_t i = records_.size() - n; i < records_.size(); ++i) sum += records_[i].count;
        records_.back().score = sum / static_cast<double>(n);
        return records_.back();
    }

    const ScoreRecord& update(const ChangeMap& change, std::int64_t timestamp_ms, std::size_t window) {
        return update(change.frame_index, timestamp_ms, static_cast<double>(change.count), window);
    }

    /// Restores a series verbatim (e.g. parsed back from CSV).
    static ScoreSeries from_records(std::vector<ScoreRecord> recs) {
        ScoreSeries s;
        s.records_ = std::move(recs);
        return s;
    }

    friend bool operator==(const ScoreSeries&, const ScoreSeries&) = default;

private:
    std::vector<ScoreRecord> records_;
};

struct EventRule {
    double score_on = 50.0;
    double score_off = 25.0;
    std::int64_t min_event_frames = 5;

    friend bool operator==(const EventRule&, const EventRule&) = default;
};

inline void validate(const EventRule& r, const std::string& prefix = "") {
    if (!std::isfinite(r.score_on)) throw ConfigError(prefix + "score_on", "must be finite");
    if (!std::isfinite(r.score_off)) throw ConfigError(prefix + "score_off", "must be finite");
    if (r.score_off > r.score_on) throw ConfigError(prefix + "score_off", "must be <= score_on");
    if (r.min_event_frames < 1) throw ConfigError("min_event_frames", "must be >= 1");
}

struct SlackEvent {
    int id = 0;
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;
    double peak_score = 0.0;
    std::int64_t peak_frame = 0;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;

    friend bool operator==(const SlackEvent&, const SlackEvent&) = default;
};

/// Online hysteresis: opens at the first record with score >= score_on,
/// closes at the last record before one with score < score_off. Events
/// spanning fewer than min_event_frames records are dropped.
class EventTracker {
public:
    explicit EventTracker(EventRule rule = {}) : rule_(rule) {}

    void set_rule(const EventRule& rule) noexcept { rule_ = rule; }
    const EventRule& rule() const noexcept { return rule_; }
    bool is_open() const noexcept { return open_; }
    /// Valid while is_open().
    const SlackEvent& current() const noexcept { return cur_; }
    /// True if the last feed() opened an event or raised the open event's peak.
    bool peak_updated() const noexcept { return peak_updated_; }

    /// Returns the event closed by this record, if it is long enough to keep.
    std::optional<SlackEvent> feed(const ScoreRecord& r) {
        peak_updated_ = false;
        std::optional<SlackEvent> closed;
        if (open_ && r.score < rule_.score_off) closed = close();
        if (!open_ && r.score >= rule_.score_on) {
            open_ = true;
            cur_ = {0, r.frame, r.frame, r.score, r.frame, r.timestamp_ms, r.timestamp_ms};
            length_ = 1;
            peak_updated_ = true;
        } else if (open_) {
            cur_.end_frame = r.frame;
            cur_.end_ms = r.timestamp_ms;
            ++length_;
            if (r.score > cur_.peak_score) {
                cur_.peak_score = r.score;
                cur_.peak_frame = r.frame;
                peak_updated_ = true;
            }
        }
        return closed;
    }

    /// Closes an event left open at end of input.
    std::optional<SlackEvent> finish() {
        peak_updated_ = false;
        if (!open_) return std::nullopt;
        return close();
    }

private:
    std::optional<SlackEvent> close() {
        open_ = false;
        if (length_ < rule_.min_event_frames) return std::nullopt;
        SlackEvent ev = cur_;
        ev.id = ++next_id_;
        return ev;
    }

    EventRule rule_;
    bool open_ = false;
    bool peak_updated_ = false;
    SlackEvent cur_;
    std::int64_t length_ = 0;
    int next_id_ = 0;
};

inline std::vector<SlackEvent> extract_events(const ScoreSeries& series, const EventRule& rule) {
    EventTracker tracker(rule);
    std::vector<SlackEvent> out;
    for (const auto& r : series.records())
        if (auto ev = tracker.feed(r)) out.push_back(*ev);
    if (auto ev = tracker.finish()) out.push_back(*ev);
    return out;
}

}  // namespace cablewatch
