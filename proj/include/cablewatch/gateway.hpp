#pragma once

// HTTP front end for one replayed video source. A single pipeline thread
// owns frame processing; handlers read snapshots under the state mutex and
// queue config/ROI mutations, which are applied between frames.

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "cablewatch/config.hpp"
#include "cablewatch/pipeline.hpp"
#include "cablewatch/render.hpp"

namespace cablewatch {

struct GatewayOptions {
    double speed = 1.0;            // replay rate multiplier on the source fps; <= 0 runs unthrottled
    bool autoplay = true;          // false: frames advance only through Gateway::step()
    fs::path audit_path;           // JSON-lines audit log; empty keeps it in memory only
    std::size_t change_cache = 300;  // change maps retained for /api/frame overlays
    fs::path static_dir;           // optional operator console to serve at /
};

class Gateway {
public:
    Gateway(std::shared_ptr<const FrameSource> source, RoiConfig roi, DetectorConfig config, GatewayOptions opts = {})
        : source_(std::move(source)), opts_(std::move(opts)) {
        const auto& meta = source_->meta();
        auto mask = build_mask(roi, meta.width, meta.height);
        config = resolve_config(std::move(config), *source_, mask);
        roi_ = std::move(roi);
        config_ = config;
        monitor_ = std::make_unique<SlackMonitor>(std::move(config), std::move(mask));
        install_routes();
    }

    ~Gateway() { stop(); }

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Binds the listener; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port) {
        int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
        if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
        return bound;
    }

    /// Starts serving (and replaying, when autoplay is set) in background threads.
    void start() {
        http_thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        if (opts_.autoplay) replay_thread_ = std::thread([this] { replay_loop(); });
    }

    void stop() {
        {
            std::lock_guard lk(mu_);
            if (stopping_) return;
            stopping_ = true;
        }
        cv_.notify_all();
        if (replay_thread_.joinable()) replay_thread_.join();
        server_.stop();
        if (http_thread_.joinable()) http_thread_.join();
    }

    /// Processes the next frame. Returns false once the source is exhausted.
    bool step() {
        std::int64_t index;
        {
            std::lock_guard lk(mu_);
            if (next_frame_ >= source_->meta().frame_count) {
                finish_locked();
                return false;
            }
            index = next_frame_++;
        }
        Frame frame = source_->frame_at(index);
        {
            std::lock_guard lk(mu_);
            apply_pending_locked();
            auto step = monitor_->process(frame);
            last_frame_ = index;
            if (step) {
                open_flags_.push_back(step->event_open);
                changes_[index] = std::move(step->change);
                while (changes_.size() > opts_.change_cache) changes_.erase(changes_.begin());
            }
            if (next_frame_ >= source_->meta().frame_count) finish_locked();
        }
        cv_.notify_all();
        return true;
    }

    bool done() const {
        std::lock_guard lk(mu_);
        return done_;
    }

    ScoreSeries scores() const {
        std::lock_guard lk(mu_);
        return monitor_->series();
    }

    DetectorConfig active_config() const {
        std::lock_guard lk(mu_);
        return monitor_->config();
    }

    std::vector<nlohmann::json> audit_log() const {
        std::lock_guard lk(mu_);
        return audit_;
    }

    httplib::Server& server() noexcept { return server_; }

private:
    using Json = nlohmann::ordered_json;

    static void send_json(httplib::Response& res, const Json& j, int status = 200) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& msg) {
        send_json(res, Json{{"error", msg}}, status);
    }

    static void send_field_errors(httplib::Response& res, const std::vector<FieldError>& errs) {
        Json arr = Json::array();
        for (const auto& e : errs) arr.push_back({{"field", e.field}, {"message", e.message}});
        send_json(res, Json{{"errors", arr}}, 422);
    }

    void finish_locked() {
        if (done_) return;
        monitor_->finish();
        done_ = true;
    }

    void apply_pending_locked() {
        if (pending_config_) {
            monitor_->set_config(std::move(*pending_config_));
            pending_config_.reset();
        }
        if (pending_mask_) {
            monitor_->set_mask(std::move(*pending_mask_));
            pending_mask_.reset();
        }
    }

    void audit_locked(Json entry) {
        const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
        Json e;
        e["timestamp_ms"] = now;
        for (auto it = entry.begin(); it != entry.end(); ++it) e[it.key()] = it.value();
        if (!opts_.audit_path.empty()) {
            std::ofstream out(opts_.audit_path, std::ios::app);
            if (out) out << e.dump() << '\n';
        }
        audit_.push_back(nlohmann::json::parse(e.dump()));
    }

    static void flatten(const Json& j, const std::string& prefix, std::map<std::string, Json>& out) {
        if (j.is_object()) {
            for (auto it = j.begin(); it != j.end(); ++it)
                flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
        } else {
            out[prefix] = j;
        }
    }

    void replay_loop() {
        using clock = std::chrono::steady_clock;
        const double rate = source_->meta().fps * opts_.speed;
        const auto t0 = clock::now();
        std::int64_t k = 0;
        while (true) {
            {
                std::lock_guard lk(mu_);
                if (stopping_) return;
            }
            if (!step()) return;
            ++k;
            if (rate > 0.0) {
                const auto due = t0 + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(k / rate));
                std::unique_lock lk(mu_);
                cv_.wait_until(lk, due, [this] { return stopping_; });
            }
        }
    }

    Json status_locked() const {
        Json j;
        j["frame"] = last_frame_ < 0 ? 0 : last_frame_;
        j["detector"] = to_string(config_.detector);
        j["events_open"] = monitor_->event_open() ? 1 : 0;
        const auto& s = monitor_->series();
        j["last_score"] = s.empty() ? Json(nullptr) : Json(s.back().score);
        return j;
    }

    void install_routes() {
        server_.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, PUT, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });

        server_.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lk(mu_);
            send_json(res, status_locked());
        });

        server_.Get(R"(/api/frame/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::int64_t n = 0;
            try {
                n = std::stoll(req.matches[1].str());
            } catch (const std::exception&) {
                return send_error(res, 400, "bad frame index");
            }
            if (n < 0 || n >= source_->meta().frame_count) return send_error(res, 404, "frame out of range");
            const bool overlay = req.has_param("overlay") && (req.get_param_value("overlay") == "true" ||
                                                              req.get_param_value("overlay") == "1");
            std::optional<ChangeMap> change;
            if (overlay) {
                std::lock_guard lk(mu_);
                auto it = changes_.find(n);
                if (it == changes_.end()) return send_error(res, 404, "no change map retained for this frame");
                change = it->second;
            }
            const auto frame = source_->frame_at(n);
            const auto png = overlay ? encode_png(overlay_changes(frame.image(), *change)) : encode_png(frame.image());
            res.set_content(std::string(png.begin(), png.end()), "image/png");
        });

        server_.Get("/api/scores", [this](const httplib::Request& req, httplib::Response& res) {
            std::int64_t from = std::numeric_limits<std::int64_t>::min(), to = std::numeric_limits<std::int64_t>::max();
            try {
                if (req.has_param("from")) from = std::stoll(req.get_param_value("from"));
                if (req.has_param("to")) to = std::stoll(req.get_param_value("to"));
            } catch (const std::exception&) {
                return send_error(res, 400, "from/to must be integers");
            }
            std::string csv;
            {
                std::lock_guard lk(mu_);
                const auto& s = monitor_->series();
                const auto& recs = s.records();
                auto lo = std::lower_bound(recs.begin(), recs.end(), from,
                                           [](const ScoreRecord& r, std::int64_t f) { return r.frame < f; });
                auto hi = std::upper_bound(recs.begin(), recs.end(), to,
                                           [](std::int64_t f, const ScoreRecord& r) { return f < r.frame; });
                csv = score_csv(s, plain_events(monitor_->events()), static_cast<std::size_t>(lo - recs.begin()),
                                static_cast<std::size_t>(hi - recs.begin()));
            }
            res.set_content(csv, "text/csv");
        });

        server_.Get("/api/events", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lk(mu_);
            send_json(res, events_to_json(plain_events(monitor_->events())));
        });

        server_.Get("/api/stream", [this](const httplib::Request&, httplib::Response& res) {
            std::size_t cursor;
            {
                std::lock_guard lk(mu_);
                cursor = monitor_->series().size();
            }
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream", [this, cursor](std::size_t, httplib::DataSink& sink) mutable {
                    std::string chunk;
                    {
                        std::unique_lock lk(mu_);
                        cv_.wait_for(lk, std::chrono::milliseconds(250), [&] {
                            return stopping_ || done_ || monitor_->series().size() > cursor;
                        });
                        if (stopping_) return false;
                        const auto& recs = monitor_->series().records();
                        for (; cursor < recs.size(); ++cursor) {
                            const auto& r = recs[cursor];
                            Json j{{"frame", r.frame}, {"count", r.count}, {"score", r.score},
                                   {"event_open", static_cast<bool>(open_flags_[cursor])}};
                            chunk += "data: " + j.dump() + "\n\n";
                        }
                        if (chunk.empty() && done_) {
                            sink.done();
                            return true;
                        }
                    }
                    if (chunk.empty()) chunk = ": keep-alive\n\n";
                    return sink.write(chunk.data(), chunk.size());
                });
        });

        server_.Get("/api/roi", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lk(mu_);
            send_json(res, roi_to_json(roi_));
        });

        server_.Put("/api/roi", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = nlohmann::json::parse(req.body, nullptr, false);
            if (body.is_discarded()) return send_error(res, 400, "body is not valid JSON");
            RoiConfig roi;
            RoiMask mask;
            try {
                roi = roi_from_json(body);
                mask = build_mask(roi, source_->meta().width, source_->meta().height);
            } catch (const ConfigError& e) {
                return send_field_errors(res, {{e.field(), e.message()}});
            }
            std::lock_guard lk(mu_);
            audit_locked({{"field", "roi"}, {"old", roi_to_json(roi_)}, {"new", roi_to_json(roi)}});
            roi_ = std::move(roi);
            pending_mask_ = std::move(mask);
            send_json(res, roi_to_json(roi_));
        });

        server_.Get("/api/config", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lk(mu_);
            send_json(res, config_to_json(config_));
        });

        server_.Put("/api/config", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = nlohmann::json::parse(req.body, nullptr, false);
            if (body.is_discarded()) return send_error(res, 400, "body is not valid JSON");
            std::lock_guard lk(mu_);
            DetectorConfig next;
            try {
                next = config_merge(config_, body);
            } catch (const ConfigError& e) {
                return send_field_errors(res, {{e.field(), e.message()}});
            }
            if (auto errs = config_errors(next); !errs.empty()) return send_field_errors(res, errs);
            if (next.auto_tau) {
                try {
                    next = resolve_config(next, *source_, monitor_->mask());
                } catch (const Error& e) {
                    return send_field_errors(res, {{"auto_tau", e.what()}});
                }
            }
            std::map<std::string, Json> before, after;
            flatten(config_to_json(config_), "", before);
            flatten(config_to_json(next), "", after);
            for (const auto& [field, value] : after)
                if (before[field] != value) audit_locked({{"field", field}, {"old", before[field]}, {"new", value}});
            config_ = next;
            pending_config_ = std::move(next);
            send_json(res, config_to_json(config_));
        });

        server_.Post("/api/mark", [this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("frame")) return send_error(res, 400, "frame is required");
            std::int64_t frame = 0;
            try {
                frame = std::stoll(req.get_param_value("frame"));
            } catch (const std::exception&) {
                return send_error(res, 400, "frame must be an integer");
            }
            const auto label = req.has_param("label") ? req.get_param_value("label") : std::string();
            std::lock_guard lk(mu_);
            audit_locked({{"field", "mark"}, {"frame", frame}, {"label", label}});
            send_json(res, Json{{"frame", frame}, {"label", label}});
        });

        server_.Get("/api/audit", [this](const httplib::Request&, httplib::Response& res) {
            std::lock_guard lk(mu_);
            send_json(res, Json(audit_));
        });

        if (!opts_.static_dir.empty()) server_.set_mount_point("/", opts_.static_dir.string());
    }

    std::shared_ptr<const FrameSource> source_;
    GatewayOptions opts_;
    httplib::Server server_;
    std::thread http_thread_;
    std::thread replay_thread_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    bool stopping_ = false;
    bool done_ = false;
    std::unique_ptr<SlackMonitor> monitor_;
    DetectorConfig config_;  // latest accepted; applied at the next frame
    RoiConfig roi_;
    std::optional<DetectorConfig> pending_config_;
    std::optional<RoiMask> pending_mask_;
    std::int64_t next_frame_ = 0;
    std::int64_t last_frame_ = -1;
    std::vector<std::uint8_t> open_flags_;
    std::map<std::int64_t, ChangeMap> changes_;
    std::vector<nlohmann::json> audit_;
};

}  // namespace cablewatch
