#pragma once

// Command-line front end. Exit codes: 0 ok, 1 unexpected failure,
// 2 bad arguments, 3 I/O or malformed input data, 4 invalid configuration.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iostream>

#include "cablewatch/calibrate.hpp"
#include "cablewatch/config.hpp"
#include "cablewatch/gateway.hpp"
#include "cablewatch/metrics.hpp"
#include "cablewatch/pipeline.hpp"
#include "cablewatch/render.hpp"
#include "cablewatch/synth.hpp"

namespace cablewatch::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kBadArgs = 2, kIo = 3, kConfig = 4 };

inline nlohmann::json load_json(const fs::path& path, const std::string& what) {
    const auto bytes = read_file_bytes(path);
    auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (j.is_discarded()) throw ConfigError(what, path.string() + " is not valid JSON");
    return j;
}

/// Optional flag overrides, applied after the config file.
struct Overrides {
    std::string detector;
    std::optional<int> tau;
    std::optional<int> window;
    std::optional<double> score_on;
    std::optional<double> score_off;
    std::optional<int> min_event_frames;
    std::string blur;

    void attach(CLI::App& cmd) {
        cmd.add_option("--detector", detector, "diff|gmm|edgefit")->check(CLI::IsMember({"diff", "gmm", "edgefit"}));
        cmd.add_option("--tau", tau, "per-pixel difference threshold (disables auto calibration)");
        cmd.add_option("--window", window, "running-average window W in frames");
        cmd.add_option("--score-on", score_on, "score that opens an event");
        cmd.add_option("--score-off", score_off, "score below which an open event closes");
        cmd.add_option("--min-event-frames", min_event_frames, "shortest event kept, in frames");
        cmd.add_option("--blur", blur, "none|gaussian|bilateral")->check(CLI::IsMember({"none", "gaussian", "bilateral"}));
    }

    DetectorConfig apply(DetectorConfig c) const {
        if (!detector.empty()) c.detector = detector_from_string(detector);
        if (tau) {
            c.tau = *tau;
            c.auto_tau = false;
        }
        if (window) c.avg_window = *window;
        if (score_on) c.score_on = *score_on;
        if (score_off) c.score_off = *score_off;
        if (min_event_frames) c.min_event_frames = *min_event_frames;
        if (!blur.empty()) c.blur.kind = blur_kind_from_string(blur);
        return c;
    }
};

inline DetectorConfig load_config(const std::string& path, const Overrides& ov) {
    DetectorConfig c;
    if (!path.empty()) c = config_merge(c, load_json(path, "config"));
    c = ov.apply(std::move(c));
    validate(c);
    return c;
}

inline RoiConfig load_roi(const std::string& path) { return roi_from_json(load_json(path, "roi")); }

/// `synth:S1` names a built-in scenario, a .json file holds a scene spec,
/// anything else is a frame sequence.
inline std::shared_ptr<const FrameSource> open_input(const std::string& input) {
    if (input.rfind("synth:", 0) == 0) return std::make_shared<SynthSource>(scenario(input.substr(6)));
    if (fs::path(input).extension() == ".json") {
        auto spec = scene_from_json(load_json(input, "spec"));
        validate(spec);
        return std::make_shared<SynthSource>(std::move(spec));
    }
    return open_source(input);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::atomic<bool>& interrupted() {
    static std::atomic<bool> flag{false};
    return flag;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::string input, roi, config, out;
    Overrides ov;
};

inline int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    auto cfg = load_config(a.config, a.ov);
    auto roi = load_roi(a.roi);
    auto src = open_input(a.input);
    const auto& meta = src->meta();
    auto res = run_pipeline(*src, roi, cfg);
    export_run(res.series, res.events, a.out, roi.polygons);

    out << "input " << meta.source_id << ": " << meta.frame_count << " frames " << meta.width << 'x' << meta.height
        << '\n';
    out << "detector " << to_string(res.config.detector) << " tau " << res.config.tau;
    if (res.calibrated_sigma) out << " (calibrated, sigma " << format_number(*res.calibrated_sigma) << ')';
    out << '\n';
    for (const auto& snap : res.events) {
        const auto& e = snap.event;
        out << "EVENT " << e.id << " frames " << e.start_frame << ".." << e.end_frame << " peak "
            << format_number(e.peak_score) << '@' << e.peak_frame << '\n';
    }
    out << res.events.size() << " events\n";
    return kOk;
}

struct CalibrateArgs {
    std::string input, roi, config, out;
    std::optional<double> target_far;
    std::optional<int> frames;
};

inline int cmd_calibrate(const CalibrateArgs& a, std::ostream& out, std::ostream& err) {
    auto cfg = load_config(a.config, {});
    auto src = open_input(a.input);
    const auto& meta = src->meta();
    const auto mask = a.roi.empty() ? RoiMask::full(meta.width, meta.height)
                                    : build_mask(load_roi(a.roi), meta.width, meta.height);
    const int frames = a.frames.value_or(cfg.calibration_frames);
    if (frames < 2) throw ConfigError("frames", "must be >= 2");
    const double sigma = measure_noise_sigma(*src, mask, frames);
    const int tau = a.target_far ? tau_for_false_alarm(sigma, *a.target_far) : tau_from_sigma(sigma);
    if (sigma == 0.0) err << "warning: no measurable noise; tau set to the floor of 1\n";
    cfg.tau = tau;
    cfg.auto_tau = false;
    out << "sigma " << format_number(sigma) << '\n' << "tau " << tau << '\n';
    const auto text = config_to_json(cfg).dump(2) + "\n";
    if (a.out.empty())
        out << text;
    else
        write_file_text(a.out, text);
    return kOk;
}

struct SynthArgs {
    std::string scenario, spec, out;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
    SceneSpec spec = a.spec.empty() ? scenario(a.scenario) : scene_from_json(load_json(a.spec, "spec"));
    const auto r = render_scene(spec, a.out);
    out << r.raw.string() << '\n' << r.sidecar.string() << '\n' << r.truth.string() << '\n';
    return kOk;
}

struct BenchArgs {
    std::string scenarios = "S1,S2,S3,S4,S5";
    std::string detectors = "diff,gmm,edgefit";
    std::string config, csv;
    Overrides ov;
};

inline int cmd_bench(const BenchArgs& a, std::ostream& out) {
    const auto cfg = load_config(a.config, a.ov);
    const auto ids = split_list(a.scenarios);
    std::vector<DetectorKind> dets;
    for (const auto& d : split_list(a.detectors)) dets.push_back(detector_from_string(d));
    for (const auto& id : ids) (void)scenario(id);
    const auto cells = run_bench(ids, dets, cfg);
    const auto csv = bench_csv(cells);
    out << bench_table(cells) << '\n' << csv;
    if (!a.csv.empty()) write_file_text(a.csv, csv);
    return kOk;
}

struct ServeArgs {
    std::string input, roi, config, listen = "127.0.0.1:8080", audit, static_dir;
    double speed = 1.0;
    Overrides ov;
};

inline std::pair<std::string, int> parse_listen(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) throw ConfigError("listen", "expected host:port");
    int port = -1;
    const auto p = s.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
    if (ec != std::errc() || ptr != p.data() + p.size() || port < 0 || port > 65535)
        throw ConfigError("listen", "bad port '" + p + "'");
    return {s.substr(0, colon), port};
}

inline int cmd_serve(const ServeArgs& a, std::ostream& out) {
    auto cfg = load_config(a.config, a.ov);
    auto src = open_input(a.input);
    RoiConfig roi;
    if (!a.roi.empty())
        roi = load_roi(a.roi);
    else if (dynamic_cast<const SynthSource*>(src.get()))
        roi = default_synth_roi();
    else
        roi = full_frame_roi(src->meta().width, src->meta().height, src->meta().source_id);
    const auto [host, port] = parse_listen(a.listen);
    GatewayOptions opts;
    opts.speed = a.speed;
    opts.audit_path = a.audit;
    opts.static_dir = a.static_dir;
    Gateway gw(src, std::move(roi), std::move(cfg), opts);
    const int bound = gw.bind(host, port);
    gw.start();
    out << "listening on http://" << host << ':' << bound << '\n' << std::flush;
    interrupted() = false;
    std::signal(SIGINT, [](int) { interrupted() = true; });
    std::signal(SIGTERM, [](int) { interrupted() = true; });
    while (!interrupted()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    gw.stop();
    return kOk;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"cablewatch: cable slack detection on video"};
    app.require_subcommand(1);

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "detect slack events in a frame sequence");
    analyze->add_option("--input", an.input, "frame directory, .y8 file, scene spec .json or synth:<id>")->required();
    analyze->add_option("--roi", an.roi, "ROI JSON")->required();
    analyze->add_option("--config", an.config, "detector config JSON");
    analyze->add_option("--out", an.out, "output directory")->required();
    an.ov.attach(*analyze);

    CalibrateArgs ca;
    auto* calibrate = app.add_subcommand("calibrate", "suggest tau from a quiet sequence");
    calibrate->add_option("--input", ca.input)->required();
    calibrate->add_option("--roi", ca.roi, "ROI JSON (default: whole frame)");
    calibrate->add_option("--config", ca.config, "base config to update");
    calibrate->add_option("--target-far", ca.target_far, "per-pixel false-alarm probability");
    calibrate->add_option("--frames", ca.frames, "frames to measure (default: calibration_frames)");
    calibrate->add_option("--out", ca.out, "write the updated config here instead of stdout");

    SynthArgs sy;
    auto* synth = app.add_subcommand("synth", "render a synthetic scene with ground truth");
    auto* scen = synth->add_option("--scenario", sy.scenario)->check(CLI::IsMember({"S1", "S2", "S3", "S4", "S5"}));
    auto* spec = synth->add_option("--spec", sy.spec, "scene spec JSON");
    scen->excludes(spec);
    synth->add_option("--out", sy.out)->required();

    BenchArgs be;
    auto* bench = app.add_subcommand("bench", "compare detectors on synthetic scenarios");
    bench->add_option("--scenarios", be.scenarios);
    bench->add_option("--detectors", be.detectors);
    bench->add_option("--config", be.config);
    bench->add_option("--csv", be.csv, "also write the CSV here");
    be.ov.attach(*bench);

    ServeArgs se;
    auto* serve = app.add_subcommand("serve", "replay a source behind the HTTP API");
    serve->add_option("--input", se.input)->required();
    serve->add_option("--roi", se.roi);
    serve->add_option("--config", se.config);
    serve->add_option("--listen", se.listen, "host:port (port 0 picks one)");
    serve->add_option("--speed", se.speed, "replay rate relative to the source fps; 0 = as fast as possible");
    serve->add_option("--audit", se.audit, "append the audit log here (JSON lines)");
    serve->add_option("--static", se.static_dir, "directory served at /");
    se.ov.attach(*serve);

    try {
        app.parse(argc, argv);
        if (synth->parsed() && sy.scenario.empty() && sy.spec.empty()) {
            err << "synth: one of --scenario or --spec is required\n";
            return kBadArgs;
        }
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kOk : kBadArgs;
    }

    try {
        if (analyze->parsed()) return cmd_analyze(an, out);
        if (calibrate->parsed()) return cmd_calibrate(ca, out, err);
        if (synth->parsed()) return cmd_synth(sy, out);
        if (bench->parsed()) return cmd_bench(be, out);
        if (serve->parsed()) return cmd_serve(se, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kBadArgs;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("cablewatch");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cablewatch::cli
