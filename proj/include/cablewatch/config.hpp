#pragma once

#include <algorithm>
#include <functional>
#include <initializer_list>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cablewatch/alt_detect.hpp"
#include "cablewatch/change_detect.hpp"
#include "cablewatch/preprocess.hpp"

namespace cablewatch {

enum class DetectorKind { diff, gmm, edgefit };

inline const char* to_string(DetectorKind k) {
    switch (k) {
        case DetectorKind::diff: return "diff";
        case DetectorKind::gmm: return "gmm";
        case DetectorKind::edgefit: return "edgefit";
    }
    return "diff";
}

inline DetectorKind detector_from_string(const std::string& s) {
    if (s == "diff") return DetectorKind::diff;
    if (s == "gmm") return DetectorKind::gmm;
    if (s == "edgefit") return DetectorKind::edgefit;
    throw ConfigError("detector", "unknown detector '" + s + "' (diff|gmm|edgefit)");
}

/// Edge-profile detector settings. Its score is a deviation in pixels, so it
/// carries its own event thresholds.
struct EdgeFitParams {
    int degree = 2;
    double canny_low = 40.0;
    double canny_high = 100.0;
    double score_on = 2.0;
    double score_off = 1.0;

    friend bool operator==(const EdgeFitParams&, const EdgeFitParams&) = default;
};

struct DetectorConfig {
    DetectorKind detector = DetectorKind::diff;
    BlurSpec blur;
    int tau = 25;
    /// Replace tau with ceil(5 * sqrt(2) * sigma) measured on the first
    /// calibration_frames frames of the input. Setting tau explicitly clears it.
    bool auto_tau = true;
    int calibration_frames = 20;
    ReferencePolicy reference;
    int avg_window = 15;
    double score_on = 50.0;
    double score_off = 25.0;
    int min_event_frames = 5;
    GmmParams gmm;
    EdgeFitParams edgefit;

    /// Thresholds in the units of the selected detector's score.
    EventRule event_rule() const {
        if (detector == DetectorKind::edgefit) return {edgefit.score_on, edgefit.score_off, min_event_frames};
        return {score_on, score_off, min_event_frames};
    }

    friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

struct FieldError {
    std::string field;
    std::string message;
};

/// Every violated invariant, one entry per check.
inline std::vector<FieldError> config_errors(const DetectorConfig& c) {
    std::vector<FieldError> errs;
    auto check = [&](const std::function<void()>& fn) {
        try {
            fn();
        } catch (const ConfigError& e) {
            errs.push_back({e.field(), e.message()});
        }
    };
    check([&] { validate(c.blur); });
    check([&] { validate(c.reference); });
    check([&] { validate(EventRule{c.score_on, c.score_off, c.min_event_frames}); });
    check([&] { validate(EventRule{c.edgefit.score_on, c.edgefit.score_off, 1}, "edgefit."); });
    check([&] { validate(c.gmm); });
    if (c.tau < 1 || c.tau > 255) errs.push_back({"tau", "must be in [1, 255]"});
    if (c.avg_window < 1) errs.push_back({"avg_window", "must be >= 1"});
    if (c.calibration_frames < 2) errs.push_back({"calibration_frames", "must be >= 2"});
    if (c.edgefit.degree < 1 || c.edgefit.degree > 5) errs.push_back({"edgefit.degree", "must be in [1, 5]"});
    if (!(c.edgefit.canny_low > 0.0) || c.edgefit.canny_low > c.edgefit.canny_high)
        errs.push_back({"edgefit.canny_low", "require 0 < canny_low <= canny_high"});
    return errs;
}

inline void validate(const DetectorConfig& c) {
    auto errs = config_errors(c);
    if (!errs.empty()) throw ConfigError(errs.front().field, errs.front().message);
}

inline nlohmann::ordered_json config_to_json(const DetectorConfig& c) {
    nlohmann::ordered_json j;
    j["detector"] = to_string(c.detector);
    j["blur"] = {{"kind", to_string(c.blur.kind)},
                 {"radius", c.blur.radius},
                 {"sigma_spatial", c.blur.sigma_spatial},
                 {"sigma_range", c.blur.sigma_range}};
    j["tau"] = c.tau;
    j["auto_tau"] = c.auto_tau;
    j["calibration_frames"] = c.calibration_frames;
    j["reference"] = {{"mode", to_string(c.reference.mode)},
                      {"warmup_frames", c.reference.warmup_frames},
                      {"lag", c.reference.lag}};
    j["avg_window"] = c.avg_window;
    j["score_on"] = c.score_on;
    j["score_off"] = c.score_off;
    j["min_event_frames"] = c.min_event_frames;
    j["gmm"] = {{"components", c.gmm.components},
                {"learning_rate", c.gmm.learning_rate},
                {"background_ratio", c.gmm.background_ratio},
                {"match_distance", c.gmm.match_distance},
                {"variance_floor", c.gmm.variance_floor},
                {"initial_variance", c.gmm.initial_variance}};
    j["edgefit"] = {{"degree", c.edgefit.degree},
                    {"canny_low", c.edgefit.canny_low},
                    {"canny_high", c.edgefit.canny_high},
                    {"score_on", c.edgefit.score_on},
                    {"score_off", c.edgefit.score_off}};
    return j;
}

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    const std::string field = path.empty() ? key : path + "." + key;
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(field, "must be a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(field, "must be an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(field, "must be a number");
        }
        out = v.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(field, "has the wrong type");
    }
}

inline void read_string(const nlohmann::json& j, const char* key, const std::string& path,
                        const std::function<void(const std::string&)>& apply) {
    if (!j.contains(key)) return;
    const std::string field = path.empty() ? key : path + "." + key;
    if (!j[key].is_string()) throw ConfigError(field, "must be a string");
    apply(j[key].get<std::string>());
}

inline const nlohmann::json& object_at(const nlohmann::json& j, const char* key,
                                      std::initializer_list<std::string_view> fields) {
    const auto& o = j[key];
    if (!o.is_object()) throw ConfigError(key, "must be an object");
    for (auto it = o.begin(); it != o.end(); ++it)
        if (std::find(fields.begin(), fields.end(), it.key()) == fields.end())
            throw ConfigError(std::string(key) + "." + it.key(), "unknown configuration field");
    return o;
}

}  // namespace detail

/// Applies the fields present in `j` on top of `base` (missing fields keep
/// their current values). Type errors throw; invariants are not checked here.
inline DetectorConfig config_merge(DetectorConfig c, const nlohmann::json& j) {
    using detail::read_field;
    if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
    static const std::set<std::string> known = {"detector", "blur",      "tau",      "auto_tau",         "calibration_frames",
                                                "reference", "avg_window", "score_on", "score_off",        "min_event_frames",
                                                "gmm",      "edgefit"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError(it.key(), "unknown configuration field");

    detail::read_string(j, "detector", "", [&](const std::string& s) { c.detector = detector_from_string(s); });
    if (j.contains("blur")) {
        const auto& b = detail::object_at(j, "blur", {"kind", "radius", "sigma_spatial", "sigma_range"});
        detail::read_string(b, "kind", "blur", [&](const std::string& s) { c.blur.kind = blur_kind_from_string(s); });
        read_field(b, "radius", c.blur.radius, "blur");
        read_field(b, "sigma_spatial", c.blur.sigma_spatial, "blur");
        read_field(b, "sigma_range", c.blur.sigma_range, "blur");
    }
    read_field(j, "tau", c.tau, "");
    if (j.contains("tau")) c.auto_tau = false;
    read_field(j, "auto_tau", c.auto_tau, "");
    read_field(j, "calibration_frames", c.calibration_frames, "");
    if (j.contains("reference")) {
        const auto& r = detail::object_at(j, "reference", {"mode", "warmup_frames", "lag"});
        detail::read_string(r, "mode", "reference",
                            [&](const std::string& s) { c.reference.mode = reference_mode_from_string(s); });
        read_field(r, "warmup_frames", c.reference.warmup_frames, "reference");
        read_field(r, "lag", c.reference.lag, "reference");
    }
    read_field(j, "avg_window", c.avg_window, "");
    read_field(j, "score_on", c.score_on, "");
    read_field(j, "score_off", c.score_off, "");
    read_field(j, "min_event_frames", c.min_event_frames, "");
    if (j.contains("gmm")) {
        const auto& g = detail::object_at(j, "gmm", {"components", "learning_rate", "background_ratio", "match_distance",
                                                   "variance_floor", "initial_variance"});
        read_field(g, "components", c.gmm.components, "gmm");
        read_field(g, "learning_rate", c.gmm.learning_rate, "gmm");
        read_field(g, "background_ratio", c.gmm.background_ratio, "gmm");
        read_field(g, "match_distance", c.gmm.match_distance, "gmm");
        read_field(g, "variance_floor", c.gmm.variance_floor, "gmm");
        read_field(g, "initial_variance", c.gmm.initial_variance, "gmm");
    }
    if (j.contains("edgefit")) {
        const auto& e = detail::object_at(j, "edgefit", {"degree", "canny_low", "canny_high", "score_on", "score_off"});
        read_field(e, "degree", c.edgefit.degree, "edgefit");
        read_field(e, "canny_low", c.edgefit.canny_low, "edgefit");
        read_field(e, "canny_high", c.edgefit.canny_high, "edgefit");
        read_field(e, "score_on", c.edgefit.score_on, "edgefit");
        read_field(e, "score_off", c.edgefit.score_off, "edgefit");
    }
    return c;
}

/// Defaults overlaid with `j`, then validated.
inline DetectorConfig config_from_json(const nlohmann::json& j) {
    auto c = config_merge(DetectorConfig{}, j);
    validate(c);
    return c;
}

}  // namespace cablewatch
