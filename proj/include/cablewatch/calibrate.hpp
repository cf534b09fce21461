#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "cablewatch/ingest.hpp"
#include "cablewatch/preprocess.hpp"

namespace cablewatch {

/// Standard normal quantile. Acklam's rational approximation followed by one
/// Halley step against erfc, good to ~1e-15 relative.
inline double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("probability", "must be in (0, 1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double lo = 0.02425, hi = 1.0 - lo;
    double x;
    if (p < lo) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= hi) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement; the upper tail is refined through its complement
    const double kSqrt2Pi = 2.5066282746310002;
    if (p > 0.5) {
        const double qc = 1.0 - p;
        const double e = 0.5 * std::erfc(x / std::sqrt(2.0)) - qc;  // upper tail error
        const double u = -e * kSqrt2Pi * std::exp(0.5 * x * x);
        x = x - u / (1.0 + 0.5 * x * u);
    } else {
        const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
        const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
        x = x - u / (1.0 + 0.5 * x * u);
    }
    return x;
}

inline int clamp_tau(double t) {
    if (!(t > 1.0)) return 1;
    if (t >= 255.0) return 255;
    return static_cast<int>(std::ceil(t));
}

/// ceil(5 * sqrt(2) * sigma): five standard deviations of a two-frame difference.
inline int tau_from_sigma(double sigma) { return clamp_tau(5.0 * std::sqrt(2.0) * sigma); }

/// Smallest tau whose two-sided per-pixel exceedance probability for a
/// difference of two N(0, sigma^2) frames is at most `far`.
inline int tau_for_false_alarm(double sigma, double far) {
    if (!(far > 0.0 && far < 1.0)) throw ConfigError("target_far", "must be in (0, 1)");
    return clamp_tau(std::sqrt(2.0) * sigma * inverse_normal_cdf(1.0 - far / 2.0));
}

/// Noise sigma over the first `frames` frames of a source (raw, unblurred).
inline double measure_noise_sigma(const FrameSource& src, const RoiMask& mask, std::int64_t frames) {
    const auto n = std::min<std::int64_t>(frames, src.meta().frame_count);
    if (n < 2) throw DataError("calibration needs at least 2 frames, input has " + std::to_string(n));
    std::vector<GrayImage> imgs;
    imgs.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) imgs.push_back(src.frame_at(i).image());
    return estimate_noise_sigma(imgs, mask);
}

}  // namespace cablewatch
