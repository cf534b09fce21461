#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cablewatch/frame.hpp"
#include "cablewatch/roi.hpp"

namespace cablewatch {

enum class BlurKind { none, gaussian, bilateral };

inline const char* to_string(BlurKind k) {
    switch (k) {
        case BlurKind::none: return "none";
        case BlurKind::gaussian: return "gaussian";
        case BlurKind::bilateral: return "bilateral";
    }
    return "none";
}

inline BlurKind blur_kind_from_string(const std::string& s) {
    if (s == "none") return BlurKind::none;
    if (s == "gaussian") return BlurKind::gaussian;
    if (s == "bilateral") return BlurKind::bilateral;
    throw ConfigError("blur.kind", "unknown blur kind '" + s + "' (gaussian|bilateral|none)");
}

struct BlurSpec {
    BlurKind kind = BlurKind::gaussian;
    int radius = 2;
    double sigma_spatial = 1.5;
    double sigma_range = 25.0;  // bilateral only

    int kernel_width() const noexcept { return 2 * radius + 1; }
    friend bool operator==(const BlurSpec&, const BlurSpec&) = default;
};

inline void validate(const BlurSpec& s) {
    if (s.kind == BlurKind::none) return;
    if (s.radius < 1 || s.radius > 15) throw ConfigError("blur.radius", "must be in [1, 15]");
    if (!(s.sigma_spatial > 0.0) || !std::isfinite(s.sigma_spatial))
        throw ConfigError("blur.sigma_spatial", "must be > 0");
    if (s.kind == BlurKind::bilateral && (!(s.sigma_range > 0.0) || !std::isfinite(s.sigma_range)))
        throw ConfigError("blur.sigma_range", "must be > 0");
}

/// Normalized 1-D Gaussian taps k[0..radius]; k[t] applies at offsets +-t.
inline std::vector<double> gaussian_half_kernel(int radius, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(radius) + 1);
    double sum = 0.0;
    for (int t = 0; t <= radius; ++t) {
        k[t] = std::exp(-double(t) * t / (2.0 * sigma * sigma));
        sum += t == 0 ? k[t] : 2.0 * k[t];
    }
    for (auto& v : k) v /= sum;
    return k;
}

namespace detail {

inline int clamp_index(int i, int n) noexcept { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

}  // namespace detail

/// Separable Gaussian with replicated borders. Taps are accumulated as
/// k0*c + sum k[t]*(left+right), so the result is mirror-symmetric bit-for-bit.
inline GrayImage gaussian_blur(const GrayImage& src, const BlurSpec& spec) {
    validate(spec);
    const int w = src.width, h = src.height, r = spec.radius;
    const auto k = gaussian_half_kernel(r, spec.sigma_spatial);

    std::vector<double> tmp(src.size());
    for (int y = 0; y < h; ++y) {
        const auto* row = src.pixels.data() + static_cast<std::size_t>(y) * w;
        double* out = tmp.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            double acc = k[0] * row[x];
            for (int t = 1; t <= r; ++t)
                acc += k[t] * (double(row[detail::clamp_index(x - t, w)]) + double(row[detail::clamp_index(x + t, w)]));
            out[x] = acc;
        }
    }

    GrayImage dst(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = k[0] * tmp[static_cast<std::size_t>(y) * w + x];
            for (int t = 1; t <= r; ++t)
                acc += k[t] * (tmp[static_cast<std::size_t>(detail::clamp_index(y - t, h)) * w + x] +
                               tmp[static_cast<std::size_t>(detail::clamp_index(y + t, h)) * w + x]);
            dst.pixels[static_cast<std::size_t>(y) * w + x] = saturate_u8(acc);
        }
    }
    return dst;
}

/// Brute-force bilateral filter over the (2r+1)^2 window, replicated borders.
inline GrayImage bilateral_filter(const GrayImage& src, const BlurSpec& spec) {
    validate(spec);
    const int w = src.width, h = src.height, r = spec.radius, side = 2 * r + 1;
    std::vector<double> spatial(static_cast<std::size_t>(side) * side);
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            spatial[(dy + r) * side + (dx + r)] =
                std::exp(-double(dx * dx + dy * dy) / (2.0 * spec.sigma_spatial * spec.sigma_spatial));
    double range[256];
    for (int d = 0; d < 256; ++d) range[d] = std::exp(-double(d) * d / (2.0 * spec.sigma_range * spec.sigma_range));

    GrayImage dst(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int center = src.at(x, y);
            double num = 0.0, den = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                const auto* row = src.pixels.data() + static_cast<std::size_t>(detail::clamp_index(y + dy, h)) * w;
                const double* sw = spatial.data() + (dy + r) * side + r;
                for (int dx = -r; dx <= r; ++dx) {
                    const int v = row[detail::clamp_index(x + dx, w)];
                    const double wt = sw[dx] * range[std::abs(v - center)];
                    num += wt * v;
                    den += wt;
                }
            }
            dst.at(x, y) = saturate_u8(num / den);
        }
    }
    return dst;
}

/// Dispatch on spec.kind; `none` returns the input unchanged.
inline GrayImage apply_blur(const GrayImage& src, const BlurSpec& spec) {
    switch (spec.kind) {
        case BlurKind::gaussian: return gaussian_blur(src, spec);
        case BlurKind::bilateral: return bilateral_filter(src, spec);
        case BlurKind::none: break;
    }
    return src;
}

namespace detail {

inline double median_inplace(std::vector<double>& v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    double hi = *mid;
    if (n % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Robust per-frame noise sigma from in-mask temporal differences of a static
/// clip: 1.4826 * MAD(d) / sqrt(2).
inline double estimate_noise_sigma(std::span<const GrayImage> frames, const RoiMask& mask) {
    if (frames.size() < 2) throw DataError("noise estimation needs at least 2 frames");
    std::vector<double> d;
    d.reserve((frames.size() - 1) * mask.inside_count());
    for (std::size_t k = 1; k < frames.size(); ++k) {
        const auto& a = frames[k - 1];
        const auto& b = frames[k];
        if (!a.same_shape(b) || a.width != mask.width() || a.height != mask.height())
            throw DataError("noise estimation: frame/mask dimension mismatch");
        for (std::size_t i = 0; i < a.pixels.size(); ++i)
            if (mask.contains(i)) d.push_back(double(b.pixels[i]) - double(a.pixels[i]));
    }
    const double med = detail::median_inplace(d);
    for (auto& v : d) v = std::abs(v - med);
    const double mad = detail::median_inplace(d);
    return 1.4826 * mad / std::sqrt(2.0);
}

}  // namespace cablewatch
