#pragma once

// Comparison detectors: Canny edges with a least-squares polynomial cable
// profile, and a per-pixel adaptive Gaussian mixture background model.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "cablewatch/frame.hpp"
#include "cablewatch/preprocess.hpp"
#include "cablewatch/roi.hpp"

namespace cablewatch {

// ---------------------------------------------------------------------------
// Canny

/// 0/1 raster of edge pixels.
struct EdgeMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
};

/// Sobel gradient magnitude and 4-bin direction (0: horizontal gradient,
/// 1: 45 deg, 2: vertical, 3: 135 deg; y grows downward).
struct Gradient {
    int width = 0;
    int height = 0;
    std::vector<double> magnitude;
    std::vector<std::uint8_t> direction;
};

inline Gradient sobel_gradient(const GrayImage& img) {
    const int w = img.width, h = img.height;
    Gradient g{w, h, std::vector<double>(img.size()), std::vector<std::uint8_t>(img.size())};
    auto p = [&](int x, int y) { return int(img.at(detail::clamp_index(x, w), detail::clamp_index(y, h))); };
    constexpr double kTan22 = 0.41421356237309503;  // tan(22.5 deg)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int gx = (p(x + 1, y - 1) + 2 * p(x + 1, y) + p(x + 1, y + 1)) -
                           (p(x - 1, y - 1) + 2 * p(x - 1, y) + p(x - 1, y + 1));
            const int gy = (p(x - 1, y + 1) + 2 * p(x, y + 1) + p(x + 1, y + 1)) -
                           (p(x - 1, y - 1) + 2 * p(x, y - 1) + p(x + 1, y - 1));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            g.magnitude[i] = std::sqrt(double(gx) * gx + double(gy) * gy);
            const double ax = std::abs(gx), ay = std::abs(gy);
            std::uint8_t dir;
            if (ay <= ax * kTan22)
                dir = 0;
            else if (ax <= ay * kTan22)
                dir = 2;
            else
                dir = ((gx > 0) == (gy > 0)) ? 1 : 3;
            g.direction[i] = dir;
        }
    }
    return g;
}

/// Non-maximum suppression along the quantized gradient direction. A pixel
/// survives if it is strictly greater than its predecessor and not smaller
/// than its successor, so plateaus thin to their first pixel.
inline std::vector<double> non_max_suppress(const Gradient& g) {
    static constexpr int kDx[4] = {1, 1, 0, -1};
    static constexpr int kDy[4] = {0, 1, 1, 1};
    const int w = g.width, h = g.height;
    std::vector<double> out(g.magnitude.size(), 0.0);
    auto mag = [&](int x, int y) {
        return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : g.magnitude[static_cast<std::size_t>(y) * w + x];
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double m = g.magnitude[i];
            if (m <= 0.0) continue;
            const int d = g.direction[i];
            if (m > mag(x - kDx[d], y - kDy[d]) && m >= mag(x + kDx[d], y + kDy[d])) out[i] = m;
        }
    return out;
}

/// Double threshold: pixels >= high seed edges; pixels in [low, high) are kept
/// only when 8-connected to a kept pixel.
inline EdgeMap hysteresis_threshold(const std::vector<double>& thinned, int width, int height, double low, double high) {
    EdgeMap e{width, height, std::vector<std::uint8_t>(thinned.size(), 0)};
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < thinned.size(); ++i)
        if (thinned[i] >= high) {
            e.bits[i] = 1;
            stack.push_back(i);
        }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const int x = static_cast<int>(i % width), y = static_cast<int>(i / width);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
                const std::size_t j = static_cast<std::size_t>(ny) * width + nx;
                if (!e.bits[j] && thinned[j] >= low) {
                    e.bits[j] = 1;
                    stack.push_back(j);
                }
            }
    }
    return e;
}

inline EdgeMap canny(const GrayImage& img, double low, double high, const BlurSpec& blur) {
    if (!(low > 0.0) || low > high) throw ConfigError("edgefit.canny_low", "require 0 < low <= high");
    const auto smoothed = apply_blur(img, blur);
    const auto grad = sobel_gradient(smoothed);
    return hysteresis_threshold(non_max_suppress(grad), img.width, img.height, low, high);
}

// ---------------------------------------------------------------------------
// Least-squares polynomial fit

/// y(x) = sum_k coefficients[k] x^k. The fit itself is held in the
/// conditioned variable t = (x - x_center) / x_scale and evaluated there.
struct EdgeFitModel {
    int degree = 0;
    std::vector<double> coefficients;
    double rms_residual = 0.0;
    double x_center = 0.0;
    double x_scale = 1.0;
    std::vector<double> scaled_coefficients;

    double operator()(double x) const {
        const long double t = (static_cast<long double>(x) - x_center) / x_scale;
        long double acc = 0.0L;
        for (auto it = scaled_coefficients.rbegin(); it != scaled_coefficients.rend(); ++it) acc = acc * t + *it;
        return static_cast<double>(acc);
    }
};

namespace detail {

/// Gaussian elimination with partial pivoting; A is n x n row-major.
inline std::vector<long double> solve_dense(std::vector<long double> a, std::vector<long double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
        if (a[piv * n + col] == 0.0L) throw DataError("polyfit: singular normal equations");
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const long double f = a[r * n + col] / a[col * n + col];
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<long double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        long double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
        x[i] = s / a[i * n + i];
    }
    return x;
}

}  // namespace detail

inline EdgeFitModel polyfit_least_squares(std::span<const Point2> points, int degree) {
    if (degree < 1) throw ConfigError("edgefit.degree", "must be >= 1");
    std::set<double> distinct;
    for (const auto& p : points) distinct.insert(p.x);
    if (static_cast<int>(distinct.size()) <= degree)
        throw DataError("polyfit: rank-deficient (" + std::to_string(distinct.size()) + " distinct x for degree " +
                        std::to_string(degree) + ")");

    const double xmin = *distinct.begin(), xmax = *distinct.rbegin();
    EdgeFitModel m;
    m.degree = degree;
    m.x_center = 0.5 * (xmin + xmax);
    m.x_scale = 0.5 * (xmax - xmin);

    const std::size_t n = static_cast<std::size_t>(degree) + 1;
    std::vector<long double> ata(n * n, 0.0L), atb(n, 0.0L), pw(2 * n - 1);
    for (const auto& p : points) {
        const long double t = (static_cast<long double>(p.x) - m.x_center) / m.x_scale;
        pw[0] = 1.0L;
        for (std::size_t k = 1; k < pw.size(); ++k) pw[k] = pw[k - 1] * t;
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < n; ++c) ata[r * n + c] += pw[r + c];
            atb[r] += pw[r] * p.y;
        }
    }
    const auto beta = detail::solve_dense(std::move(ata), std::move(atb));
    m.scaled_coefficients.assign(beta.begin(), beta.end());

    // expand sum_j beta_j ((x - c)/s)^j into powers of x
    std::vector<long double> alpha(n, 0.0L);
    const long double c = m.x_center, s = m.x_scale;
    for (std::size_t j = 0; j < n; ++j) {
        long double binom = 1.0L;  // C(j, k)
        const long double inv = 1.0L / std::pow(s, static_cast<long double>(j));
        for (std::size_t k = 0; k <= j; ++k) {
            alpha[k] += beta[j] * inv * binom * std::pow(-c, static_cast<long double>(j - k));
            binom = binom * static_cast<long double>(j - k) / static_cast<long double>(k + 1);
        }
    }
    m.coefficients.assign(alpha.begin(), alpha.end());

    long double ss = 0.0L;
    for (const auto& p : points) {
        const long double r = p.y - static_cast<long double>(m(p.x));
        ss += r * r;
    }
    m.rms_residual = static_cast<double>(std::sqrt(ss / points.size()));
    return m;
}

/// Upper cable profile: for each column, the topmost in-mask edge pixel.
inline std::vector<Point2> edge_profile(const EdgeMap& edges, const RoiMask& mask) {
    if (edges.width != mask.width() || edges.height != mask.height())
        throw DataError("edge_profile: edge map / mask dimension mismatch");
    std::vector<Point2> pts;
    const auto& box = mask.bounding_box();
    for (int x = box.x0; x < box.x1; ++x)
        for (int y = box.y0; y < box.y1; ++y)
            if (edges.at(x, y) && mask.contains(x, y)) {
                pts.push_back({double(x), double(y)});
                break;
            }
    return pts;
}

struct EdgeDeviation {
    double score = 0.0;
    bool no_edge = false;
    std::size_t samples = 0;
};

/// Mean |y_edge - y_baseline(x)| over the in-mask upper edge profile; 0 with
/// no_edge set when the mask holds no edge pixel.
inline EdgeDeviation edge_deviation_score(const EdgeMap& edges, const EdgeFitModel& baseline, const RoiMask& mask) {
    const auto pts = edge_profile(edges, mask);
    if (pts.empty()) return {0.0, true, 0};
    double sum = 0.0;
    for (const auto& p : pts) sum += std::abs(p.y - baseline(p.x));
    return {sum / static_cast<double>(pts.size()), false, pts.size()};
}

// ---------------------------------------------------------------------------
// Adaptive Gaussian mixture

struct GmmParams {
    int components = 3;
    double learning_rate = 0.02;
    double background_ratio = 0.7;
    double match_distance = 2.5;  // in standard deviations
    double variance_floor = 4.0;
    double initial_variance = 225.0;

    friend bool operator==(const GmmParams&, const GmmParams&) = default;
};

inline void validate(const GmmParams& p) {
    if (p.components < 1 || p.components > 8) throw ConfigError("gmm.components", "must be in [1, 8]");
    if (!(p.learning_rate > 0.0 && p.learning_rate < 1.0)) throw ConfigError("gmm.learning_rate", "must be in (0, 1)");
    if (!(p.background_ratio > 0.0 && p.background_ratio < 1.0))
        throw ConfigError("gmm.background_ratio", "must be in (0, 1)");
    if (!(p.match_distance > 0.0)) throw ConfigError("gmm.match_distance", "must be > 0");
    if (!(p.variance_floor > 0.0)) throw ConfigError("gmm.variance_floor", "must be > 0");
    if (!(p.initial_variance >= p.variance_floor))
        throw ConfigError("gmm.initial_variance", "must be >= variance_floor");
}

struct GmmComponent {
    double weight = 0.0;
    double mean = 0.0;
    double variance = 0.0;

    friend bool operator==(const GmmComponent&, const GmmComponent&) = default;
};

namespace detail {

// Active components ordered by weight / sigma, descending; ties keep slot order.
inline int gmm_rank(std::span<const GmmComponent> comps, std::array<int, 8>& order) {
    int n = 0;
    for (int k = 0; k < static_cast<int>(comps.size()); ++k)
        if (comps[k].weight > 0.0) order[n++] = k;
    auto fitness = [&](int k) { return comps[k].weight / std::sqrt(comps[k].variance); };
    // stable insertion sort, descending fitness; at most 8 entries
    for (int i = 1; i < n; ++i) {
        const int k = order[i];
        int j = i;
        for (; j > 0 && fitness(order[j - 1]) < fitness(k); --j) order[j] = order[j - 1];
        order[j] = k;
    }
    return n;
}

}  // namespace detail

/// Starts a pixel's mixture from its first observation.
inline void gmm_seed_pixel(std::span<GmmComponent> comps, double x, const GmmParams& p) {
    for (auto& c : comps) c = {0.0, 0.0, p.initial_variance};
    comps[0] = {1.0, x, p.initial_variance};
}

/// One update step for one pixel; returns true when x is foreground.
///
/// Matching and the background decision use the mixture as it stood before
/// this observation: x is background iff its first match (in w/sigma order)
/// lies inside the shortest prefix whose cumulative weight reaches
/// background_ratio.
inline bool gmm_update_pixel(std::span<GmmComponent> comps, double x, const GmmParams& p) {
    std::array<int, 8> order{};
    const int active = detail::gmm_rank(comps, order);

    int background_len = active;
    double cum = 0.0;
    for (int r = 0; r < active; ++r) {
        cum += comps[order[r]].weight;
        if (cum >= p.background_ratio) {
            background_len = r + 1;
            break;
        }
    }

    int matched = -1, matched_rank = -1;
    for (int r = 0; r < active; ++r) {
        const auto& c = comps[order[r]];
        if (std::abs(x - c.mean) <= p.match_distance * std::sqrt(c.variance)) {
            matched = order[r];
            matched_rank = r;
            break;
        }
    }

    const double a = p.learning_rate;
    for (int k = 0; k < static_cast<int>(comps.size()); ++k)
        comps[k].weight = (1.0 - a) * comps[k].weight + (k == matched ? a : 0.0);

    if (matched >= 0) {
        auto& c = comps[matched];
        const double rho = a / std::max(c.weight, a);
        c.mean = (1.0 - rho) * c.mean + rho * x;
        const double d = x - c.mean;
        c.variance = std::max(p.variance_floor, (1.0 - rho) * c.variance + rho * d * d);
    } else {
        int weakest = 0;
        for (int k = 1; k < static_cast<int>(comps.size()); ++k)
            if (comps[k].weight < comps[weakest].weight) weakest = k;
        comps[weakest] = {a, x, p.initial_variance};
    }

    double total = 0.0;
    for (const auto& c : comps) total += c.weight;
    for (auto& c : comps) c.weight /= total;

    return !(matched >= 0 && matched_rank < background_len);
}

/// Per-pixel mixtures for a whole frame. Single writer; frames must arrive in order.
class GmmModel {
public:
    explicit GmmModel(GmmParams params = {}) : params_(params) { validate(params_); }

    const GmmParams& params() const noexcept { return params_; }
    bool seeded() const noexcept { return width_ > 0; }
    std::span<const GmmComponent> pixel(int x, int y) const {
        const auto k = static_cast<std::size_t>(params_.components);
        return {comps_.data() + (static_cast<std::size_t>(y) * width_ + x) * k, k};
    }

    /// First call seeds the model and reports no foreground.
    std::vector<std::uint8_t> update_and_classify(const GrayImage& img) {
        const auto k = static_cast<std::size_t>(params_.components);
        std::vector<std::uint8_t> fg(img.size(), 0);
        if (!seeded()) {
            width_ = img.width;
            height_ = img.height;
            comps_.assign(img.size() * k, {});
            for (std::size_t i = 0; i < img.size(); ++i)
                gmm_seed_pixel({comps_.data() + i * k, k}, img.pixels[i], params_);
            return fg;
        }
        if (img.width != width_ || img.height != height_) throw DataError("gmm: frame dimension mismatch");
        for (std::size_t i = 0; i < img.size(); ++i)
            fg[i] = gmm_update_pixel({comps_.data() + i * k, k}, img.pixels[i], params_) ? 1 : 0;
        return fg;
    }

    void reset() noexcept {
        width_ = height_ = 0;
        comps_.clear();
    }

private:
    GmmParams params_;
    int width_ = 0;
    int height_ = 0;
    std::vector<GmmComponent> comps_;
};

}  // namespace cablewatch
