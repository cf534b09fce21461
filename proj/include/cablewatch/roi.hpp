#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cablewatch/frame.hpp"

namespace cablewatch {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

struct RoiPolygon {
    std::string name;
    std::vector<Point2> vertices;

    friend bool operator==(const RoiPolygon&, const RoiPolygon&) = default;
};

/// Structural checks that do not depend on image size.
/// `field` names the polygon in error reports.
inline void validate_polygon(const RoiPolygon& poly, const std::string& field = "vertices") {
    if (poly.vertices.size() < 3) throw ConfigError(field, "a polygon needs at least 3 vertices");
    for (std::size_t i = 0; i < poly.vertices.size(); ++i) {
        const auto& a = poly.vertices[i];
        const auto& b = poly.vertices[(i + 1) % poly.vertices.size()];
        if (!std::isfinite(a.x) || !std::isfinite(a.y)) throw ConfigError(field, "non-finite vertex");
        if (a == b) throw ConfigError(field, "consecutive vertices " + std::to_string(i) + " are identical");
    }
}

inline void validate_polygon_bounds(const RoiPolygon& poly, int width, int height,
                                    const std::string& field = "vertices") {
    for (const auto& v : poly.vertices)
        if (v.x < 0.0 || v.y < 0.0 || v.x > width || v.y > height)
            throw ConfigError(field,
                              "vertex (" + std::to_string(v.x) + ", " + std::to_string(v.y) + ") outside " +
                                  std::to_string(width) + "x" + std::to_string(height));
}

namespace detail {

// x where edge (a,b) crosses the horizontal line at y. Shared by the
// point test and the scanline fill so the two agree bit-for-bit.
inline double edge_crossing_x(const Point2& a, const Point2& b, double y) {
    return (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x;
}

inline bool edge_straddles(const Point2& a, const Point2& b, double y) { return (a.y > y) != (b.y > y); }

}  // namespace detail

/// Even-odd rule, ray cast towards +x.
inline bool point_in_polygon(Point2 p, const RoiPolygon& poly) {
    bool inside = false;
    const auto& v = poly.vertices;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        if (detail::edge_straddles(v[i], v[j], p.y) && p.x < detail::edge_crossing_x(v[i], v[j], p.y))
            inside = !inside;
    }
    return inside;
}

struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)
    bool empty() const noexcept { return x1 <= x0 || y1 <= y0; }
    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

class RoiMask {
public:
    RoiMask() = default;
    RoiMask(int width, int height, std::vector<std::uint8_t> bits) : width_(width), height_(height), bits_(std::move(bits)) {
        if (bits_.size() != static_cast<std::size_t>(width) * height) throw DataError("mask has wrong length");
        for (auto& b : bits_) b = b ? 1 : 0;
        recount();
        if (inside_count_ == 0) throw ConfigError("polygons", "region of interest covers no pixel centers");
    }

    /// Every pixel inside.
    static RoiMask full(int width, int height) {
        return RoiMask(width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, 1));
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t inside_count() const noexcept { return inside_count_; }
    bool contains(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    bool contains(std::size_t i) const { return bits_[i] != 0; }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }
    const PixelRect& bounding_box() const noexcept { return bbox_; }

    /// True when every pixel of this mask is also in `other`.
    bool subset_of(const RoiMask& other) const {
        if (width_ != other.width_ || height_ != other.height_) return false;
        for (std::size_t i = 0; i < bits_.size(); ++i)
            if (bits_[i] && !other.bits_[i]) return false;
        return true;
    }

    friend bool operator==(const RoiMask& a, const RoiMask& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.bits_ == b.bits_;
    }

private:
    void recount() {
        inside_count_ = 0;
        bbox_ = {width_, height_, 0, 0};
        for (int y = 0; y < height_; ++y)
            for (int x = 0; x < width_; ++x)
                if (bits_[static_cast<std::size_t>(y) * width_ + x]) {
                    ++inside_count_;
                    bbox_.x0 = std::min(bbox_.x0, x);
                    bbox_.y0 = std::min(bbox_.y0, y);
                    bbox_.x1 = std::max(bbox_.x1, x + 1);
                    bbox_.y1 = std::max(bbox_.y1, y + 1);
                }
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
    std::size_t inside_count_ = 0;
    PixelRect bbox_;
};

namespace detail {

// Scanline fill of one polygon into `bits` (OR). Pixel (i,j) is sampled at
// (i+0.5, j+0.5); the crossing arithmetic is the same as point_in_polygon.
inline void fill_polygon(const RoiPolygon& poly, int width, int height, std::vector<std::uint8_t>& bits) {
    const auto& v = poly.vertices;
    std::vector<double> xs;
    for (int j = 0; j < height; ++j) {
        const double yc = j + 0.5;
        xs.clear();
        for (std::size_t i = 0, k = v.size() - 1; i < v.size(); k = i++)
            if (edge_straddles(v[i], v[k], yc)) xs.push_back(edge_crossing_x(v[i], v[k], yc));
        if (xs.empty()) continue;
        std::sort(xs.begin(), xs.end());
        auto* row = bits.data() + static_cast<std::size_t>(j) * width;
        for (int i = 0; i < width; ++i) {
            const double xc = i + 0.5;
            // number of crossings strictly right of the center
            auto right = xs.end() - std::upper_bound(xs.begin(), xs.end(), xc);
            if (right & 1) row[i] = 1;
        }
    }
}

}  // namespace detail

inline RoiMask rasterize(const RoiPolygon& poly, int width, int height) {
    validate_polygon(poly);
    validate_polygon_bounds(poly, width, height);
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(width) * height, 0);
    detail::fill_polygon(poly, width, height, bits);
    return RoiMask(width, height, std::move(bits));
}

/// Pixels outside the mask read as 0.
inline GrayImage mask_apply(const GrayImage& img, const RoiMask& mask) {
    if (img.width != mask.width() || img.height != mask.height())
        throw DataError("mask_apply: frame " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " vs mask " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()));
    GrayImage out = img;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        if (!mask.contains(i)) out.pixels[i] = 0;
    return out;
}

/// Per-view ROI configuration: the union of its polygons forms the mask.
struct RoiConfig {
    std::string source_id;
    std::vector<RoiPolygon> polygons;

    friend bool operator==(const RoiConfig&, const RoiConfig&) = default;
};

inline RoiMask build_mask(const RoiConfig& cfg, int width, int height) {
    if (cfg.polygons.empty()) throw ConfigError("polygons", "at least one polygon is required");
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(width) * height, 0);
    for (std::size_t k = 0; k < cfg.polygons.size(); ++k) {
        const auto& p = cfg.polygons[k];
        const std::string field = "polygons[" + std::to_string(k) + "].vertices";
        validate_polygon(p, field);
        validate_polygon_bounds(p, width, height, field);
        detail::fill_polygon(p, width, height, bits);
    }
    return RoiMask(width, height, std::move(bits));
}

inline nlohmann::ordered_json roi_to_json(const RoiConfig& cfg) {
    nlohmann::ordered_json j;
    j["source_id"] = cfg.source_id;
    j["polygons"] = nlohmann::ordered_json::array();
    for (const auto& p : cfg.polygons) {
        nlohmann::ordered_json pj;
        pj["name"] = p.name;
        pj["vertices"] = nlohmann::ordered_json::array();
        for (const auto& v : p.vertices) pj["vertices"].push_back({v.x, v.y});
        j["polygons"].push_back(std::move(pj));
    }
    return j;
}

/// Parses and structurally validates; bounds are checked by build_mask.
inline RoiConfig roi_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("roi", "expected a JSON object");
    RoiConfig cfg;
    if (j.contains("source_id")) {
        if (!j["source_id"].is_string()) throw ConfigError("source_id", "must be a string");
        cfg.source_id = j["source_id"].get<std::string>();
    }
    if (!j.contains("polygons") || !j["polygons"].is_array()) throw ConfigError("polygons", "must be an array");
    for (std::size_t k = 0; k < j["polygons"].size(); ++k) {
        const auto& pj = j["polygons"][k];
        const std::string field = "polygons[" + std::to_string(k) + "]";
        if (!pj.is_object()) throw ConfigError(field, "must be an object");
        RoiPolygon p;
        p.name = pj.value("name", "roi" + std::to_string(k));
        if (!pj.contains("vertices") || !pj["vertices"].is_array())
            throw ConfigError(field + ".vertices", "must be an array of [x,y]");
        for (const auto& vj : pj["vertices"]) {
            if (!vj.is_array() || vj.size() != 2 || !vj[0].is_number() || !vj[1].is_number())
                throw ConfigError(field + ".vertices", "each vertex must be [x, y]");
            p.vertices.push_back({vj[0].get<double>(), vj[1].get<double>()});
        }
        validate_polygon(p, field + ".vertices");
        cfg.polygons.push_back(std::move(p));
    }
    if (cfg.polygons.empty()) throw ConfigError("polygons", "at least one polygon is required");
    return cfg;
}

}  // namespace cablewatch
