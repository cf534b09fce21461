#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cablewatch/pipeline.hpp"
#include "cablewatch/render.hpp"
#include "cablewatch/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cablewatch;

namespace {

SceneSpec small_scene(bool with_event) {
    SceneSpec s;
    s.name = "small";
    s.width = 64;
    s.height = 48;
    s.frame_count = 90;
    s.cable = {{0, 10}, {32, 22}, {64, 18}, 3.0, 190.0};
    s.noise_sigma = 2.0;
    if (with_event) s.slack_events = {{40, 70, 6.0, 20.0, 56.0}};
    s.rng_seed = 11;
    return s;
}

DetectorConfig small_config() {
    DetectorConfig c;
    c.tau = 10;
    c.auto_tau = false;
    c.reference = {12, 7, ReferenceMode::lagged_frame};
    c.avg_window = 4;
    c.score_on = 20;
    c.score_off = 8;
    c.min_event_frames = 3;
    return c;
}

RoiPolygon small_roi() { return {"r", {{4, 4}, {60, 4}, {60, 44}, {4, 44}}}; }

}  // namespace

TEST(Render, OverlayMarksExactlyTheChangedPixels) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto img = oracle::random_image(40, 30, rng);
        ChangeMap cm{0, 40, 30, std::vector<std::uint8_t>(1200), 0};
        std::bernoulli_distribution coin(trial == 0 ? 0.0 : (trial == 1 ? 1.0 : 0.3));
        for (auto& b : cm.bits) cm.count += (b = coin(rng));
        const auto out = overlay_changes(img, cm);
        for (int y = 0; y < 30; ++y)
            for (int x = 0; x < 40; ++x) {
                const auto* p = out.px(x, y);
                const int v = img.at(x, y);
                if (cm.changed(x, y)) {
                    EXPECT_EQ(p[0], 255);
                    EXPECT_EQ(p[1], saturate_u8(0.3 * v));
                    EXPECT_EQ(p[2], p[1]);
                } else {
                    EXPECT_EQ(p[0], v);
                    EXPECT_EQ(p[1], v);
                    EXPECT_EQ(p[2], v);
                }
            }
    }
}

TEST(Render, BresenhamSegmentsAreThinAndClose) {
    std::mt19937_64 rng(22);
    std::uniform_int_distribution<int> u(-50, 50);
    for (int trial = 0; trial < 500; ++trial) {
        const int x0 = u(rng), y0 = u(rng), x1 = u(rng), y1 = u(rng);
        std::vector<std::pair<int, int>> pts;
        bresenham_line(x0, y0, x1, y1, [&](int x, int y) { pts.emplace_back(x, y); });
        const int dx = x1 - x0, dy = y1 - y0;
        ASSERT_EQ(pts.size(), static_cast<std::size_t>(std::max(std::abs(dx), std::abs(dy)) + 1));
        EXPECT_EQ(pts.front(), std::make_pair(x0, y0));
        EXPECT_EQ(pts.back(), std::make_pair(x1, y1));
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i) {
                EXPECT_LE(std::abs(pts[i].first - pts[i - 1].first), 1);
                EXPECT_LE(std::abs(pts[i].second - pts[i - 1].second), 1);
            }
            // offset from the ideal line along the minor axis
            const auto [x, y] = pts[i];
            if (std::abs(dx) >= std::abs(dy)) {
                if (dx == 0) continue;
                const double yi = y0 + double(dy) * (x - x0) / dx;
                EXPECT_LE(std::abs(y - yi), 0.5 + 1e-12);
            } else {
                const double xi = x0 + double(dx) * (y - y0) / dy;
                EXPECT_LE(std::abs(x - xi), 0.5 + 1e-12);
            }
        }
    }
}

TEST(Render, OutlinePixelCounts) {
    const std::vector<Point2> tri = {{10, 10}, {100, 20}, {40, 90}};
    RgbImage img(128, 128);
    draw_roi_outline(img, {"t", tri});
    std::size_t lit = 0, want = 0;
    for (std::size_t i = 0; i < img.pixel_count(); ++i) lit += img.pixels[3 * i] == kRoiOutlineColor.r;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& a = tri[i];
        const auto& b = tri[(i + 1) % 3];
        want += static_cast<std::size_t>(std::max(std::abs(b.x - a.x), std::abs(b.y - a.y))) + 1;
    }
    EXPECT_EQ(lit, want - 3);  // shared corners counted once

    RgbImage rect(64, 64);
    draw_roi_outline(rect, {"r", {{5, 7}, {50, 7}, {50, 40}, {5, 40}}});
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const bool on_edge = ((y == 7 || y == 40) && x >= 5 && x <= 50) || ((x == 5 || x == 50) && y >= 7 && y <= 40);
            EXPECT_EQ(rect.px(x, y)[0] == kRoiOutlineColor.r, on_edge) << x << "," << y;
        }
}

TEST(Render, ScoreCsvRoundTrips) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 5000.0);
    ScoreSeries s;
    for (std::int64_t f = 1; f <= 300; ++f) s.update(f, f * 33, std::floor(u(rng)), 15);
    const std::vector<SlackEvent> events = {{1, 20, 40, 1.0, 30, 660, 1320}, {2, 100, 101, 2.0, 100, 3300, 3333}};
    const auto text = score_csv(s, events);
    EXPECT_EQ(text.substr(0, text.find('\n')), "frame,timestamp_ms,count,score,event_id");
    const auto back = parse_score_csv(text);
    EXPECT_EQ(back.series, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto f = s[i].frame;
        const int want = (f >= 20 && f <= 40) ? 1 : (f >= 100 && f <= 101 ? 2 : 0);
        EXPECT_EQ(back.event_ids[i], want) << f;
    }
    EXPECT_THROW(parse_score_csv("frame,count\n"), DataError);
    EXPECT_THROW(parse_score_csv(std::string(kScoreCsvHeader) + "\n1,2,x,4,\n"), DataError);
}

TEST(Render, EventsJsonRoundTrips) {
    const std::vector<SlackEvent> events = {{1, 20, 40, 123.456, 30, 660, 1320}, {2, 100, 180, 0.1, 150, 3300, 6000}};
    EXPECT_EQ(events_from_json(nlohmann::json::parse(events_to_json(events).dump())), events);
    EXPECT_THROW(events_from_json(nlohmann::json::parse(R"([{"id": 1}])")), DataError);
}

TEST(Render, ExportQuietRun) {
    SynthSource src(small_scene(false));
    const auto res = run_pipeline(src, RoiMask::full(64, 48), small_config());
    ASSERT_TRUE(res.events.empty());
    testutil::TempDir dir;
    const auto out = export_run(res.series, res.events, dir.path());
    EXPECT_TRUE(out.pngs.empty());
    const auto csv = testutil::slurp(out.csv);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 89);
    EXPECT_EQ(nlohmann::json::parse(testutil::slurp(out.events_json)), nlohmann::json::array());
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++files;
    EXPECT_EQ(files, 2u);
}

TEST(Render, ExportWritesPeakOverlayPerEvent) {
    SynthSource src(small_scene(true));
    const auto roi = small_roi();
    const auto mask = build_mask(RoiConfig{"small", {roi}}, 64, 48);
    const auto res = run_pipeline(src, mask, small_config());
    ASSERT_FALSE(res.events.empty());
    testutil::TempDir d1, d2;
    const auto a = export_run(res.series, res.events, d1.path(), {roi});
    const auto b = export_run(res.series, res.events, d2.path(), {roi});
    ASSERT_EQ(a.pngs.size(), res.events.size());
    for (std::size_t k = 0; k < res.events.size(); ++k) {
        const auto& ev = res.events[k];
        EXPECT_EQ(a.pngs[k].filename(), "event_" + std::to_string(k + 1) + "_frame_" +
                                            std::to_string(ev.event.peak_frame) + ".png");
        const auto png = decode_png(read_file_bytes(a.pngs[k]));
        EXPECT_EQ(png.width, 64);
        EXPECT_EQ(png.height, 48);
        EXPECT_EQ(png.channels, 3);
        EXPECT_EQ(ev.frame.index(), ev.event.peak_frame);
        EXPECT_EQ(ev.change.frame_index, ev.event.peak_frame);
        RgbImage want = overlay_changes(src.frame_at(ev.event.peak_frame).image(), ev.change);
        draw_roi_outline(want, roi);
        EXPECT_EQ(png.pixels, want.pixels);
        EXPECT_EQ(testutil::slurp(a.pngs[k]), testutil::slurp(b.pngs[k]));
    }
    EXPECT_EQ(testutil::slurp(a.csv), testutil::slurp(b.csv));
    EXPECT_EQ(testutil::slurp(a.events_json), testutil::slurp(b.events_json));
    const auto again = export_run(res.series, res.events, d1.path(), {roi});
    EXPECT_EQ(testutil::slurp(again.pngs[0]), testutil::slurp(b.pngs[0]));
}
