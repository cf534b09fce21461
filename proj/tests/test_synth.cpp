#include <gtest/gtest.h>

#include "cablewatch/synth.hpp"
#include "test_util.hpp"

using namespace cablewatch;

namespace {

SceneSpec clean_scene() {
    SceneSpec s;
    s.frame_count = 60;
    s.slack_events = {{20, 45, 6.0, 180.0, 300.0}};
    return s;
}

std::string field_of(const SceneSpec& s) {
    try {
        validate(s);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<none>";
}

// Intensity-weighted row centroid of column x above the background.
double column_centroid(const GrayImage& img, int x, double bg) {
    double m = 0, my = 0;
    for (int y = 0; y < img.height; ++y) {
        const double v = img.at(x, y) - bg;
        m += v;
        my += v * (y + 0.5);
    }
    return my / m;
}

}  // namespace

TEST(Synth, FramesArePureFunctionsOfSpecAndIndex) {
    const auto s = scenario("S2");
    SynthSource a(s), b(s);
    for (std::int64_t f : {0, 1, 599, 250, 899, 250})
        EXPECT_EQ(a.frame_at(f).image(), b.frame_at(f).image()) << f;
    auto other = s;
    other.rng_seed = 203;
    EXPECT_NE(render_frame(s, 10), render_frame(other, 10));
    EXPECT_NE(render_frame(s, 10), render_frame(s, 11));
}

TEST(Synth, NoiselessStaticSceneIsConstant) {
    SceneSpec s;
    const auto f0 = render_frame(s, 0);
    for (std::int64_t f = 1; f < s.frame_count; ++f) ASSERT_EQ(render_frame(s, f), f0);
}

TEST(Synth, ZeroSagInjectionChangesNothing) {
    auto with = scenario("S1");
    auto without = with;
    with.slack_events.front().sag_px = 0.0;
    without.slack_events.clear();
    for (std::int64_t f : {0, 249, 260, 300, 399}) EXPECT_EQ(render_frame(with, f), render_frame(without, f));
    EXPECT_TRUE(truth_intervals(with).empty());
}

TEST(Synth, TruthIntervalsCoverExactlyTheSaggingFrames) {
    for (const auto& s : scenario_suite()) {
        const auto truth = truth_intervals(s);
        for (std::int64_t f = 0; f < s.frame_count; ++f) {
            bool in = false;
            for (const auto& t : truth) in |= (f >= t.start && f <= t.end);
            EXPECT_EQ(in, frame_sag(s, f) > 0.0) << s.name << " frame " << f;
        }
    }
}

TEST(Synth, ScenarioShapes) {
    EXPECT_TRUE(truth_intervals(scenario("S3")).empty());
    EXPECT_TRUE(truth_intervals(scenario("S4")).empty());
    const auto s2 = truth_intervals(scenario("S2"));
    ASSERT_EQ(s2.size(), 4u);
    for (std::size_t i = 0; i + 1 < s2.size(); ++i) EXPECT_LT(s2[i].sag_px, s2.back().sag_px);
    EXPECT_EQ(truth_intervals(scenario("S1")).size(), 1u);
    EXPECT_THROW(scenario("S9"), ConfigError);
}

TEST(Synth, SagMovesTheCableDown) {
    auto s = clean_scene();
    const auto base = render_frame(s, 0);
    const auto sag = render_frame(s, 32);  // inside the envelope plateau
    for (int x : {220, 240, 260}) {
        const double shift = column_centroid(sag, x, s.background_intensity) -
                             column_centroid(base, x, s.background_intensity);
        EXPECT_NEAR(shift, sag_at(s, x + 0.5, 32), 0.15) << x;
    }
}

TEST(Synth, CleanDifferencesStayInsideTheSpan) {
    auto s = clean_scene();
    const auto base = render_frame(s, 0);
    const auto& e = s.slack_events.front();
    for (std::int64_t f = 1; f < s.frame_count; ++f) {
        const auto img = render_frame(s, f);
        for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x)
                if (img.at(x, y) != base.at(x, y)) {
                    ASSERT_GE(x, static_cast<int>(e.span_x0) - 1);
                    ASSERT_LE(x, static_cast<int>(e.span_x1));
                    ASSERT_GE(f, e.start_frame);
                    ASSERT_LE(f, e.end_frame);
                }
    }
}

TEST(Synth, OutsideScenarioNeverTouchesDefaultRoi) {
    auto s = scenario("S5");
    s.noise_sigma = 0.0;
    const auto mask = build_mask(default_synth_roi(), s.width, s.height);
    const auto base = render_frame(s, 0);
    std::size_t changed = 0;
    for (std::int64_t f = 240; f < s.frame_count; f += 5) {
        const auto img = render_frame(s, f);
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            if (img.pixels[i] != base.pixels[i]) {
                ++changed;
                ASSERT_FALSE(mask.contains(i));
            }
    }
    EXPECT_GT(changed, 0u);
}

TEST(Synth, NoiseHasTheRequestedSpread) {
    const auto s = scenario("S3");
    const auto a = render_frame(s, 5), b = render_frame(s, 6);
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (int y = 180; y < 240; ++y)  // background rows below the cable
        for (int x = 0; x < s.width; ++x) {
            const double d = double(b.at(x, y)) - a.at(x, y);
            sum += d;
            sq += d * d;
            ++n;
        }
    const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
    EXPECT_NEAR(mean, 0.0, 0.2);
    EXPECT_NEAR(sd, std::sqrt(2.0) * s.noise_sigma, 0.3);
}

TEST(Synth, RenderedFilesAreReproducible) {
    testutil::TempDir d1, d2;
    auto s = scenario("S1");
    s.frame_count = 12;
    const auto r1 = render_scene(s, d1.path());
    const auto r2 = render_scene(s, d2.path());
    EXPECT_EQ(testutil::slurp(r1.raw), testutil::slurp(r2.raw));
    EXPECT_EQ(testutil::slurp(r1.sidecar), testutil::slurp(r2.sidecar));
    EXPECT_EQ(testutil::slurp(r1.truth), testutil::slurp(r2.truth));
    const auto src = open_source(r1.raw);
    ASSERT_EQ(src->meta().frame_count, 12);
    for (std::int64_t f = 0; f < 12; ++f) EXPECT_EQ(src->frame_at(f).image(), render_frame(s, f));
    const auto truth = nlohmann::json::parse(testutil::slurp(r1.truth));
    EXPECT_EQ(truth["per_frame_sag"].size(), 12u);
}

TEST(Synth, JsonRoundTrip) {
    for (const auto& s : scenario_suite())
        EXPECT_EQ(scene_from_json(nlohmann::json::parse(scene_to_json(s).dump())), s) << s.name;
}

TEST(Synth, InvalidSpecsRejected) {
    auto s = SceneSpec{};
    s.frame_count = 0;
    EXPECT_EQ(field_of(s), "frame_count");
    s = {};
    s.noise_sigma = -1;
    EXPECT_EQ(field_of(s), "noise_sigma");
    s = {};
    s.slack_events = {{10, 5, 1.0, 0, 10}};
    EXPECT_EQ(field_of(s), "slack_events");
    s = {};
    s.slack_events = {{10, 20, 500.0, 0, 300}};
    EXPECT_EQ(field_of(s), "cable");
    s = {};
    s.cable.mid = {400, 100};
    EXPECT_EQ(field_of(s), "cable");
    EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"({"width": "wide"})")), ConfigError);
    EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"({"cable": {"points": [[0, 1]]}})")), ConfigError);
    EXPECT_THROW(scene_from_json(nlohmann::json::parse(R"({"slack_events": [{"start_frame": 1}]})")), ConfigError);
}
