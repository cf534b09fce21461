#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cablewatch/metrics.hpp"

using namespace cablewatch;

namespace {

std::set<std::int64_t> frames_of(const std::vector<FrameInterval>& v) {
    std::set<std::int64_t> s;
    for (const auto& i : v)
        for (auto f = i.start; f <= i.end; ++f) s.insert(f);
    return s;
}

std::vector<FrameInterval> random_intervals(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> count(0, 4), start(0, 300), len(0, 60);
    std::vector<FrameInterval> v;
    for (int k = count(rng); k > 0; --k) {
        const int a = start(rng);
        v.push_back({a, a + len(rng)});
    }
    return v;
}

SlackEvent ev(int id, std::int64_t a, std::int64_t b) { return {id, a, b, 100.0, a, a * 33, b * 33}; }

}  // namespace

TEST(Metrics, IouMatchesFrameSetCounting) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto a = random_intervals(rng), b = random_intervals(rng);
        const auto fa = frames_of(a), fb = frames_of(b);
        std::size_t inter = 0;
        for (auto f : fa) inter += fb.count(f);
        const std::size_t uni = fa.size() + fb.size() - inter;
        const double iou = temporal_iou(a, b);
        if (uni == 0) {
            EXPECT_TRUE(std::isnan(iou));
        } else {
            EXPECT_DOUBLE_EQ(iou, double(inter) / double(uni));
            EXPECT_GE(iou, 0.0);
            EXPECT_LE(iou, 1.0);
        }
    }
}

TEST(Metrics, IouEdgeCases) {
    EXPECT_DOUBLE_EQ(temporal_iou({{10, 20}}, {{10, 20}}), 1.0);
    EXPECT_DOUBLE_EQ(temporal_iou({{10, 20}}, {{21, 30}}), 0.0);
    EXPECT_DOUBLE_EQ(temporal_iou({{0, 9}}, {}), 0.0);
    EXPECT_TRUE(std::isnan(temporal_iou({}, {})));
}

TEST(Metrics, DetectionScore) {
    const std::vector<TruthInterval> truth = {{100, 199, 5.0}, {300, 349, 3.0}};
    const auto s = score_detection({ev(1, 20, 30), ev(2, 110, 220), ev(3, 320, 340)}, truth);
    EXPECT_EQ(s.events, 3u);
    EXPECT_EQ(s.truth_events, 2u);
    EXPECT_EQ(s.false_events, 1u);
    ASSERT_TRUE(s.latency);
    EXPECT_EQ(*s.latency, 10);
    EXPECT_DOUBLE_EQ(s.iou, (90.0 + 21.0) / (11.0 + 111.0 + 21.0 + 150.0 - 111.0));

    EXPECT_EQ(score_detection({ev(1, 90, 120)}, truth).latency, 0);
    EXPECT_FALSE(score_detection({ev(1, 300, 310)}, truth).latency);
    const auto none = score_detection({}, {});
    EXPECT_TRUE(std::isnan(none.iou));
    EXPECT_FALSE(none.latency);
}

TEST(Metrics, BenchReportsEveryCell) {
    DetectorConfig base;
    const auto cells = run_bench({"S1"}, {DetectorKind::diff}, base);
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_EQ(cells[0].scenario, "S1");
    EXPECT_EQ(cells[0].score.events, 1u);
    EXPECT_EQ(cells[0].score.false_events, 0u);
    const auto csv = bench_csv(cells);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "scenario,detector,tau,events,truth_events,iou,latency_frames,false_events");
    EXPECT_NE(csv.find("\nS1,diff,"), std::string::npos);
    EXPECT_NE(bench_table(cells).find("S1"), std::string::npos);
}
