#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "cablewatch/gateway.hpp"
#include "cablewatch/synth.hpp"
#include "test_util.hpp"

using namespace cablewatch;
using nlohmann::json;

namespace {

SceneSpec small_scene() {
    SceneSpec s;
    s.name = "small";
    s.width = 64;
    s.height = 48;
    s.frame_count = 90;
    s.cable = {{0, 10}, {32, 22}, {64, 18}, 3.0, 190.0};
    s.noise_sigma = 2.0;
    s.slack_events = {{40, 70, 6.0, 20.0, 56.0}};
    s.rng_seed = 12;
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

RoiConfig box_roi(double x0, double y0, double x1, double y1) {
    return {"small", {{"box", {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}}}};
}

class GatewayTest : public ::testing::Test {
protected:
    void SetUp() override {
        src_ = std::make_shared<SynthSource>(small_scene());
        GatewayOptions opts;
        opts.autoplay = false;
        opts.audit_path = dir_ / "audit.jsonl";
        gw_ = std::make_unique<Gateway>(src_, roi_, small_config(), opts);
        port_ = gw_->bind("127.0.0.1", 0);
        gw_->start();
        cli_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
        cli_->set_read_timeout(10, 0);
    }

    void TearDown() override { gw_->stop(); }

    void step_to(std::int64_t frame) {
        while (next_ <= frame && gw_->step()) ++next_;
    }
    void run_out() {
        while (gw_->step()) ++next_;
    }

    json get_json(const std::string& path) {
        auto r = cli_->Get(path);
        EXPECT_TRUE(r);
        if (!r) return {};
        EXPECT_EQ(r->status, 200) << path;
        return json::parse(r->body);
    }

    httplib::Result put(const std::string& path, const std::string& body) {
        return cli_->Put(path, body, "application/json");
    }

    testutil::TempDir dir_;
    RoiConfig roi_ = box_roi(4, 4, 60, 44);
    std::shared_ptr<SynthSource> src_;
    std::unique_ptr<Gateway> gw_;
    std::unique_ptr<httplib::Client> cli_;
    int port_ = 0;
    std::int64_t next_ = 0;
};

std::vector<double> counts_of(const ScoreSeries& s) {
    std::vector<double> c;
    for (const auto& r : s.records()) c.push_back(r.count);
    return c;
}

}  // namespace

TEST_F(GatewayTest, InitialStatus) {
    const auto st = get_json("/api/status");
    EXPECT_EQ(st["frame"], 0);
    EXPECT_EQ(st["detector"], "diff");
    EXPECT_EQ(st["events_open"], 0);
    EXPECT_TRUE(st["last_score"].is_null());
    step_to(5);
    const auto st2 = get_json("/api/status");
    EXPECT_EQ(st2["frame"], 5);
    EXPECT_DOUBLE_EQ(st2["last_score"].get<double>(), gw_->scores().back().score);
}

TEST_F(GatewayTest, CorsPreflight) {
    auto r = cli_->Options("/api/config");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 204);
    EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
    EXPECT_NE(r->get_header_value("Access-Control-Allow-Methods").find("PUT"), std::string::npos);
}

TEST_F(GatewayTest, ConfigRoundTripAndAudit) {
    auto r = put("/api/config", R"({"tau": 40})");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(get_json("/api/config")["tau"], 40);
    const auto log = gw_->audit_log();
    ASSERT_EQ(log.size(), 1u);
    EXPECT_EQ(log[0]["field"], "tau");
    EXPECT_EQ(log[0]["old"], 10);
    EXPECT_EQ(log[0]["new"], 40);
    EXPECT_TRUE(log[0]["timestamp_ms"].is_number_integer());
    const auto lines = testutil::slurp(dir_ / "audit.jsonl");
    EXPECT_EQ(json::parse(lines.substr(0, lines.find('\n'))), log[0]);
}

TEST_F(GatewayTest, RejectedConfigLeavesStateAlone) {
    const auto before = get_json("/api/config");
    auto r = put("/api/config", R"({"score_off": 500})");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 422);
    const auto err = json::parse(r->body);
    ASSERT_FALSE(err["errors"].empty());
    EXPECT_EQ(err["errors"][0]["field"], "score_off");
    EXPECT_FALSE(err["errors"][0]["message"].get<std::string>().empty());

    r = put("/api/config", R"({"blur": {"radius": 99}, "tau": 0})");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 422);
    EXPECT_EQ(json::parse(r->body)["errors"].size(), 2u);

    r = put("/api/config", R"({"frobnicate": 1})");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 422);
    EXPECT_EQ(json::parse(r->body)["errors"][0]["field"], "frobnicate");

    r = put("/api/config", "{not json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);

    EXPECT_EQ(get_json("/api/config"), before);
    EXPECT_TRUE(gw_->audit_log().empty());
}

TEST_F(GatewayTest, AutoTauResolvesAgainstTheSource) {
    auto r = put("/api/config", R"({"auto_tau": true})");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    const auto mask = build_mask(roi_, 64, 48);
    const int want = tau_from_sigma(measure_noise_sigma(*src_, mask, 20));
    const auto c = get_json("/api/config");
    EXPECT_EQ(c["tau"], want);
    EXPECT_EQ(c["auto_tau"], false);
}

TEST_F(GatewayTest, ConfigAppliesFromTheNextFrame) {
    step_to(30);
    ASSERT_EQ(put("/api/config", R"({"tau": 25})")->status, 200);
    EXPECT_EQ(gw_->active_config().tau, 10);  // not yet applied
    run_out();
    EXPECT_EQ(gw_->active_config().tau, 25);

    auto c10 = small_config(), c25 = small_config();
    c25.tau = 25;
    const auto mask = build_mask(roi_, 64, 48);
    const auto a = counts_of(run_pipeline(*src_, mask, c10).series);
    const auto b = counts_of(run_pipeline(*src_, mask, c25).series);
    const auto got = counts_of(gw_->scores());
    ASSERT_EQ(got.size(), a.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], i < 30 ? a[i] : b[i]) << "record " << i;
}

TEST_F(GatewayTest, RoiChangeAppliesFromTheNextFrame) {
    const auto new_roi = box_roi(30, 10, 60, 40);
    step_to(40);
    auto r = put("/api/roi", roi_to_json(new_roi).dump());
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(roi_from_json(get_json("/api/roi")), new_roi);
    run_out();

    const auto a = counts_of(run_pipeline(*src_, build_mask(roi_, 64, 48), small_config()).series);
    const auto b = counts_of(run_pipeline(*src_, build_mask(new_roi, 64, 48), small_config()).series);
    const auto got = counts_of(gw_->scores());
    ASSERT_EQ(got.size(), a.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], i < 40 ? a[i] : b[i]) << "record " << i;

    const auto log = gw_->audit_log();
    ASSERT_EQ(log.size(), 1u);
    EXPECT_EQ(log[0]["field"], "roi");
    EXPECT_EQ(roi_from_json(log[0]["old"]), roi_);
    EXPECT_EQ(roi_from_json(log[0]["new"]), new_roi);
}

TEST_F(GatewayTest, InvalidRoiRejected) {
    auto r = put("/api/roi", R"({"polygons": [{"vertices": [[0, 0], [10, 10]]}]})");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 422);
    EXPECT_EQ(json::parse(r->body)["errors"][0]["field"], "polygons[0].vertices");
    r = put("/api/roi", R"({"polygons": [{"vertices": [[0, 0], [100, 0], [0, 100]]}]})");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 422);  // leaves the 64x48 frame
    EXPECT_EQ(json::parse(r->body)["errors"][0]["field"], "polygons[0].vertices");
    r = put("/api/roi", "]");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(roi_from_json(get_json("/api/roi")), roi_);
}

TEST_F(GatewayTest, ScoresAndEventsMatchAnOfflineRun) {
    run_out();
    const auto offline = run_pipeline(*src_, build_mask(roi_, 64, 48), small_config());
    ASSERT_FALSE(offline.events.empty());

    auto r = cli_->Get("/api/scores");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->get_header_value("Content-Type"), "text/csv");
    EXPECT_EQ(parse_score_csv(r->body).series, offline.series);
    EXPECT_EQ(r->body, score_csv(offline.series, plain_events(offline.events)));

    r = cli_->Get("/api/scores?from=20&to=29");
    ASSERT_TRUE(r);
    const auto slice = parse_score_csv(r->body).series;
    ASSERT_EQ(slice.size(), 10u);
    EXPECT_EQ(slice[0], offline.series[19]);
    EXPECT_EQ(slice[9], offline.series[28]);
    EXPECT_EQ(cli_->Get("/api/scores?from=abc")->status, 400);

    EXPECT_EQ(events_from_json(get_json("/api/events")), plain_events(offline.events));
    EXPECT_TRUE(gw_->done());
}

TEST_F(GatewayTest, FramesAndOverlays) {
    step_to(20);
    auto r = cli_->Get("/api/frame/7");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
    auto png = decode_png(std::span(reinterpret_cast<const std::uint8_t*>(r->body.data()), r->body.size()));
    EXPECT_EQ(png.channels, 1);
    EXPECT_EQ(png.pixels, src_->frame_at(7).image().pixels);

    r = cli_->Get("/api/frame/7?overlay=true");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    png = decode_png(std::span(reinterpret_cast<const std::uint8_t*>(r->body.data()), r->body.size()));
    EXPECT_EQ(png.channels, 3);

    EXPECT_EQ(cli_->Get("/api/frame/0?overlay=1")->status, 404);   // seed frame
    EXPECT_EQ(cli_->Get("/api/frame/50?overlay=1")->status, 404);  // not processed yet
    EXPECT_EQ(cli_->Get("/api/frame/90")->status, 404);
    EXPECT_EQ(cli_->Get("/api/frame/50")->status, 200);
}

TEST_F(GatewayTest, MarkIsAudited) {
    auto r = cli_->Post("/api/mark?frame=33&label=operator%20saw%20sag", "{}", "application/json");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body)["label"], "operator saw sag");
    EXPECT_EQ(cli_->Post("/api/mark?label=x", "{}", "application/json")->status, 400);
    const auto audit = get_json("/api/audit");
    ASSERT_EQ(audit.size(), 1u);
    EXPECT_EQ(audit[0]["field"], "mark");
    EXPECT_EQ(audit[0]["frame"], 33);
    EXPECT_EQ(audit[0]["label"], "operator saw sag");
}

TEST_F(GatewayTest, StreamDeliversEveryRecord) {
    std::atomic<bool> connected{false};
    std::string body;
    std::thread reader([&] {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(30, 0);
        c.Get("/api/stream", [&](const char* data, std::size_t n) {
            body.append(data, n);
            connected = true;
            return true;
        });
    });
    // the first keep-alive proves the handler has taken its cursor
    for (int i = 0; i < 200 && !connected; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    ASSERT_TRUE(connected);
    run_out();
    reader.join();

    const auto series = gw_->scores();
    std::vector<json> msgs;
    std::size_t pos = 0;
    while ((pos = body.find("data: ", pos)) != std::string::npos) {
        const auto end = body.find("\n\n", pos);
        msgs.push_back(json::parse(body.substr(pos + 6, end - pos - 6)));
        pos = end;
    }
    ASSERT_EQ(msgs.size(), series.size());
    const auto events = events_from_json(get_json("/api/events"));
    for (std::size_t i = 0; i < msgs.size(); ++i) {
        EXPECT_EQ(msgs[i]["frame"], series[i].frame);
        EXPECT_EQ(msgs[i]["count"].get<double>(), series[i].count);
        EXPECT_EQ(msgs[i]["score"].get<double>(), series[i].score);
        bool in_event = false;
        for (const auto& e : events) in_event |= series[i].frame >= e.start_frame && series[i].frame <= e.end_frame;
        if (in_event) {
            EXPECT_TRUE(msgs[i]["event_open"].get<bool>()) << series[i].frame;
        }
        if (series[i].score < small_config().score_off) {
            EXPECT_FALSE(msgs[i]["event_open"].get<bool>());
        }
    }
}
