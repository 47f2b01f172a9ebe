#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "doctest.h"
#include "traffic/data.hpp"
#include "traffic/errors.hpp"
#include "traffic/timeutil.hpp"

using namespace traffic;

namespace {

template <typename Fn>
std::string error_text(Fn&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("minute timestamps parse, format and round-trip") {
    CHECK(parse_minutes("1970-01-01T00:00") == 0);
    CHECK(parse_minutes("1970-01-01T00:01") == 1);
    CHECK(parse_minutes("1970-01-02T00:00") == 1440);
    CHECK(parse_minutes("2026-01-06T00:00") - parse_minutes("2026-01-05T00:00") == 1440);
    CHECK(parse_minutes("2024-02-29T12:30") - parse_minutes("2024-02-29T12:00") == 30);

    for (const char* s : {"1970-01-01T00:00", "2026-01-05T00:00", "1999-12-31T23:59",
                          "2024-02-29T07:45", "2000-02-29T00:00"}) {
        CHECK(format_minutes(parse_minutes(s)) == s);
    }

    CHECK(weekday_of(0) == 3);                                 // 1970-01-01 was a Thursday
    CHECK(weekday_of(parse_minutes("2026-01-05T00:00")) == 0);  // Monday
    CHECK(weekday_of(parse_minutes("2026-01-10T09:30")) == 5);  // Saturday
    CHECK(weekday_of(parse_minutes("2026-01-11T23:59")) == 6);  // Sunday
    CHECK(minute_of_day(parse_minutes("2026-01-05T13:05")) == 785);
    CHECK(minute_of_day(parse_minutes("2026-01-05T00:00")) == 0);
}

TEST_CASE("malformed timestamps are rejected") {
    for (const char* s : {"2026-1-5T00:00", "2026-01-05 00:00", "2026-01-05T00:00:00",
                          "2023-02-29T00:00", "2100-02-29T00:00", "2026-13-01T00:00",
                          "2026-00-10T00:00", "2026-04-31T00:00", "2026-01-05T24:00",
                          "2026-01-05T12:60", "garbage", ""}) {
        CHECK_THROWS_AS(parse_minutes(s), ValidationError);
    }
    CHECK_NOTHROW(parse_minutes("2024-02-29T00:00"));
    CHECK_NOTHROW(parse_minutes("2000-02-29T00:00"));
}

TEST_CASE("synthetic generation is deterministic per seed") {
    SynthConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 3;
    cfg.extra_edges = 3;
    cfg.days = 2;
    cfg.step_minutes = 30;
    cfg.seed = 42;

    auto [g1, d1] = generate_synthetic(cfg);
    auto [g2, d2] = generate_synthetic(cfg);
    CHECK(g1.fingerprint() == g2.fingerprint());
    CHECK(d1.values == d2.values);
    CHECK(d1.externals == d2.externals);
    CHECK(d1.steps == cfg.total_steps());
    CHECK(d1.nodes == 6);
    CHECK(d1.values.shape() == Shape{d1.steps, d1.nodes, Dataset::kFeatures});
    CHECK(d1.externals.shape() == Shape{d1.steps, Dataset::kExternals});
    CHECK(sum(d1.imputed) == 0.0);
    CHECK(d1.collision_warnings == 0);

    SynthConfig other = cfg;
    other.seed = 43;
    auto [g3, d3] = generate_synthetic(other);
    CHECK_FALSE(d1.values == d3.values);
}

TEST_CASE("noise-free constant demand produces exact flow, speed and occupancy") {
    SynthConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 2;
    cfg.extra_edges = 0;
    cfg.days = 5;  // Monday..Friday, no weekend discount in play
    cfg.step_minutes = 60;
    cfg.base_flow_min = cfg.base_flow_max = 100.0;
    cfg.amplitude_min = cfg.amplitude_max = 0.0;
    cfg.noise_sigma = 0.0;
    cfg.accident_rate = 0.0;
    cfg.rain_probability = 0.0;

    auto [g, ds] = generate_synthetic(cfg);
    const double speed = 60.0 * (1.0 - 0.6 * 0.5);  // flow/capacity = 0.5
    const double occ = 100.0 / (speed * 8.0);
    for (std::size_t t = 0; t < ds.steps; ++t)
        for (std::size_t i = 0; i < ds.nodes; ++i) {
            CHECK(ds.values(t, i, 0) == doctest::Approx(100.0).epsilon(1e-12));
            CHECK(ds.values(t, i, 1) == doctest::Approx(speed).epsilon(1e-12));
            CHECK(ds.values(t, i, 2) == doctest::Approx(occ).epsilon(1e-12));
        }
}

TEST_CASE("noisy flow averages back to the configured base level") {
    SynthConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 2;
    cfg.extra_edges = 0;
    cfg.days = 30;
    cfg.step_minutes = 5;
    cfg.base_flow_min = cfg.base_flow_max = 100.0;
    cfg.amplitude_min = cfg.amplitude_max = 0.0;
    cfg.weekend_scale = 1.0;
    cfg.noise_sigma = 5.0;
    cfg.accident_rate = 0.0;
    cfg.rain_probability = 0.0;
    cfg.seed = 3;

    auto [g, ds] = generate_synthetic(cfg);
    for (std::size_t i = 0; i < ds.nodes; ++i) {
        double m = 0.0;
        for (std::size_t t = 0; t < ds.steps; ++t) m += ds.values(t, i, 0);
        m /= static_cast<double>(ds.steps);
        CHECK(std::abs(m - 100.0) < 2.0);
    }
}

TEST_CASE("weekends and holidays scale demand") {
    SynthConfig cfg;
    cfg.grid_rows = 1;
    cfg.grid_cols = 3;
    cfg.extra_edges = 0;
    cfg.days = 7;  // starts Monday, so days 5 and 6 are the weekend
    cfg.step_minutes = 60;
    cfg.base_flow_min = cfg.base_flow_max = 100.0;
    cfg.amplitude_min = cfg.amplitude_max = 0.0;
    cfg.weekend_scale = 0.5;
    cfg.holiday_scale = 0.25;
    cfg.holidays = {2};
    cfg.noise_sigma = 0.0;
    cfg.accident_rate = 0.0;
    cfg.rain_probability = 0.0;

    auto [g, ds] = generate_synthetic(cfg);
    const std::size_t spd = cfg.steps_per_day();
    for (std::size_t i = 0; i < ds.nodes; ++i) {
        const double monday = ds.values(0 * spd, i, 0);
        CHECK(monday == doctest::Approx(100.0).epsilon(1e-9));
        CHECK(ds.values(2 * spd, i, 0) == doctest::Approx(0.25 * monday).epsilon(1e-9));
        CHECK(ds.values(5 * spd, i, 0) == doctest::Approx(0.5 * monday).epsilon(1e-9));
        CHECK(ds.values(6 * spd, i, 0) == doctest::Approx(0.5 * monday).epsilon(1e-9));
        CHECK(ds.values(3 * spd, i, 0) == doctest::Approx(monday).epsilon(1e-9));
    }
    for (std::size_t t = 0; t < ds.steps; ++t) {
        const double want = t / spd == 2 ? 1.0 : 0.0;
        CHECK(ds.externals(t, 3) == want);
    }
}

TEST_CASE("external columns stay internally consistent") {
    SynthConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 2;
    cfg.days = 6;
    cfg.step_minutes = 15;
    cfg.rain_probability = 1.0;
    cfg.accident_rate = 0.5;
    cfg.seed = 11;

    auto [g, ds] = generate_synthetic(cfg);
    bool saw_rain = false, saw_dry = false, saw_incident = false;
    for (std::size_t t = 0; t < ds.steps; ++t) {
        const double mod = static_cast<double>(minute_of_day(ds.minutes_at(t)));
        const double temp = 15.0 + 8.0 * std::sin(2.0 * 3.14159265358979323846 * (mod - 540.0) / 1440.0);
        CHECK(ds.externals(t, 0) == doctest::Approx(temp).epsilon(1e-12));
        const double rain = ds.externals(t, 1);
        CHECK(rain >= 0.0);
        const double vis = ds.externals(t, 2);
        if (rain > 0.0) {
            saw_rain = true;
            CHECK(vis == doctest::Approx(std::max(0.5, 10.0 - 0.8 * rain)).epsilon(1e-12));
        } else {
            saw_dry = true;
            CHECK(vis == 10.0);
        }
        CHECK((ds.externals(t, 3) == 0.0 || ds.externals(t, 3) == 1.0));
        CHECK((ds.externals(t, 4) == 0.0 || ds.externals(t, 4) == 1.0));
        if (ds.externals(t, 4) == 1.0) saw_incident = true;
        for (std::size_t i = 0; i < ds.nodes; ++i) {
            CHECK(ds.values(t, i, 0) >= 0.0);
            CHECK(ds.values(t, i, 1) >= 0.0);
            CHECK(ds.values(t, i, 2) >= 0.0);
            CHECK(ds.values(t, i, 2) <= 1.0);
        }
    }
    CHECK(saw_rain);
    CHECK(saw_dry);
    CHECK(saw_incident);
}

TEST_CASE("generator configuration is validated") {
    SynthConfig ok;
    CHECK_NOTHROW(ok.validate());

    auto broken = [](auto mutate) {
        SynthConfig c;
        mutate(c);
        return c;
    };
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.grid_rows = 0; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.days = 0; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.step_minutes = 7; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.step_minutes = 0; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.base_flow_max = c.base_flow_min - 1; }).validate(),
                    ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.noise_sigma = -1; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.accident_rate = 1.5; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.rain_probability = -0.1; }).validate(),
                    ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.accident_severity = 2.0; }).validate(),
                    ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.holidays = {99}; }).validate(), ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.start = "not-a-time"; }).validate(),
                    ValidationError);
    CHECK_THROWS_AS(broken([](SynthConfig& c) { c.capacity = 0; }).validate(), ValidationError);
}

TEST_CASE("csv ingestion reads well-formed corpora") {
    write_file("ing_graph.csv", "src,dst\n0,1\n1,0\n1,2\n");
    write_file("ing_traffic.csv",
               "timestamp,node_id,flow,speed,occupancy\n"
               "2026-01-05T00:00,0,10,50,0.1\n"
               "2026-01-05T00:00,1,11,51,0.11\n"
               "2026-01-05T00:05,0,12,,0.12\n"
               "2026-01-05T00:05,1,,,\n"
               "2026-01-05T00:10,0,14,54,0.14\n");
    write_file("ing_external.csv",
               "timestamp,temperature,rainfall,visibility,is_holiday,incident\n"
               "2026-01-05T00:00,20,0,10,0,0\n"
               "2026-01-05T00:10,21.5,3,7.6,0,1\n");

    RawCorpus rc = ingest_csv("ing_traffic.csv", "ing_external.csv", "ing_graph.csv");
    CHECK(rc.graph.n() == 3);
    REQUIRE(rc.traffic.size() == 5);
    CHECK(rc.traffic[0].minutes == parse_minutes("2026-01-05T00:00"));
    CHECK(rc.traffic[0].node == 0);
    CHECK(rc.traffic[0].flow == 10.0);
    CHECK(rc.traffic[0].speed == 50.0);
    CHECK(rc.traffic[0].occupancy == 0.1);
    CHECK(rc.traffic[2].speed == std::nullopt);
    CHECK(rc.traffic[3].flow == std::nullopt);
    CHECK(rc.traffic[3].speed == std::nullopt);
    CHECK(rc.traffic[3].occupancy == std::nullopt);
    REQUIRE(rc.externals.size() == 2);
    CHECK(rc.externals[1].values[0] == 21.5);
    CHECK(rc.externals[1].values[4] == 1.0);

    std::remove("ing_graph.csv");
    std::remove("ing_traffic.csv");
    std::remove("ing_external.csv");
}

TEST_CASE("csv ingestion rejects malformed input with line numbers") {
    write_file("bad_graph.csv", "src,dst\n0,1\n1,0\n");
    const std::string header = "timestamp,node_id,flow,speed,occupancy\n";
    const std::string ext_header = "timestamp,temperature,rainfall,visibility,is_holiday,incident\n";
    write_file("ok_external.csv", ext_header + "2026-01-05T00:00,20,0,10,0,0\n");

    auto traffic_error = [&](const std::string& body) {
        write_file("bad_traffic.csv", body);
        return error_text(
            [] { ingest_csv("bad_traffic.csv", "ok_external.csv", "bad_graph.csv"); });
    };

    CHECK(contains(traffic_error("time,node,f,s,o\n"), ":1:"));
    CHECK(contains(traffic_error(header + "2026-01-05T00:00,0,1,2\n"), "expected 5 fields, got 4"));
    CHECK(contains(traffic_error(header + "2026-01-05T00:00,0,1,2,0.5\nhello,0,1,2,0.5\n"), ":3:"));
    CHECK(contains(traffic_error(header + "2026-01-05T00:00,7,1,2,0.5\n"), "node_id 7"));
    CHECK(contains(traffic_error(header + "2026-01-05T00:00,0,-1,2,0.5\n"), "flow"));
    CHECK(contains(traffic_error(header + "2026-01-05T00:00,0,1,-2,0.5\n"), "speed"));
    CHECK(contains(traffic_error(header + "2026-01-05T00:00,0,1,2,1.5\n"), "occupancy"));
    CHECK(contains(traffic_error(header + "2026-01-05T00:00,0,abc,2,0.5\n"), "not a number"));
    CHECK(contains(traffic_error(header + "2026-01-05T00:00,0,1,2,0.5\n2026-01-05T00:00,0,3,4,0.6\n"),
                   "duplicate record"));

    write_file("ok_traffic.csv", header + "2026-01-05T00:00,0,1,2,0.5\n");
    auto external_error = [&](const std::string& body) {
        write_file("bad_external.csv", body);
        return error_text(
            [] { ingest_csv("ok_traffic.csv", "bad_external.csv", "bad_graph.csv"); });
    };
    CHECK(contains(external_error("timestamp,temp\n"), ":1:"));
    CHECK(contains(external_error(ext_header + "2026-01-05T00:00,20,0,10,0\n"),
                   "expected 6 fields, got 5"));
    CHECK(contains(external_error(ext_header + "2026-01-05T00:00,x,0,10,0,0\n"), "temperature"));
    CHECK(contains(
        external_error(ext_header + "2026-01-05T00:00,20,0,10,0,0\n2026-01-05T00:00,21,0,10,0,0\n"),
        "duplicate external record"));

    CHECK_THROWS_AS(ingest_csv("no_such.csv", "ok_external.csv", "bad_graph.csv"), IoError);
    CHECK_THROWS_AS(ingest_csv("ok_traffic.csv", "no_such.csv", "bad_graph.csv"), IoError);

    for (const char* p : {"bad_graph.csv", "bad_traffic.csv", "bad_external.csv", "ok_traffic.csv",
                          "ok_external.csv"})
        std::remove(p);
}

namespace {

TrafficRecord rec(std::int64_t minutes, std::size_t node, std::optional<double> flow,
                  std::optional<double> speed = std::nullopt,
                  std::optional<double> occ = std::nullopt) {
    TrafficRecord r;
    r.minutes = minutes;
    r.node = node;
    r.flow = flow;
    r.speed = speed;
    r.occupancy = occ;
    return r;
}

RawCorpus single_node_corpus(std::vector<TrafficRecord> traffic) {
    RawCorpus rc;
    rc.graph = RoadGraph::build(1, {});
    rc.traffic = std::move(traffic);
    return rc;
}

}  // namespace

TEST_CASE("alignment snaps to the nearest grid step") {
    // 7 rounds down to 5, 8 rounds up to 10.
    Dataset ds = align_and_impute(single_node_corpus({rec(7, 0, 1.0), rec(8, 0, 2.0)}), 5);
    CHECK(ds.start_minutes == 5);
    CHECK(ds.steps == 2);
    CHECK(ds.values(0, 0, 0) == 1.0);
    CHECK(ds.values(1, 0, 0) == 2.0);
    CHECK(ds.collision_warnings == 0);

    // 4 and 6 both snap to 5; the later record wins and a collision is counted.
    Dataset coll = align_and_impute(single_node_corpus({rec(4, 0, 1.0), rec(6, 0, 2.0)}), 5);
    CHECK(coll.steps == 1);
    CHECK(coll.values(0, 0, 0) == 2.0);
    CHECK(coll.collision_warnings == 1);
    CHECK(coll.imputed(0, 0, 0) == 0.0);
}

TEST_CASE("short gaps interpolate linearly, long gaps carry forward") {
    Dataset one = align_and_impute(single_node_corpus({rec(0, 0, 10.0), rec(10, 0, 20.0)}), 5);
    CHECK(one.steps == 3);
    CHECK(one.values(1, 0, 0) == doctest::Approx(15.0).epsilon(1e-12));
    CHECK(one.imputed(0, 0, 0) == 0.0);
    CHECK(one.imputed(1, 0, 0) == 1.0);
    CHECK(one.imputed(2, 0, 0) == 0.0);

    Dataset three = align_and_impute(single_node_corpus({rec(0, 0, 10.0), rec(20, 0, 30.0)}), 5);
    CHECK(three.steps == 5);
    CHECK(three.values(1, 0, 0) == doctest::Approx(15.0).epsilon(1e-12));
    CHECK(three.values(2, 0, 0) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(three.values(3, 0, 0) == doctest::Approx(25.0).epsilon(1e-12));

    Dataset four = align_and_impute(single_node_corpus({rec(0, 0, 10.0), rec(25, 0, 70.0)}), 5);
    CHECK(four.steps == 6);
    for (std::size_t t = 1; t <= 4; ++t) {
        CHECK(four.values(t, 0, 0) == 10.0);
        CHECK(four.imputed(t, 0, 0) == 1.0);
    }
    CHECK(four.values(5, 0, 0) == 70.0);
}

TEST_CASE("leading gaps copy backwards and missing columns stay zero") {
    RawCorpus rc = single_node_corpus({rec(0, 0, std::nullopt, 50.0), rec(10, 0, 20.0, 52.0)});
    Dataset ds = align_and_impute(rc, 5);
    CHECK(ds.steps == 3);
    // flow observed only at the last cell: leading cells are back-filled copies
    CHECK(ds.values(0, 0, 0) == 20.0);
    CHECK(ds.values(1, 0, 0) == 20.0);
    CHECK(ds.imputed(0, 0, 0) == 1.0);
    CHECK(ds.imputed(1, 0, 0) == 1.0);
    CHECK(ds.imputed(2, 0, 0) == 0.0);
    // speed observed at both ends: the middle interpolates
    CHECK(ds.values(1, 0, 1) == doctest::Approx(51.0).epsilon(1e-12));
    // occupancy never observed: zeros, fully imputed
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(ds.values(t, 0, 2) == 0.0);
        CHECK(ds.imputed(t, 0, 2) == 1.0);
    }
    // trailing gap carries the last observation forward
    Dataset trail = align_and_impute(
        single_node_corpus({rec(0, 0, 10.0, 40.0), rec(10, 0, std::nullopt, 44.0)}), 5);
    CHECK(trail.values(2, 0, 0) == 10.0);
    CHECK(trail.imputed(2, 0, 0) == 1.0);
    CHECK(trail.values(1, 0, 1) == doctest::Approx(42.0).epsilon(1e-12));
}

TEST_CASE("external records align onto the traffic grid") {
    RawCorpus rc = single_node_corpus({rec(0, 0, 1.0), rec(10, 0, 2.0)});
    ExternalRecord e0;
    e0.minutes = 0;
    e0.values = {20.0, 0.0, 10.0, 0.0, 0.0};
    ExternalRecord far;
    far.minutes = 100;  // beyond the traffic span: dropped
    far.values = {99.0, 9.0, 9.0, 1.0, 1.0};
    rc.externals = {e0, far};

    Dataset ds = align_and_impute(rc, 5);
    CHECK(ds.steps == 3);
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(ds.externals(t, 0) == 20.0);  // forward-filled
        CHECK(ds.externals(t, 2) == 10.0);
    }
    CHECK(ds.collision_warnings == 0);

    // two external records snapping onto the same cell count one collision per field
    ExternalRecord e1 = e0;
    e1.minutes = 4;
    ExternalRecord e2 = e0;
    e2.minutes = 6;
    e2.values = {21.0, 1.0, 9.0, 0.0, 0.0};
    rc.externals = {e1, e2};
    Dataset coll = align_and_impute(rc, 5);
    CHECK(coll.collision_warnings == Dataset::kExternals);
    CHECK(coll.externals(1, 0) == 21.0);

    CHECK_THROWS_AS(align_and_impute(single_node_corpus({}), 5), ValidationError);
    CHECK_THROWS_AS(align_and_impute(rc, 0), ValidationError);
}

namespace {

Dataset tiny_dataset() {
    Dataset ds;
    ds.start_minutes = 0;
    ds.step_minutes = 5;
    ds.steps = 4;
    ds.nodes = 1;
    ds.values = Tensor(Shape{4, 1, Dataset::kFeatures});
    ds.externals = Tensor(Shape{4, Dataset::kExternals});
    ds.imputed = Tensor(Shape{4, 1, Dataset::kFeatures});
    const double flow[4] = {0.0, 2.0, 4.0, 6.0};
    const double occ[4] = {0.0, 1.0, 0.0, 1.0};
    for (std::size_t t = 0; t < 4; ++t) {
        ds.values(t, 0, 0) = flow[t];
        ds.values(t, 0, 1) = 5.0;
        ds.values(t, 0, 2) = occ[t];
    }
    const double temp[4] = {10.0, 14.0, 100.0, 100.0};
    const double vis[4] = {1.0, 2.0, 3.0, 4.0};
    const double hol[4] = {0.0, 1.0, 0.0, 1.0};
    for (std::size_t t = 0; t < 4; ++t) {
        ds.externals(t, 0) = temp[t];
        ds.externals(t, 1) = 0.0;
        ds.externals(t, 2) = vis[t];
        ds.externals(t, 3) = hol[t];
        ds.externals(t, 4) = hol[t];
    }
    return ds;
}

}  // namespace

TEST_CASE("normalization uses training statistics only") {
    Dataset ds = tiny_dataset();
    auto [out, st] = normalize(ds, 0, 2);

    // flow: train mean 1, std 1
    CHECK(st.mean(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(st.stdev(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.values(0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out.values(1, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.values(2, 0, 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(out.values(3, 0, 0) == doctest::Approx(5.0).epsilon(1e-12));

    // constant speed: floored std, normalized exactly to zero
    CHECK(st.stdev(0, 1) == 1e-6);
    for (std::size_t t = 0; t < 4; ++t) CHECK(out.values(t, 0, 1) == 0.0);

    // temperature: train mean 12, std 2
    CHECK_FALSE(st.ext_is_flag[0]);
    CHECK(out.externals(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out.externals(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.externals(2, 0) == doctest::Approx(44.0).epsilon(1e-12));

    // visibility: train {1,2} -> mean 1.5, std 0.5
    CHECK_FALSE(st.ext_is_flag[2]);
    CHECK(out.externals(3, 2) == doctest::Approx(5.0).epsilon(1e-12));

    // indicator columns pass through untouched
    CHECK(st.ext_is_flag[1]);
    CHECK(st.ext_is_flag[3]);
    CHECK(st.ext_is_flag[4]);
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(out.externals(t, 3) == ds.externals(t, 3));
        CHECK(out.externals(t, 4) == ds.externals(t, 4));
    }

    // occupancy looks binary in train range, but it is a value column and is
    // z-scored regardless (flag detection applies to externals only)
    CHECK(out.values(0, 0, 2) != ds.values(0, 0, 2));

    // round trip
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t f = 0; f < Dataset::kFeatures; ++f)
            CHECK(st.denorm(out.values(t, 0, f), 0, f) ==
                  doctest::Approx(ds.values(t, 0, f)).epsilon(1e-10));

    // statistics ignore everything outside the training range
    Dataset poked = tiny_dataset();
    poked.values(3, 0, 0) = 999.0;
    auto [out2, st2] = normalize(poked, 0, 2);
    CHECK(st2.mean == st.mean);
    CHECK(st2.stdev == st.stdev);

    CHECK_THROWS_AS(normalize(ds, 2, 2), ValidationError);
    CHECK_THROWS_AS(normalize(ds, 0, 5), ValidationError);
    CHECK_THROWS_AS(normalize(ds, 3, 2), ValidationError);
}

TEST_CASE("stored statistics reapply bitwise and reject shape mismatches") {
    Dataset ds = tiny_dataset();
    auto [out, st] = normalize(ds, 0, 2);

    Dataset again = apply_norm(ds, st);
    CHECK(again.values == out.values);
    CHECK(again.externals == out.externals);

    NormStats bad = st;
    bad.mean = Tensor(Shape{3, Dataset::kFeatures});
    bad.stdev = Tensor::full(Shape{3, Dataset::kFeatures}, 1.0);
    CHECK_THROWS_AS(apply_norm(ds, bad), ShapeError);
}

namespace {

Dataset window_dataset() {
    Dataset ds;
    ds.start_minutes = 0;
    ds.step_minutes = 5;
    ds.steps = 10;
    ds.nodes = 2;
    ds.values = Tensor(Shape{10, 2, Dataset::kFeatures});
    ds.externals = Tensor(Shape{10, Dataset::kExternals});
    ds.imputed = Tensor(Shape{10, 2, Dataset::kFeatures});
    for (std::size_t t = 0; t < 10; ++t) {
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t f = 0; f < Dataset::kFeatures; ++f)
                ds.values(t, i, f) = static_cast<double>(100 * t + 10 * i + f);
        for (std::size_t k = 0; k < Dataset::kExternals; ++k)
            ds.externals(t, k) = static_cast<double>(1000 * k + t);
    }
    ds.imputed(7, 1, 0) = 1.0;
    return ds;
}

}  // namespace

TEST_CASE("windowing slices inputs, targets and observation weights") {
    Dataset ds = window_dataset();
    auto ws = make_windows(ds, 4, 2, 1, 1, 0, 10);
    REQUIRE(ws.size() == 5);
    for (std::size_t k = 0; k < ws.size(); ++k) {
        const Window& w = ws[k];
        CHECK(w.start == k);
        CHECK(w.x.shape() == Shape{4, 2, 3});
        CHECK(w.z.shape() == Shape{4, 5});
        CHECK(w.y.shape() == Shape{2, 2, 1});
        CHECK(w.w.shape() == Shape{2, 2, 1});
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t i = 0; i < 2; ++i)
                for (std::size_t f = 0; f < 3; ++f)
                    CHECK(w.x(t, i, f) == ds.values(k + t, i, f));
            for (std::size_t m = 0; m < 5; ++m) CHECK(w.z(t, m) == ds.externals(k + t, m));
        }
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t i = 0; i < 2; ++i) {
                CHECK(w.y(h, i, 0) == ds.values(k + 4 + h, i, 0));
                const bool imputed = (k + 4 + h == 7) && i == 1;
                CHECK(w.w(h, i, 0) == (imputed ? 0.0 : 1.0));
            }
    }

    CHECK(make_windows(ds, 4, 2, 1, 1, 0, 6).size() == 1);
    CHECK(make_windows(ds, 4, 2, 1, 2, 0, 10).size() == 3);
    CHECK(make_windows(ds, 4, 2, 1, 2, 0, 10)[2].start == 4);
    CHECK(make_windows(ds, 4, 2, 1, 1, 2, 10).size() == 3);
    CHECK(make_windows(ds, 4, 2, 1, 1, 2, 10)[0].start == 2);
    CHECK(make_windows(ds, 8, 2, 1, 1, 0, 9).empty());

    auto wide = make_windows(ds, 4, 2, 3, 1, 0, 10);
    CHECK(wide[0].y.shape() == Shape{2, 2, 3});
    CHECK(wide[0].y(1, 1, 2) == ds.values(5, 1, 2));

    CHECK_THROWS_AS(make_windows(ds, 0, 2, 1, 1, 0, 10), ValidationError);
    CHECK_THROWS_AS(make_windows(ds, 4, 0, 1, 1, 0, 10), ValidationError);
    CHECK_THROWS_AS(make_windows(ds, 4, 2, 0, 1, 0, 10), ValidationError);
    CHECK_THROWS_AS(make_windows(ds, 4, 2, 4, 1, 0, 10), ValidationError);
    CHECK_THROWS_AS(make_windows(ds, 4, 2, 1, 0, 0, 10), ValidationError);
    CHECK_THROWS_AS(make_windows(ds, 4, 2, 1, 1, 0, 11), ValidationError);
    CHECK_THROWS_AS(make_windows(ds, 4, 2, 1, 1, 6, 2), ValidationError);
}

TEST_CASE("chronological splits use floor arithmetic and reject empties") {
    SplitRanges s = chronological_split(10, 0.7, 0.1, 0.2);
    CHECK(s.train_hi == 7);
    CHECK(s.val_hi == 8);
    CHECK(s.steps == 10);

    SplitRanges big = chronological_split(100, 0.6, 0.2, 0.2);
    CHECK(big.train_hi == 60);
    CHECK(big.val_hi == 80);

    CHECK_THROWS_AS(chronological_split(1, 0.7, 0.1, 0.2), ValidationError);
    CHECK_THROWS_AS(chronological_split(10, 1.0, 0.0, 0.0), ValidationError);
    CHECK_THROWS_AS(chronological_split(10, 0.5, 0.2, 0.2), ValidationError);
    CHECK_THROWS_AS(chronological_split(10, -0.1, 0.6, 0.5), ValidationError);
    CHECK_THROWS_AS(chronological_split(0, 0.7, 0.1, 0.2), ValidationError);
}

TEST_CASE("doubles print in shortest round-trip form") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(0.0) == "0");
    CHECK(format_double(42.0) == "42");
    CHECK(format_double(-2.5) == "-2.5");

    auto reparse = [](const std::string& s) {
        double v = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), v);
        return v;
    };
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> dist(-1e6, 1e6);
    for (int k = 0; k < 200; ++k) {
        const double v = dist(rng);
        CHECK(reparse(format_double(v)) == v);
    }
    CHECK(reparse(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(reparse(format_double(1e300)) == 1e300);
    CHECK(reparse(format_double(-2.5e-7)) == -2.5e-7);
}

TEST_CASE("generated corpora survive the full disk round-trip exactly") {
    SynthConfig cfg;
    cfg.grid_rows = 2;
    cfg.grid_cols = 2;
    cfg.extra_edges = 1;
    cfg.days = 2;
    cfg.step_minutes = 60;
    cfg.rain_probability = 0.5;
    cfg.accident_rate = 0.1;
    cfg.seed = 7;

    auto [g, ds] = generate_synthetic(cfg);
    save_graph_csv(g, "rt_graph.csv");
    write_traffic_csv(ds, "rt_traffic.csv");
    write_external_csv(ds, "rt_external.csv");

    RawCorpus rc = ingest_csv("rt_traffic.csv", "rt_external.csv", "rt_graph.csv");
    CHECK(rc.graph.fingerprint() == g.fingerprint());
    Dataset back = align_and_impute(rc, cfg.step_minutes);
    CHECK(back.start_minutes == ds.start_minutes);
    CHECK(back.steps == ds.steps);
    CHECK(back.nodes == ds.nodes);
    CHECK(back.values == ds.values);
    CHECK(back.externals == ds.externals);
    CHECK(sum(back.imputed) == 0.0);
    CHECK(back.collision_warnings == 0);

    std::remove("rt_graph.csv");
    std::remove("rt_traffic.csv");
    std::remove("rt_external.csv");
}
