#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "retina/events.hpp"
#include "retina/rng.hpp"

using namespace retina;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    f << content;
}

EventStream random_stream(uint64_t seed, size_t n, int width = 640, int height = 480) {
    Rng rng(seed);
    EventStream s;
    s.width = width;
    s.height = height;
    int64_t t = 0;
    for (size_t i = 0; i < n; ++i) {
        t += static_cast<int64_t>(rng.below(300));
        s.events.push_back(Event{t, static_cast<int16_t>(rng.below(width)),
                                 static_cast<int16_t>(rng.below(height)),
                                 rng.uniform() < 0.5 ? Polarity::Off : Polarity::On});
    }
    return s;
}

}  // namespace

TEST_SUITE("events") {

TEST_CASE("csv row maps fields directly") {
    auto path = temp_path("ev_basic.csv");
    write_file(path, "t_us,x,y,p\n100,5,7,1\n");
    EventStream s = load_events_csv(path, 640, 480);
    REQUIRE(s.size() == 1);
    CHECK(s.events[0].t == 100);
    CHECK(s.events[0].x == 5);
    CHECK(s.events[0].y == 7);
    CHECK(s.events[0].polarity == Polarity::On);
}

TEST_CASE("empty file gives empty stream") {
    auto path = temp_path("ev_empty.csv");
    write_file(path, "");
    EventStream s = load_events_csv(path, 640, 480);
    CHECK(s.empty());
}

TEST_CASE("out-of-range and malformed rows are rejected") {
    auto path = temp_path("ev_bad.csv");
    write_file(path, "100,700,7,1\n");
    CHECK_THROWS_AS(load_events_csv(path, 640, 480), DataError);
    write_file(path, "100,5,500,1\n");
    CHECK_THROWS_AS(load_events_csv(path, 640, 480), DataError);
    write_file(path, "100,5,7,2\n");
    CHECK_THROWS_AS(load_events_csv(path, 640, 480), DataError);
    write_file(path, "100,5,7\n");
    CHECK_THROWS_AS(load_events_csv(path, 640, 480), DataError);
    write_file(path, "abc,5,7,1\n");
    CHECK_THROWS_AS(load_events_csv(path, 640, 480), DataError);
}

TEST_CASE("unsorted input gets a stable sort") {
    auto path = temp_path("ev_unsorted.csv");
    write_file(path, "200,1,1,0\n100,2,2,1\n200,3,3,0\n");
    EventStream s = load_events_csv(path, 640, 480);
    REQUIRE(s.size() == 3);
    CHECK(s.events[0].t == 100);
    CHECK(s.events[1].x == 1);  // stable: first 200 keeps file order
    CHECK(s.events[2].x == 3);
}

TEST_CASE("sensor_to_square boundary arithmetic") {
    Recording rec;
    rec.stream.width = 640;
    rec.stream.height = 480;
    rec.stream.events = {
        Event{0, 96, 0, Polarity::On},    // -> (0, 16)
        Event{1, 95, 10, Polarity::On},   // dropped
        Event{2, 608, 10, Polarity::On},  // dropped (keeps exactly 512 columns)
        Event{3, 607, 463, Polarity::Off} // -> (511, 479)
    };
    rec.labels = {PupilLabel{0, 300.0, 200.0}, PupilLabel{10, 400.0, 100.0}};
    Recording out = sensor_to_square(rec);
    CHECK(out.stream.width == 512);
    CHECK(out.stream.height == 512);
    REQUIRE(out.stream.size() == 2);
    CHECK(out.stream.events[0].x == 0);
    CHECK(out.stream.events[0].y == 16);
    CHECK(out.stream.events[1].x == 511);
    CHECK(out.stream.events[1].y == 479);
    CHECK(out.labels[0].x == doctest::Approx(204.0));
    CHECK(out.labels[0].y == doctest::Approx(216.0));

    rec.stream.width = 512;
    CHECK_THROWS_AS(sensor_to_square(rec), DataError);
}

TEST_CASE("sensor_to_square preserves order and range") {
    EventStream raw = random_stream(11, 5000);
    Recording rec{raw, {PupilLabel{0, 320, 240}, PupilLabel{1000, 320, 240}}};
    Recording out = sensor_to_square(rec);
    int64_t prev = -1;
    for (const Event& e : out.stream.events) {
        CHECK(e.t >= prev);
        prev = e.t;
        CHECK(e.x >= 0);
        CHECK(e.x <= 511);
        CHECK(e.y >= 0);
        CHECK(e.y <= 511);
    }
    EventStream pooled = sum_pool_events(out.stream, 8);
    for (const Event& e : pooled.events) {
        CHECK(e.x >= 0);
        CHECK(e.x <= 63);
        CHECK(e.y >= 0);
        CHECK(e.y <= 63);
    }
}

TEST_CASE("sum pooling divides coordinates") {
    EventStream s;
    s.width = 512;
    s.height = 512;
    s.events = {Event{0, 7, 0, Polarity::On}, Event{1, 8, 15, Polarity::Off}};
    EventStream out = sum_pool_events(s, 8);
    CHECK(out.width == 64);
    CHECK(out.events[0].x == 0);
    CHECK(out.events[0].y == 0);
    CHECK(out.events[1].x == 1);
    CHECK(out.events[1].y == 1);

    EventStream same = sum_pool_events(s, 1);
    CHECK(same.events[0].x == 7);
    CHECK(same.events[1].x == 8);

    s.width = 511;
    CHECK_THROWS_AS(sum_pool_events(s, 8), DataError);
}

TEST_CASE("csv and binary round-trips are the identity") {
    EventStream s = random_stream(22, 3000);
    auto csv = temp_path("ev_rt.csv");
    auto bin = temp_path("ev_rt.bin");
    save_events_csv(s, csv);
    save_events_bin(s, bin);
    EventStream rc = load_events_csv(csv, s.width, s.height);
    EventStream rb = load_events_bin(bin);
    for (EventStream* r : {&rc, &rb}) {
        REQUIRE(r->size() == s.size());
        CHECK(r->width == s.width);
        CHECK(r->height == s.height);
        for (size_t i = 0; i < s.size(); ++i) {
            CHECK(r->events[i].t == s.events[i].t);
            CHECK(r->events[i].x == s.events[i].x);
            CHECK(r->events[i].y == s.events[i].y);
            CHECK(r->events[i].polarity == s.events[i].polarity);
        }
    }
}

TEST_CASE("labels csv round-trip") {
    std::vector<PupilLabel> labels = {PupilLabel{0, 10.25, 20.5}, PupilLabel{30000, 11.0, 21.75}};
    auto path = temp_path("labels_rt.csv");
    save_labels_csv(labels, path);
    auto back = load_labels_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].x == doctest::Approx(10.25));
    CHECK(back[1].y == doctest::Approx(21.75));
    CHECK(back[1].t == 30000);
}

TEST_CASE("stream_stats on uniform gaps") {
    EventStream s;
    s.width = s.height = 64;
    s.events = {Event{0, 0, 0, Polarity::On}, Event{200, 1, 1, Polarity::On},
                Event{400, 2, 2, Polarity::On}};
    StatsReport r = stream_stats(s);
    CHECK(r.sampling_time.median == doctest::Approx(200));
    CHECK(r.sampling_time.mean == doctest::Approx(200));
    CHECK(r.sampling_time.stddev == doctest::Approx(0));
    CHECK(r.sampling_time.min == doctest::Approx(200));
    CHECK(r.sampling_time.max == doctest::Approx(200));
}

TEST_CASE("stream_stats counts events per timestamp") {
    EventStream s;
    s.width = s.height = 64;
    s.events = {Event{0, 0, 0, Polarity::On}, Event{0, 1, 0, Polarity::On},
                Event{0, 2, 0, Polarity::On}, Event{100, 3, 0, Polarity::On}};
    StatsReport r = stream_stats(s);
    CHECK(r.events_per_timestamp.min == doctest::Approx(1));
    CHECK(r.events_per_timestamp.max == doctest::Approx(3));

    EventStream empty;
    CHECK_THROWS_AS(stream_stats(empty), DataError);
}

TEST_CASE("stream_stats matches a brute-force oracle on random streams") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        EventStream s = random_stream(seed, 2000, 64, 64);
        StatsReport r = stream_stats(s);

        std::vector<double> gaps, counts;
        std::vector<int64_t> uniq;
        for (const Event& e : s.events) {
            if (uniq.empty() || uniq.back() != e.t) {
                uniq.push_back(e.t);
                counts.push_back(1);
            } else {
                counts.back() += 1;
            }
        }
        for (size_t i = 1; i < uniq.size(); ++i) {
            gaps.push_back(static_cast<double>(uniq[i] - uniq[i - 1]));
        }
        auto og = oracle::stats_bruteforce(gaps);
        auto oc = oracle::stats_bruteforce(counts);
        CHECK(r.sampling_time.median == doctest::Approx(og.median));
        CHECK(r.sampling_time.mean == doctest::Approx(og.mean));
        CHECK(r.sampling_time.stddev == doctest::Approx(og.stddev));
        CHECK(r.sampling_time.min == doctest::Approx(og.min));
        CHECK(r.sampling_time.max == doctest::Approx(og.max));
        CHECK(r.events_per_timestamp.median == doctest::Approx(oc.median));
        CHECK(r.events_per_timestamp.mean == doctest::Approx(oc.mean));
        CHECK(r.events_per_timestamp.stddev == doctest::Approx(oc.stddev));
    }
}

}  // TEST_SUITE
