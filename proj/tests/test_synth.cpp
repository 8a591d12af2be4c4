#include <doctest.h>

#include <cmath>

#include "retina/synth.hpp"

using namespace retina;

TEST_SUITE("synth") {

TEST_CASE("stationary pupil with no noise emits nothing") {
    synth::SynthConfig cfg;
    cfg.duration_us = 500'000;
    cfg.trajectory = synth::Trajectory::Circular;
    cfg.speed = 0.0;
    cfg.orbit_radius = 0.0;
    cfg.noise_rate = 0.0;
    Recording rec = synth::generate(cfg);
    CHECK(rec.stream.empty());
    CHECK(!rec.labels.empty());
}

TEST_CASE("same seed reproduces the recording bit for bit") {
    synth::SynthConfig cfg = synth::golden_config();
    cfg.duration_us = 400'000;
    Recording a = synth::generate(cfg);
    Recording b = synth::generate(cfg);
    REQUIRE(a.stream.size() == b.stream.size());
    for (size_t i = 0; i < a.stream.size(); ++i) {
        CHECK(a.stream.events[i].t == b.stream.events[i].t);
        CHECK(a.stream.events[i].x == b.stream.events[i].x);
        CHECK(a.stream.events[i].y == b.stream.events[i].y);
        CHECK(a.stream.events[i].polarity == b.stream.events[i].polarity);
    }
    CHECK(!a.stream.empty());
}

TEST_CASE("labels sit exactly on the analytic circular trajectory") {
    synth::SynthConfig cfg;
    cfg.duration_us = 1'000'000;
    cfg.trajectory = synth::Trajectory::Circular;
    cfg.speed = 2.0;
    cfg.orbit_radius = 100.0;
    Recording rec = synth::generate(cfg);
    double cx = cfg.width / 2.0, cy = cfg.height / 2.0;
    for (const PupilLabel& l : rec.labels) {
        double a = cfg.speed * static_cast<double>(l.t) * 1e-6;
        CHECK(l.x == doctest::Approx(cx + cfg.orbit_radius * std::cos(a)));
        CHECK(l.y == doctest::Approx(cy + cfg.orbit_radius * std::sin(a)));
    }
}

TEST_CASE("events are time-ordered and inside the frame") {
    synth::SynthConfig cfg = synth::golden_config();
    cfg.duration_us = 600'000;
    Recording rec = synth::generate(cfg);
    int64_t prev = -1;
    for (const Event& e : rec.stream.events) {
        CHECK(e.t >= prev);
        prev = e.t;
        CHECK(e.x >= 0);
        CHECK(e.x < cfg.width);
        CHECK(e.y >= 0);
        CHECK(e.y < cfg.height);
        CHECK(e.t < cfg.duration_us);
    }
    int64_t prev_label = -1;
    for (const PupilLabel& l : rec.labels) {
        CHECK(l.t > prev_label);
        prev_label = l.t;
    }
}

TEST_CASE("event count scales linearly with duration") {
    synth::SynthConfig cfg = synth::golden_config();
    cfg.duration_us = 500'000;
    double n1 = 0, n2 = 0;
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        cfg.rng_seed = seed;
        cfg.duration_us = 500'000;
        n1 += static_cast<double>(synth::generate(cfg).stream.size());
        cfg.duration_us = 1'000'000;
        n2 += static_cast<double>(synth::generate(cfg).stream.size());
    }
    CHECK(n2 / n1 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("random walk stays determinate and in bounds") {
    synth::SynthConfig cfg;
    cfg.trajectory = synth::Trajectory::RandomWalk;
    cfg.duration_us = 500'000;
    cfg.speed = 3.0;
    cfg.rng_seed = 99;
    Recording a = synth::generate(cfg);
    Recording b = synth::generate(cfg);
    CHECK(a.stream.size() == b.stream.size());
    for (const PupilLabel& l : a.labels) {
        CHECK(l.x >= 0);
        CHECK(l.x < cfg.width);
        CHECK(l.y >= 0);
        CHECK(l.y < cfg.height);
    }
}

}  // TEST_SUITE
