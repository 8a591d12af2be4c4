#pragma once

#include <cstdint>

#include "retina/events.hpp"

namespace retina {
namespace synth {

enum class Trajectory { Circular, RandomWalk };

struct SynthConfig {
    int width{640};
    int height{480};
    int64_t duration_us{2'000'000};
    Trajectory trajectory{Trajectory::Circular};
    double speed{2.0};            // rad/s (circular) or px step scale per ms (walk)
    double orbit_radius{120.0};   // px, circular trajectory radius around frame center
    double pupil_radius{40.0};    // px
    double event_rate_on_ring{0.4};  // events per contour pixel per ms
    double noise_rate{20.0};         // background events per ms over the whole frame
    int64_t label_period_us{30'000};
    uint64_t rng_seed{7};
};

// Fixed-seed configuration used by the regression and acceptance suites.
SynthConfig golden_config();

// Analytic pupil-center trajectory at time t; labels lie on it exactly.
// For RandomWalk the path is piecewise linear between per-millisecond
// waypoints drawn from the seeded generator, so it is still an exact
// function of (config, t).
struct TrajectoryEval {
    double x;
    double y;
    double vx;  // px/s
    double vy;
};

// A moving dark-pupil contour: ON events on the leading edge, OFF events on
// the trailing edge, uniform background noise, labels every label_period.
Recording generate(const SynthConfig& cfg);

}  // namespace synth
}  // namespace retina
