#include "retina/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "retina/rng.hpp"

namespace retina {
namespace synth {

namespace {

struct Walk {
    // Per-millisecond waypoints; position at t interpolates linearly.
    std::vector<double> xs, ys;
    int64_t step_us;
};

Walk build_walk(const SynthConfig& cfg) {
    Walk w;
    w.step_us = 1000;
    Rng rng(cfg.rng_seed ^ 0x77616c6bull);  // decorrelate from event noise
    double cx = cfg.width / 2.0;
    double cy = cfg.height / 2.0;
    double x = cx, y = cy;
    int64_t steps = cfg.duration_us / w.step_us + 2;
    double margin = cfg.pupil_radius + 8.0;
    for (int64_t i = 0; i <= steps; ++i) {
        w.xs.push_back(x);
        w.ys.push_back(y);
        // Smooth-ish drift with occasional bursts, to mimic saccades.
        double burst = rng.uniform() < 0.02 ? 8.0 : 1.0;
        x += cfg.speed * burst * (2.0 * rng.uniform() - 1.0);
        y += cfg.speed * burst * (2.0 * rng.uniform() - 1.0);
        x = std::clamp(x, margin, cfg.width - margin);
        y = std::clamp(y, margin, cfg.height - margin);
    }
    return w;
}

TrajectoryEval eval_circular(const SynthConfig& cfg, int64_t t_us) {
    double t = static_cast<double>(t_us) * 1e-6;
    double cx = cfg.width / 2.0;
    double cy = cfg.height / 2.0;
    double a = cfg.speed * t;
    return TrajectoryEval{cx + cfg.orbit_radius * std::cos(a),
                          cy + cfg.orbit_radius * std::sin(a),
                          -cfg.orbit_radius * cfg.speed * std::sin(a),
                          cfg.orbit_radius * cfg.speed * std::cos(a)};
}

TrajectoryEval eval_walk(const Walk& w, int64_t t_us) {
    int64_t i = t_us / w.step_us;
    if (i < 0) i = 0;
    if (i + 1 >= static_cast<int64_t>(w.xs.size())) i = static_cast<int64_t>(w.xs.size()) - 2;
    double frac = static_cast<double>(t_us - i * w.step_us) / static_cast<double>(w.step_us);
    double x = w.xs[i] + frac * (w.xs[i + 1] - w.xs[i]);
    double y = w.ys[i] + frac * (w.ys[i + 1] - w.ys[i]);
    double vx = (w.xs[i + 1] - w.xs[i]) / (w.step_us * 1e-6);
    double vy = (w.ys[i + 1] - w.ys[i]) / (w.step_us * 1e-6);
    return TrajectoryEval{x, y, vx, vy};
}

}  // namespace

SynthConfig golden_config() {
    SynthConfig cfg;
    cfg.duration_us = 4'000'000;
    cfg.trajectory = Trajectory::Circular;
    cfg.speed = 2.4;           // rad/s: ~1.5 orbits over the recording
    cfg.orbit_radius = 96.0;
    cfg.pupil_radius = 44.0;
    cfg.event_rate_on_ring = 0.5;
    cfg.noise_rate = 30.0;
    cfg.label_period_us = 30'000;
    cfg.rng_seed = 20240211;
    return cfg;
}

Recording generate(const SynthConfig& cfg) {
    if (cfg.duration_us <= 0) throw std::invalid_argument("duration must be positive");
    if (cfg.event_rate_on_ring < 0 || cfg.noise_rate < 0) {
        throw std::invalid_argument("rates must be non-negative");
    }

    Rng rng(cfg.rng_seed);
    Walk walk;
    if (cfg.trajectory == Trajectory::RandomWalk) walk = build_walk(cfg);
    auto trajectory_at = [&](int64_t t_us) {
        return cfg.trajectory == Trajectory::Circular ? eval_circular(cfg, t_us)
                                                      : eval_walk(walk, t_us);
    };

    Recording rec;
    rec.stream.width = cfg.width;
    rec.stream.height = cfg.height;

    constexpr int64_t kTickUs = 250;
    const double tick_ms = kTickUs * 1e-3;
    const int ring_samples =
        std::max(8, static_cast<int>(std::ceil(2.0 * std::numbers::pi * cfg.pupil_radius)));

    std::vector<Event> tick_events;
    for (int64_t tick = 0; tick * kTickUs < cfg.duration_us; ++tick) {
        int64_t t0 = tick * kTickUs;
        tick_events.clear();

        TrajectoryEval c = trajectory_at(t0 + kTickUs / 2);
        double vnorm = std::hypot(c.vx, c.vy);
        if (vnorm > 1e-9 && cfg.event_rate_on_ring > 0) {
            // Contour pixels emit in proportion to how fast the edge sweeps
            // over them: |cos| of the angle between the outward normal and
            // the velocity. Front half (normal . v > 0) = leading edge = ON.
            double lambda_px = cfg.event_rate_on_ring * tick_ms;
            for (int k = 0; k < ring_samples; ++k) {
                double a = 2.0 * std::numbers::pi * k / ring_samples;
                double nx = std::cos(a), ny = std::sin(a);
                double px = c.x + cfg.pupil_radius * nx;
                double py = c.y + cfg.pupil_radius * ny;
                if (px < 0 || px >= cfg.width || py < 0 || py >= cfg.height) continue;
                double align = (nx * c.vx + ny * c.vy) / vnorm;
                int n = rng.poisson(lambda_px * std::abs(align));
                Polarity pol = align > 0 ? Polarity::On : Polarity::Off;
                for (int i = 0; i < n; ++i) {
                    int64_t t = t0 + static_cast<int64_t>(rng.uniform() * kTickUs);
                    tick_events.push_back(Event{t, static_cast<int16_t>(px),
                                                static_cast<int16_t>(py), pol});
                }
            }
        }

        int n_noise = rng.poisson(cfg.noise_rate * tick_ms);
        for (int i = 0; i < n_noise; ++i) {
            int64_t t = t0 + static_cast<int64_t>(rng.uniform() * kTickUs);
            auto x = static_cast<int16_t>(rng.uniform() * cfg.width);
            auto y = static_cast<int16_t>(rng.uniform() * cfg.height);
            Polarity pol = rng.uniform() < 0.5 ? Polarity::Off : Polarity::On;
            tick_events.push_back(Event{t, x, y, pol});
        }

        std::stable_sort(tick_events.begin(), tick_events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
        rec.stream.events.insert(rec.stream.events.end(), tick_events.begin(),
                                 tick_events.end());
    }

    for (int64_t t = 0; t < cfg.duration_us; t += cfg.label_period_us) {
        TrajectoryEval c = trajectory_at(t);
        rec.labels.push_back(PupilLabel{t, c.x, c.y});
    }
    return rec;
}

}  // namespace synth
}  // namespace retina
