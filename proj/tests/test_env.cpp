#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "microracer/env.hpp"

using namespace microracer;

namespace {

EnvConfig small_env() {
    EnvConfig cfg;
    cfg.track.map_resolution = 400;
    return cfg;
}

// brute-force certification of one lidar reading. A fixed-step march 10x
// finer than the grid is the reference; a reading longer than the march
// always fails (the sensor saw through a wall). A reading shorter by more
// than the tolerance can still be right -- the march can hop over sub-step
// corner clips -- so the window just past the reading is rescanned with
// progressively finer steps looking for the off-track cell that justifies
// it.
bool ray_within_tol(Vec2 pos, double theta, const TrackMap& map, double max_range,
                    double reading, double tol) {
    const Vec2 dir = heading_dir(theta);
    auto inside = [&](double d) { return map.inside(pos + dir * d); };
    const double step = map.cell_size() / 10.0;
    double d = step;
    while (d < max_range && inside(d)) d += step;
    d = std::min(d, max_range);
    if (std::abs(reading - d) <= tol) return true;
    if (reading > d + tol) return false;
    for (double s = step / 10.0; s >= map.cell_size() * 1e-6; s /= 10.0)
        for (double w = reading; w <= reading + tol && w < max_range; w += s)
            if (!inside(w)) return true;
    return false;
}

}  // namespace

TEST_CASE("lidar: ray fan geometry") {
    CHECK(lidar_ray_angle(0) == doctest::Approx(-M_PI / 6.0));
    CHECK(lidar_ray_angle(kLidarRays - 1) == doctest::Approx(M_PI / 6.0));
    CHECK(lidar_ray_angle(9) == doctest::Approx(0.0));
    // uniform spacing
    const double d0 = lidar_ray_angle(1) - lidar_ray_angle(0);
    for (int k = 2; k < kLidarRays; ++k)
        CHECK(lidar_ray_angle(k) - lidar_ray_angle(k - 1) == doctest::Approx(d0));
}

TEST_CASE("lidar: matches a 10x finer ray march within 2 cells") {
    Racer env(small_env());
    Rng r(99);
    int poses = 0;
    for (std::uint64_t seed : {4ULL, 8ULL, 15ULL}) {
        env.reset(seed);
        const TrackMap& map = env.track().map;
        const double tol = 2.0 * map.cell_size();
        for (int p = 0; p < 20; ++p) {
            // random on-track pose: rejection-sample cell centers
            Vec2 pos;
            do {
                pos = {r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0)};
            } while (!map.inside(pos));
            const double heading = r.uniform(-M_PI, M_PI);
            const Lidar scan = lidar_scan(pos, heading, map, env.max_range());
            for (int k = 0; k < kLidarRays; ++k)
                CHECK(ray_within_tol(pos, heading + lidar_ray_angle(k), map, env.max_range(),
                                     scan.distances[k], tol));
            poses += 1;
        }
    }
    CHECK(poses == 60);
}

TEST_CASE("lidar: corridor geometry oracle") {
    // a straight corridor built by hand: drivable band |y| < 0.1
    TrackMap map(400, 2.0);
    for (int iy = 0; iy < 400; ++iy)
        for (int ix = 0; ix < 400; ++ix)
            map.set_cell(ix, iy, std::abs(map.cell_center(ix, iy).y) < 0.1);
    // facing +x from the center: the side rays hit the walls at 0.1/sin(|a|)
    const Lidar scan = lidar_scan({-0.5, 0.0}, 0.0, map, 2.0);
    for (int k = 0; k < kLidarRays; ++k) {
        const double a = lidar_ray_angle(k);
        // wall at |y| = 0.1, or the grid edge at x = 1, whichever is closer
        double expected = 1.5;  // straight ahead: exits the grid at x = 1
        if (std::abs(a) > 1e-9)
            expected = std::min(0.1 / std::abs(std::sin(a)), 1.5 / std::cos(a));
        CHECK(scan.distances[k] == doctest::Approx(expected).epsilon(0.05));
    }
}

TEST_CASE("lidar: throws off the track") {
    Racer env(small_env());
    env.reset(2);
    CHECK_THROWS_AS(lidar_scan({5.0, 5.0}, 0.0, env.track().map, env.max_range()),
                    std::domain_error);
}

TEST_CASE("observe: argmax reduction with tie-break and edge clamping") {
    Lidar l;
    for (int k = 0; k < kLidarRays; ++k) l.distances[k] = 0.3;
    l.distances[7] = 0.9;
    l.distances[12] = 0.9;  // tie -> lowest index wins
    l.distances[6] = 0.4;
    l.distances[8] = 0.5;
    Observation o = observe(l, 0.123);
    CHECK(o.alpha_max == doctest::Approx(lidar_ray_angle(7)));
    CHECK(o.d_max == doctest::Approx(0.9));
    CHECK(o.d_prev == doctest::Approx(0.4));
    CHECK(o.d_next == doctest::Approx(0.5));
    CHECK(o.speed == doctest::Approx(0.123));

    // argmax at the first ray: prev clamps to the edge value
    for (int k = 0; k < kLidarRays; ++k) l.distances[k] = 0.2;
    l.distances[0] = 1.0;
    l.distances[1] = 0.6;
    o = observe(l, 0.0);
    CHECK(o.alpha_max == doctest::Approx(-M_PI / 6.0));
    CHECK(o.d_prev == doctest::Approx(1.0));
    CHECK(o.d_next == doctest::Approx(0.6));
}

TEST_CASE("dynamics: speed and heading update identities") {
    auto cfg = small_env();
    Racer env(cfg);
    env.reset(5);
    const CarState before = env.state();
    const Action a{0.5, 0.0};
    env.step(a);
    const CarState after = env.state();
    const double v_expected = before.speed + 0.5 * cfg.max_linear_acc * cfg.dt;
    CHECK(after.speed == doctest::Approx(v_expected).epsilon(1e-12));
    CHECK(after.heading == doctest::Approx(before.heading).epsilon(1e-12));
    const Vec2 moved = after.position - before.position;
    CHECK(moved.norm() == doctest::Approx(after.speed * cfg.dt).epsilon(1e-12));

    // speed never goes negative
    Racer env2(cfg);
    env2.reset(5);
    for (int i = 0; i < 30 && env2.alive(); ++i) {
        env2.step({-1.0, 0.0});
        CHECK(env2.state().speed >= 0.0);
    }
}

TEST_CASE("dynamics: turn limit shrinks with speed") {
    auto cfg = small_env();
    CHECK(max_turn_at_speed(0.0, cfg) == doctest::Approx(cfg.max_steer));
    CHECK(max_turn_at_speed(0.01, cfg) == doctest::Approx(cfg.max_steer));
    const double v = 0.5;
    CHECK(max_turn_at_speed(v, cfg) ==
          doctest::Approx(cfg.angular_acc_tolerance * cfg.dt / v));
    cfg.enable_turn_limit = false;
    CHECK(max_turn_at_speed(v, cfg) == doctest::Approx(cfg.max_steer));

    // heading change honors the limit in-env
    cfg = small_env();
    Racer env(cfg);
    env.reset(6);
    const double h0 = env.state().heading;
    env.step({1.0, 1.0});
    const double dh = wrap_angle(env.state().heading - h0);
    CHECK(std::abs(dh) <= max_turn_at_speed(env.state().speed, cfg) + 1e-12);
}

TEST_CASE("dynamics: actions are clamped to [-1,1]") {
    auto cfg = small_env();
    Racer a(cfg), b(cfg);
    a.reset(7);
    b.reset(7);
    a.step({5.0, -9.0});
    b.step({1.0, -1.0});
    CHECK(a.state().speed == doctest::Approx(b.state().speed));
    CHECK(a.state().heading == doctest::Approx(b.state().heading));
}

TEST_CASE("reward: speed*dt alive, fixed penalty on failure") {
    auto cfg = small_env();
    CHECK(compute_reward(0.3, Termination::none, cfg) == doctest::Approx(0.3 * cfg.dt));
    CHECK(compute_reward(0.3, Termination::timeout, cfg) == doctest::Approx(0.3 * cfg.dt));
    CHECK(compute_reward(0.3, Termination::completed, cfg) == doctest::Approx(0.3 * cfg.dt));
    CHECK(compute_reward(0.3, Termination::off_track, cfg) == doctest::Approx(-1.0));
    CHECK(compute_reward(0.3, Termination::too_slow, cfg) == doctest::Approx(-1.0));
}

TEST_CASE("reward identity: episode return equals path length") {
    // scripted wiggly drive; compare accumulated reward to measured path
    auto cfg = small_env();
    cfg.enable_low_speed_termination = false;
    Racer env(cfg);
    Observation obs = env.reset(9);
    double ret = 0.0, path = 0.0;
    Vec2 prev = env.state().position;
    Rng r(4);
    for (int i = 0; i < 400 && env.alive(); ++i) {
        const auto res = env.step({r.uniform(-0.3, 1.0), r.uniform(-0.5, 0.5)});
        path += (env.state().position - prev).norm();
        prev = env.state().position;
        if (res.cause == Termination::off_track) break;  // exclude the penalty
        ret += res.reward;
    }
    CHECK(ret == doctest::Approx(path).epsilon(0.01));
}

TEST_CASE("termination: low-speed patience") {
    auto cfg = small_env();
    Racer env(cfg);
    env.reset(10);
    // brake to zero, then wait out the patience counter
    int steps_to_slow = 0;
    Termination cause = Termination::none;
    while (env.alive()) {
        const auto r = env.step({-1.0, 0.0});
        steps_to_slow += 1;
        if (r.done) {
            cause = r.cause;
            break;
        }
    }
    CHECK(cause == Termination::too_slow);
    CHECK(env.state().speed < cfg.low_speed_threshold);
    CHECK(steps_to_slow >= cfg.low_speed_patience);

    // with the toggle off the car just sits until timeout
    cfg.enable_low_speed_termination = false;
    Racer env2(cfg);
    env2.reset(10);
    Termination cause2 = Termination::none;
    while (env2.alive()) {
        const auto r = env2.step({-1.0, 0.0});
        if (r.done) cause2 = r.cause;
    }
    CHECK(cause2 == Termination::timeout);
}

TEST_CASE("termination: timeout at the step budget") {
    auto cfg = small_env();
    cfg.max_episode_steps = 25;
    cfg.enable_low_speed_termination = false;
    Racer env(cfg);
    env.reset(11);
    int n = 0;
    Termination cause = Termination::none;
    while (env.alive()) {
        const auto r = env.step({0.0, 0.0});
        n += 1;
        if (r.done) cause = r.cause;
    }
    CHECK(n == 25);
    CHECK(cause == Termination::timeout);
}

TEST_CASE("termination: off-track ends the episode with the penalty") {
    auto cfg = small_env();
    Racer env(cfg);
    env.reset(12);
    // full throttle straight ahead must eventually leave the track
    Termination cause = Termination::none;
    double last_reward = 0.0;
    while (env.alive()) {
        const auto r = env.step({1.0, 0.0});
        if (r.done) {
            cause = r.cause;
            last_reward = r.reward;
        }
    }
    CHECK(cause == Termination::off_track);
    CHECK(last_reward == doctest::Approx(cfg.failure_penalty));
    CHECK_THROWS_AS(env.step({0.0, 0.0}), std::logic_error);
}

TEST_CASE("progress: driving the loop completes, standing never does") {
    auto cfg = small_env();
    cfg.enable_low_speed_termination = false;
    cfg.enable_obstacles = false;  // teleports onto the centerline
    Racer env(cfg);
    env.reset(13);
    CHECK(env.state().arc_progress == doctest::Approx(0.0));
    // teleport along the centerline to mimic a full lap
    const auto center = env.track().borders.sample_center(512);
    double progress_prev = 0.0;
    for (std::size_t i = 1; i < center.size(); i += 3) {
        env.teleport(center[i], 0.0, 0.2);
        env.step({0.0, 0.0});
        CHECK(env.state().arc_progress >= progress_prev);  // monotone
        progress_prev = env.state().arc_progress;
        if (!env.alive()) break;
    }
    CHECK(progress_prev >= doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("reset: deterministic initial state per seed") {
    auto cfg = small_env();
    Racer a(cfg), b(cfg);
    const Observation oa = a.reset(40);
    const Observation ob = b.reset(40);
    CHECK(oa.alpha_max == ob.alpha_max);
    CHECK(oa.d_max == ob.d_max);
    CHECK(a.state().position.x == b.state().position.x);
    CHECK(a.state().heading == b.state().heading);
    CHECK(a.state().speed == doctest::Approx(cfg.initial_speed));
}
