#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "microracer/track.hpp"

namespace microracer {

constexpr int kLidarRays = 19;
constexpr double kLidarHalfFov = M_PI / 6.0;  // +-30 degrees

struct EnvConfig {
    double dt = 0.04;
    double max_linear_acc = 0.1;
    double max_steer = 0.15;                // radians per step at zero speed
    double angular_acc_tolerance = 0.25;    // bounds turn angle at speed
    double low_speed_threshold = 0.02;
    int low_speed_patience = 20;
    int max_episode_steps = 1000;
    double failure_penalty = -1.0;
    double initial_speed = 0.05;
    bool enable_obstacles = true;
    bool enable_chicanes = true;
    bool enable_turn_limit = true;
    bool enable_low_speed_termination = true;

    TrackConfig track;

    void validate() const {
        if (dt <= 0.0) throw std::invalid_argument("dt must be > 0");
        if (max_linear_acc <= 0.0 || max_steer <= 0.0 || angular_acc_tolerance <= 0.0)
            throw std::invalid_argument("dynamics maxima must be > 0");
        if (failure_penalty >= 0.0) throw std::invalid_argument("failure_penalty must be < 0");
    }
};

struct CarState {
    Vec2 position;
    double heading = 0.0;
    double speed = 0.0;
    double arc_progress = 0.0;  // fraction of the centerline completed
    int steps = 0;
};

struct Action {
    double acceleration = 0.0;
    double turn = 0.0;

    Action clamped() const {
        return {std::clamp(acceleration, -1.0, 1.0), std::clamp(turn, -1.0, 1.0)};
    }
};

struct Lidar {
    std::array<double, kLidarRays> distances{};
};

/// Reduced observation: the direction of the widest opening plus the lidar
/// values around it, and the car speed.
struct Observation {
    double alpha_max = 0.0;  // radians, relative to heading
    double d_prev = 0.0;
    double d_max = 0.0;
    double d_next = 0.0;
    double speed = 0.0;

    std::array<double, 5> as_array() const { return {alpha_max, d_prev, d_max, d_next, speed}; }
};

enum class Termination { none, completed, off_track, too_slow, timeout };

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::none: return "none";
        case Termination::completed: return "completed";
        case Termination::off_track: return "off_track";
        case Termination::too_slow: return "too_slow";
        case Termination::timeout: return "timeout";
    }
    return "?";
}

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    Termination cause = Termination::none;
};

/// Angle of lidar ray k relative to the heading.
inline double lidar_ray_angle(int k) {
    return -kLidarHalfFov + k * (2.0 * kLidarHalfFov / (kLidarRays - 1));
}

/// Maximum steering angle at a given speed: full max_steer when slow,
/// shrinking as a_tol*dt/v once v*omega would exceed the tolerated
/// angular acceleration.
inline double max_turn_at_speed(double speed, const EnvConfig& config) {
    if (!config.enable_turn_limit) return config.max_steer;
    const double eps = 1e-9;
    return std::min(config.max_steer,
                    config.angular_acc_tolerance * config.dt / std::max(speed, eps));
}

/// Distance to the first non-track cell along each of the 19 rays, capped
/// at max_range. Uses exact grid traversal (Amanatides-Woo) so thin walls
/// are never stepped over. Position must be inside the track.
inline Lidar lidar_scan(Vec2 position, double heading, const TrackMap& map,
                        double max_range) {
    if (!map.inside(position))
        throw std::domain_error("lidar_scan: position outside track");
    Lidar out;
    const Vec2 org = map.origin();
    const double cs = map.cell_size();
    const double inf = std::numeric_limits<double>::infinity();
    for (int k = 0; k < kLidarRays; ++k) {
        const double theta = heading + lidar_ray_angle(k);
        const Vec2 dir = heading_dir(theta);
        int ix = static_cast<int>(std::floor((position.x - org.x) / cs));
        int iy = static_cast<int>(std::floor((position.y - org.y) / cs));
        const int sx = dir.x >= 0.0 ? 1 : -1;
        const int sy = dir.y >= 0.0 ? 1 : -1;
        const double dtx = dir.x != 0.0 ? cs / std::abs(dir.x) : inf;
        const double dty = dir.y != 0.0 ? cs / std::abs(dir.y) : inf;
        // distance along the ray to the next vertical / horizontal grid line
        double tx = dir.x != 0.0
                        ? (org.x + (ix + (sx > 0 ? 1 : 0)) * cs - position.x) / dir.x
                        : inf;
        double ty = dir.y != 0.0
                        ? (org.y + (iy + (sy > 0 ? 1 : 0)) * cs - position.y) / dir.y
                        : inf;
        double d = 0.0;
        while (true) {
            if (tx < ty) {
                d = tx;
                tx += dtx;
                ix += sx;
            } else {
                d = ty;
                ty += dty;
                iy += sy;
            }
            if (d >= max_range) {
                d = max_range;
                break;
            }
            if (!map.cell(ix, iy)) break;
        }
        out.distances[k] = d;
    }
    return out;
}

/// Reduce a lidar sweep to the 4-value observation. Argmax ties break
/// toward the lowest index; edge rays reuse the edge value as the missing
/// neighbor.
inline Observation observe(const Lidar& lidar, double speed) {
    int m = 0;
    for (int k = 1; k < kLidarRays; ++k)
        if (lidar.distances[k] > lidar.distances[m]) m = k;
    Observation obs;
    obs.alpha_max = lidar_ray_angle(m);
    obs.d_max = lidar.distances[m];
    obs.d_prev = lidar.distances[m > 0 ? m - 1 : 0];
    obs.d_next = lidar.distances[m < kLidarRays - 1 ? m + 1 : kLidarRays - 1];
    obs.speed = speed;
    return obs;
}

/// Per-step reward: distance covered (speed*dt) while alive, a fixed
/// penalty on failure. The episode return thus approximates the path
/// length, the integral of speed.
inline double compute_reward(double new_speed, Termination cause, const EnvConfig& config) {
    if (cause == Termination::off_track || cause == Termination::too_slow)
        return config.failure_penalty;
    return new_speed * config.dt;
}

/// Gym-style environment: reset() -> observation, step(action) ->
/// (observation, reward, done, cause). A fresh random track is generated on
/// every reset.
class Racer {
public:
    using StepHook = std::function<void(const CarState&, const Action&, double reward)>;

    explicit Racer(EnvConfig config) : config_(std::move(config)) { config_.validate(); }

    Observation reset(std::uint64_t seed) {
        TrackConfig tc = config_.track;
        tc.rng_seed = seed;
        tc.enable_obstacles = config_.enable_obstacles;
        tc.enable_chicanes = config_.enable_chicanes;
        track_ = generate_track(tc);
        centerline_ = track_.borders.sample_center(kCenterSamples);

        state_ = CarState{};
        state_.position = track_.borders.start_point();
        state_.heading = track_.borders.start_heading();
        state_.speed = config_.initial_speed;
        progress_index_ = 0;
        low_speed_run_ = 0;
        alive_ = true;
        last_obs_ = observe(lidar_scan(state_.position, state_.heading, track_.map, max_range()),
                            state_.speed);
        return last_obs_;
    }

    StepResult step(const Action& raw_action) {
        if (!alive_)
            throw std::logic_error("Racer::step called on a finished episode; reset first");
        const Action action = raw_action.clamped();

        state_.speed = std::max(
            0.0, state_.speed + action.acceleration * config_.max_linear_acc * config_.dt);
        const double delta = action.turn * max_turn_at_speed(state_.speed, config_);
        state_.heading = wrap_angle(state_.heading + delta);
        state_.position += heading_dir(state_.heading) * (state_.speed * config_.dt);
        state_.steps += 1;

        if (config_.enable_low_speed_termination && state_.speed < config_.low_speed_threshold)
            low_speed_run_ += 1;
        else
            low_speed_run_ = 0;

        update_progress();
        const Termination cause = check_termination();

        StepResult result;
        result.cause = cause;
        result.done = cause != Termination::none;
        result.reward = compute_reward(state_.speed, cause, config_);
        if (cause == Termination::off_track) {
            // sensor is undefined outside the track; repeat the last scan
            result.observation = last_obs_;
            result.observation.speed = state_.speed;
        } else {
            result.observation = observe(
                lidar_scan(state_.position, state_.heading, track_.map, max_range()),
                state_.speed);
        }
        last_obs_ = result.observation;
        if (result.done) alive_ = false;
        if (hook_) hook_(state_, action, result.reward);
        return result;
    }

    Termination check_termination() const {
        if (!track_.map.inside(state_.position)) return Termination::off_track;
        if (config_.enable_low_speed_termination && low_speed_run_ >= config_.low_speed_patience)
            return Termination::too_slow;
        if (state_.arc_progress >= 1.0) return Termination::completed;
        if (state_.steps >= config_.max_episode_steps) return Termination::timeout;
        return Termination::none;
    }

    const CarState& state() const { return state_; }
    const EnvConfig& config() const { return config_; }
    const GeneratedTrack& track() const { return track_; }
    bool alive() const { return alive_; }
    double max_range() const { return config_.track.world_extent; }
    void set_step_hook(StepHook hook) { hook_ = std::move(hook); }

    /// Direct access used by scripted tests: place the car at an arbitrary
    /// pose on the current track.
    void teleport(Vec2 position, double heading, double speed) {
        state_.position = position;
        state_.heading = heading;
        state_.speed = speed;
    }

private:
    static constexpr std::size_t kCenterSamples = 512;

    // Project onto the centerline within a forward window of the previous
    // match; progress only accumulates forward, so driving backwards cannot
    // complete a lap.
    void update_progress() {
        const std::size_t m = centerline_.size();
        std::size_t best = progress_index_;
        double best_d = (centerline_[progress_index_ % m] - state_.position).norm();
        for (std::size_t off = 1; off <= 24; ++off) {
            const std::size_t j = (progress_index_ + off) % m;
            const double d = (centerline_[j] - state_.position).norm();
            if (d < best_d) {
                best_d = d;
                best = progress_index_ + off;
            }
        }
        if (best > progress_index_) {
            progress_index_ = best;
            state_.arc_progress = static_cast<double>(progress_index_) / m;
        }
    }

    EnvConfig config_;
    GeneratedTrack track_;
    std::vector<Vec2> centerline_;
    CarState state_;
    Observation last_obs_;
    std::size_t progress_index_ = 0;  // monotone, not wrapped
    int low_speed_run_ = 0;
    bool alive_ = false;
    StepHook hook_;
};

}  // namespace microracer
