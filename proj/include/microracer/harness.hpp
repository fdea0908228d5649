#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "microracer/agents/factory.hpp"
#include "microracer/env.hpp"

namespace microracer::harness {

using agents::Agent;
using agents::Hyperparams;
using agents::Mode;

struct TrainRunConfig {
    std::string algorithm = "sac";
    long total_steps = 50000;  // off-policy budget
    int total_episodes = 600;  // PPO budget
    int eval_episodes = 100;
    int n_seeds = 10;
    EnvConfig env;
    Hyperparams hp;
};

struct EpisodeRecord {
    int episode = 0;
    double episode_return = 0.0;
    int length = 0;
    double wall_seconds = 0.0;
    Termination cause = Termination::none;
};

struct CurveLog {
    std::string algorithm;
    std::uint64_t seed = 0;
    bool diverged = false;
    std::vector<EpisodeRecord> episodes;
};

struct TrainResult {
    nlohmann::json checkpoint;
    CurveLog log;
    double wall_seconds = 0.0;
    bool diverged = false;
};

/// Deterministic episode seed stream for one training run.
inline std::uint64_t episode_seed(std::uint64_t run_seed, int episode) {
    return derive_seed(run_seed, 0xE0000000ULL + static_cast<std::uint64_t>(episode));
}

/// Fixed, documented seed block for evaluation tracks so reports are
/// comparable across algorithms: derive_seed(eval_base, episode index).
constexpr std::uint64_t kEvalSeedBase = 0xE7A1ULL;

/// Run one training: collect/update loop to the configured budget, logging
/// one record per episode. Off-policy agents take uniform random actions
/// for the warm-up steps and then do one gradient update per environment
/// step; PPO trains on complete episodes.
inline TrainResult train(const TrainRunConfig& cfg, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    auto wall = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    auto agent = agents::make_agent(cfg.algorithm, cfg.hp, seed);
    Racer env(cfg.env);
    Rng warmup_rng(derive_seed(seed, 0xAA00ULL));

    TrainResult result;
    result.log.algorithm = cfg.algorithm;
    result.log.seed = seed;

    const bool episodic = !agent->uses_random_warmup();  // PPO
    int episode = 0;
    long step_count = 0;
    double ep_return = 0.0;
    int ep_len = 0;
    Observation obs = env.reset(episode_seed(seed, episode));

    auto finish_episode = [&](Termination cause) {
        result.log.episodes.push_back({episode, ep_return, ep_len, wall(), cause});
        agent->end_episode();
        episode += 1;
        ep_return = 0.0;
        ep_len = 0;
    };

    try {
        while (episodic ? (episode < cfg.total_episodes) : (step_count < cfg.total_steps)) {
            Action action;
            if (!episodic && step_count < cfg.hp.warmup_steps) {
                action = {warmup_rng.uniform(-1.0, 1.0), warmup_rng.uniform(-1.0, 1.0)};
            } else {
                action = agent->select_action(obs, Mode::train);
            }
            const StepResult r = env.step(action);
            agent->record(obs, action, r);
            obs = r.observation;
            ep_return += r.reward;
            ep_len += 1;
            step_count += 1;

            if (!episodic && step_count > cfg.hp.warmup_steps && agent->ready_to_update())
                agent->update();

            if (r.done) {
                finish_episode(r.cause);
                const bool more =
                    episodic ? (episode < cfg.total_episodes) : (step_count < cfg.total_steps);
                if (more) obs = env.reset(episode_seed(seed, episode));
            }
        }
    } catch (const std::runtime_error&) {
        // non-finite values: abort the run but keep the partial log
        result.diverged = true;
        result.log.diverged = true;
    }

    result.checkpoint = agent->checkpoint();
    result.wall_seconds = wall();
    return result;
}

struct EvalEpisode {
    std::uint64_t track_seed = 0;
    double episode_return = 0.0;
    int length = 0;
    double mean_speed = 0.0;
    Termination cause = Termination::none;
};

struct EvalReport {
    std::string algorithm;
    int eval_episodes = 0;
    int completed_episodes = 0;
    double mean_episodic_reward = 0.0;  // includes failure penalties
    double mean_speed = 0.0;  // instantaneous speed averaged over non-terminal steps
    std::vector<EvalEpisode> episodes;
};

/// Deterministic-mode policy on fresh random tracks from the fixed eval
/// seed block. Never mutates the agent.
inline EvalReport evaluate(Agent& agent, const EnvConfig& env_cfg, int eval_episodes,
                           std::uint64_t eval_seed_base = kEvalSeedBase) {
    Racer env(env_cfg);
    EvalReport report;
    report.algorithm = agent.algo();
    report.eval_episodes = eval_episodes;
    double speed_sum = 0.0;
    long speed_steps = 0;
    for (int e = 0; e < eval_episodes; ++e) {
        EvalEpisode ep;
        ep.track_seed = derive_seed(eval_seed_base, static_cast<std::uint64_t>(e));
        Observation obs = env.reset(ep.track_seed);
        while (true) {
            const StepResult r = env.step(agent.select_action(obs, Mode::eval));
            obs = r.observation;
            ep.episode_return += r.reward;
            ep.length += 1;
            if (!r.done) {
                speed_sum += env.state().speed;
                speed_steps += 1;
                ep.mean_speed += env.state().speed;
            }
            if (r.done) {
                ep.cause = r.cause;
                break;
            }
        }
        if (ep.length > 1) ep.mean_speed /= (ep.length - 1);
        if (ep.cause == Termination::completed) report.completed_episodes += 1;
        report.mean_episodic_reward += ep.episode_return;
        report.episodes.push_back(ep);
    }
    report.mean_episodic_reward /= eval_episodes;
    report.mean_speed = speed_steps > 0 ? speed_sum / speed_steps : 0.0;
    return report;
}

struct AggregateCurve {
    std::string algorithm;
    int n_seeds = 0;
    int smoothing_window = 20;
    std::vector<double> mean;
    std::vector<double> lo;  // mean - 1.96*std/sqrt(n)
    std::vector<double> hi;
};

inline std::vector<double> moving_average(const std::vector<double>& v, int window) {
    std::vector<double> out(v.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
        if (i >= static_cast<std::size_t>(window)) acc -= v[i - window];
        out[i] = acc / std::min<std::size_t>(i + 1, window);
    }
    return out;
}

/// Smoothed per-episode mean and 95% normal-approximation band across seeds.
/// Series are truncated to the shortest seed (step-budgeted runs finish
/// different episode counts).
inline AggregateCurve aggregate_curves(const std::vector<CurveLog>& logs,
                                       int smoothing_window = 20) {
    if (logs.size() < 1) throw std::invalid_argument("aggregate_curves: no logs");
    AggregateCurve agg;
    agg.algorithm = logs.front().algorithm;
    agg.smoothing_window = smoothing_window;
    agg.n_seeds = static_cast<int>(logs.size());
    for (const CurveLog& l : logs)
        if (l.algorithm != agg.algorithm)
            throw std::invalid_argument("aggregate_curves: mixed algorithms");

    std::size_t len = SIZE_MAX;
    for (const CurveLog& l : logs) len = std::min(len, l.episodes.size());
    if (len == SIZE_MAX || len == 0) return agg;

    std::vector<std::vector<double>> smoothed;
    for (const CurveLog& l : logs) {
        std::vector<double> r(len);
        for (std::size_t i = 0; i < len; ++i) r[i] = l.episodes[i].episode_return;
        smoothed.push_back(moving_average(r, smoothing_window));
    }
    const double n = static_cast<double>(logs.size());
    agg.mean.resize(len);
    agg.lo.resize(len);
    agg.hi.resize(len);
    for (std::size_t i = 0; i < len; ++i) {
        double m = 0.0;
        for (const auto& s : smoothed) m += s[i];
        m /= n;
        double var = 0.0;
        for (const auto& s : smoothed) var += (s[i] - m) * (s[i] - m);
        const double sd = std::sqrt(var / n);
        const double half = 1.96 * sd / std::sqrt(n);
        agg.mean[i] = m;
        agg.lo[i] = m - half;
        agg.hi[i] = m + half;
    }
    return agg;
}

struct AgentTrajectory {
    std::string name;
    std::string algorithm;
    std::vector<std::array<double, 2>> actions;
    std::vector<Vec2> positions;
    std::vector<double> headings;
    std::vector<double> speeds;
    Termination outcome = Termination::none;
    double episode_return = 0.0;
};

struct RaceReplay {
    std::uint64_t track_seed = 0;
    EnvConfig env;
    std::vector<AgentTrajectory> agents;
};

/// Simulate each agent independently on one shared track seed; trajectories
/// are recorded for overlay rendering and bit-exact re-simulation.
inline RaceReplay race(std::vector<Agent*> competitors, const EnvConfig& env_cfg,
                       std::uint64_t track_seed) {
    if (competitors.empty()) throw std::invalid_argument("race: no agents");
    RaceReplay replay;
    replay.track_seed = track_seed;
    replay.env = env_cfg;
    int idx = 0;
    for (Agent* agent : competitors) {
        AgentTrajectory tr;
        tr.name = agent->algo() + "#" + std::to_string(idx++);
        tr.algorithm = agent->algo();
        Racer env(env_cfg);
        Observation obs = env.reset(track_seed);
        tr.positions.push_back(env.state().position);
        tr.headings.push_back(env.state().heading);
        tr.speeds.push_back(env.state().speed);
        while (true) {
            const Action a = agent->select_action(obs, Mode::eval).clamped();
            const StepResult r = env.step(a);
            tr.actions.push_back({a.acceleration, a.turn});
            tr.positions.push_back(env.state().position);
            tr.headings.push_back(env.state().heading);
            tr.speeds.push_back(env.state().speed);
            tr.episode_return += r.reward;
            obs = r.observation;
            if (r.done) {
                tr.outcome = r.cause;
                break;
            }
        }
        replay.agents.push_back(std::move(tr));
    }
    return replay;
}

/// Re-simulate the recorded actions and compare positions bit-exact.
inline bool validate_replay(const RaceReplay& replay) {
    for (const AgentTrajectory& tr : replay.agents) {
        Racer env(replay.env);
        env.reset(replay.track_seed);
        if (env.state().position.x != tr.positions[0].x ||
            env.state().position.y != tr.positions[0].y)
            return false;
        for (std::size_t i = 0; i < tr.actions.size(); ++i) {
            const StepResult r = env.step({tr.actions[i][0], tr.actions[i][1]});
            const Vec2 p = env.state().position;
            if (p.x != tr.positions[i + 1].x || p.y != tr.positions[i + 1].y) return false;
            if (r.done != (i + 1 == tr.actions.size())) return false;
        }
    }
    return true;
}

/// Hand-written baseline: steer toward the widest lidar opening, accelerate
/// when it is far, brake when near. A sanity floor for environment
/// solvability, not a learner.
inline Action heuristic_action(const Observation& obs, const EnvConfig& cfg) {
    const double max_turn = max_turn_at_speed(obs.speed, cfg);
    const double turn = std::clamp(obs.alpha_max / std::max(max_turn, 1e-9), -1.0, 1.0);
    // drivable speed for the curvature implied by aiming at the far opening
    const double kappa = 2.0 * std::abs(std::sin(obs.alpha_max)) / std::max(obs.d_max, 1e-6);
    const double v_curve = std::sqrt(cfg.angular_acc_tolerance / std::max(kappa, 1e-6));
    // and be able to stop within sight distance
    const double v_sight = std::sqrt(2.0 * cfg.max_linear_acc * obs.d_max * 0.6);
    const double target_speed = std::clamp(std::min(v_curve, v_sight), 0.05, 0.3);
    const double acc = std::clamp((target_speed - obs.speed) / (cfg.max_linear_acc * cfg.dt),
                                  -1.0, 1.0);
    return {acc, turn};
}

// ---- serialization ----

inline std::string curve_to_csv(const CurveLog& log) {
    std::ostringstream ss;
    ss << "episode,return,length,seed\n";
    ss.precision(17);
    for (const EpisodeRecord& e : log.episodes)
        ss << e.episode << "," << e.episode_return << "," << e.length << "," << log.seed
           << "\n";
    return ss.str();
}

inline std::vector<CurveLog> curves_from_csv(const std::string& csv, const std::string& algo) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || line.rfind("episode,", 0) != 0)
        throw std::invalid_argument("malformed curve CSV: missing header");
    std::map<std::uint64_t, CurveLog> by_seed;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpisodeRecord rec;
        std::uint64_t seed = 0;
        char c;
        std::istringstream ls(line);
        if (!(ls >> rec.episode >> c >> rec.episode_return >> c >> rec.length >> c >> seed))
            throw std::invalid_argument("malformed curve CSV row: " + line);
        auto& log = by_seed[seed];
        log.algorithm = algo;
        log.seed = seed;
        log.episodes.push_back(rec);
    }
    std::vector<CurveLog> out;
    for (auto& [s, l] : by_seed) out.push_back(std::move(l));
    return out;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json eps = nlohmann::json::array();
    for (const EvalEpisode& e : r.episodes)
        eps.push_back({{"track_seed", e.track_seed},
                       {"return", e.episode_return},
                       {"length", e.length},
                       {"mean_speed", e.mean_speed},
                       {"cause", to_string(e.cause)}});
    return {{"algorithm", r.algorithm},
            {"eval_episodes", r.eval_episodes},
            {"completed", r.completed_episodes},
            {"mean_reward", r.mean_episodic_reward},
            {"mean_speed", r.mean_speed},
            {"episodes", eps}};
}

inline nlohmann::json to_json(const RaceReplay& r) {
    nlohmann::json agents_j = nlohmann::json::array();
    for (const AgentTrajectory& tr : r.agents) {
        nlohmann::json pos = nlohmann::json::array();
        for (Vec2 p : tr.positions) pos.push_back({p.x, p.y});
        agents_j.push_back({{"name", tr.name},
                            {"algorithm", tr.algorithm},
                            {"actions", tr.actions},
                            {"positions", pos},
                            {"headings", tr.headings},
                            {"speeds", tr.speeds},
                            {"outcome", to_string(tr.outcome)},
                            {"return", tr.episode_return}});
    }
    return {{"track_seed", r.track_seed},
            {"env",
             {{"obstacles", r.env.enable_obstacles},
              {"chicanes", r.env.enable_chicanes},
              {"turn_limit", r.env.enable_turn_limit},
              {"low_speed_termination", r.env.enable_low_speed_termination}}},
            {"agents", agents_j}};
}

inline RaceReplay replay_from_json(const nlohmann::json& j, const EnvConfig& base_env) {
    RaceReplay r;
    r.track_seed = j.at("track_seed").get<std::uint64_t>();
    r.env = base_env;
    r.env.enable_obstacles = j.at("env").at("obstacles").get<bool>();
    r.env.enable_chicanes = j.at("env").at("chicanes").get<bool>();
    r.env.enable_turn_limit = j.at("env").at("turn_limit").get<bool>();
    r.env.enable_low_speed_termination = j.at("env").at("low_speed_termination").get<bool>();
    for (const auto& aj : j.at("agents")) {
        AgentTrajectory tr;
        tr.name = aj.at("name").get<std::string>();
        tr.algorithm = aj.at("algorithm").get<std::string>();
        tr.actions = aj.at("actions").get<std::vector<std::array<double, 2>>>();
        for (const auto& pj : aj.at("positions"))
            tr.positions.push_back({pj[0].get<double>(), pj[1].get<double>()});
        tr.headings = aj.at("headings").get<std::vector<double>>();
        tr.speeds = aj.at("speeds").get<std::vector<double>>();
        tr.episode_return = aj.at("return").get<double>();
        r.agents.push_back(std::move(tr));
    }
    return r;
}

}  // namespace microracer::harness
