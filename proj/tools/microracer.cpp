// microracer command-line tool: train / eval / race / plot / track-debug.
//
// All settings live in one JSON config file (see --config); CLI flags
// override file values. Every run writes its resolved manifest before any
// computation so results are reproducible from the manifest alone.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "microracer/harness.hpp"
#include "microracer/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace microracer;

namespace {

// ---- config (de)serialization ----

json env_to_json(const EnvConfig& e) {
    return {{"dt", e.dt},
            {"max_linear_acc", e.max_linear_acc},
            {"max_steer", e.max_steer},
            {"angular_acc_tolerance", e.angular_acc_tolerance},
            {"low_speed_threshold", e.low_speed_threshold},
            {"low_speed_patience", e.low_speed_patience},
            {"max_episode_steps", e.max_episode_steps},
            {"failure_penalty", e.failure_penalty},
            {"initial_speed", e.initial_speed},
            {"obstacles", e.enable_obstacles},
            {"chicanes", e.enable_chicanes},
            {"turn_limit", e.enable_turn_limit},
            {"low_speed_termination", e.enable_low_speed_termination},
            {"track",
             {{"n_control_points", e.track.n_control_points},
              {"track_width", e.track.track_width},
              {"map_resolution", e.track.map_resolution},
              {"world_extent", e.track.world_extent}}}};
}

void env_from_json(const json& j, EnvConfig& e) {
    e.dt = j.value("dt", e.dt);
    e.max_linear_acc = j.value("max_linear_acc", e.max_linear_acc);
    e.max_steer = j.value("max_steer", e.max_steer);
    e.angular_acc_tolerance = j.value("angular_acc_tolerance", e.angular_acc_tolerance);
    e.low_speed_threshold = j.value("low_speed_threshold", e.low_speed_threshold);
    e.low_speed_patience = j.value("low_speed_patience", e.low_speed_patience);
    e.max_episode_steps = j.value("max_episode_steps", e.max_episode_steps);
    e.failure_penalty = j.value("failure_penalty", e.failure_penalty);
    e.initial_speed = j.value("initial_speed", e.initial_speed);
    e.enable_obstacles = j.value("obstacles", e.enable_obstacles);
    e.enable_chicanes = j.value("chicanes", e.enable_chicanes);
    e.enable_turn_limit = j.value("turn_limit", e.enable_turn_limit);
    e.enable_low_speed_termination =
        j.value("low_speed_termination", e.enable_low_speed_termination);
    if (j.contains("track")) {
        const json& t = j["track"];
        e.track.n_control_points = t.value("n_control_points", e.track.n_control_points);
        e.track.track_width = t.value("track_width", e.track.track_width);
        e.track.map_resolution = t.value("map_resolution", e.track.map_resolution);
        e.track.world_extent = t.value("world_extent", e.track.world_extent);
    }
}

json hp_to_json(const agents::Hyperparams& h) {
    return {{"gamma", h.gamma},
            {"tau", h.tau},
            {"actor_lr", h.actor_lr},
            {"critic_lr", h.critic_lr},
            {"exploration_noise_std", h.exploration_noise_std},
            {"parameter_noise_std", h.parameter_noise_std},
            {"policy_delay", h.policy_delay},
            {"target_noise_std", h.target_noise_std},
            {"target_noise_clip", h.target_noise_clip},
            {"target_entropy", h.target_entropy},
            {"dsac_min_sigma", h.dsac_min_sigma},
            {"dsac_boundary", h.dsac_boundary},
            {"ppo_lr", h.ppo_lr},
            {"ppo_epochs", h.ppo_epochs},
            {"ppo_minibatch", h.ppo_minibatch},
            {"gae_lambda", h.gae_lambda},
            {"ppo_clip", h.ppo_clip},
            {"ppo_entropy_coef", h.ppo_entropy_coef},
            {"ppo_target_kl", h.ppo_target_kl},
            {"buffer_capacity", h.buffer_capacity},
            {"batch_size", h.batch_size},
            {"warmup_steps", h.warmup_steps}};
}

void hp_from_json(const json& j, agents::Hyperparams& h) {
    h.gamma = j.value("gamma", h.gamma);
    h.tau = j.value("tau", h.tau);
    h.actor_lr = j.value("actor_lr", h.actor_lr);
    h.critic_lr = j.value("critic_lr", h.critic_lr);
    h.exploration_noise_std = j.value("exploration_noise_std", h.exploration_noise_std);
    h.parameter_noise_std = j.value("parameter_noise_std", h.parameter_noise_std);
    h.policy_delay = j.value("policy_delay", h.policy_delay);
    h.target_noise_std = j.value("target_noise_std", h.target_noise_std);
    h.target_noise_clip = j.value("target_noise_clip", h.target_noise_clip);
    h.target_entropy = j.value("target_entropy", h.target_entropy);
    h.dsac_min_sigma = j.value("dsac_min_sigma", h.dsac_min_sigma);
    h.dsac_boundary = j.value("dsac_boundary", h.dsac_boundary);
    h.ppo_lr = j.value("ppo_lr", h.ppo_lr);
    h.ppo_epochs = j.value("ppo_epochs", h.ppo_epochs);
    h.ppo_minibatch = j.value("ppo_minibatch", h.ppo_minibatch);
    h.gae_lambda = j.value("gae_lambda", h.gae_lambda);
    h.ppo_clip = j.value("ppo_clip", h.ppo_clip);
    h.ppo_entropy_coef = j.value("ppo_entropy_coef", h.ppo_entropy_coef);
    h.ppo_target_kl = j.value("ppo_target_kl", h.ppo_target_kl);
    h.buffer_capacity = j.value("buffer_capacity", h.buffer_capacity);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.warmup_steps = j.value("warmup_steps", h.warmup_steps);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string short_hash(const json& j) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)fnv1a(j.dump()));
    return std::string(buf).substr(0, 8);
}

std::string timestamp() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", std::localtime(&t));
    return buf;
}

struct CommonOpts {
    std::string config_path;
    std::string out_dir;  // empty = auto under runs/
    EnvConfig env;
    agents::Hyperparams hp;
    json config_json;  // raw file content for the manifest

    void load_config() {
        if (config_path.empty()) return;
        config_json = json::parse(io::read_file(config_path));
        if (config_json.contains("env")) env_from_json(config_json["env"], env);
        if (config_json.contains("hyperparams")) hp_from_json(config_json["hyperparams"], hp);
    }
};

fs::path make_run_dir(const CommonOpts& o, const std::string& algo, const json& resolved) {
    fs::path dir = o.out_dir.empty()
                       ? fs::path("runs") / (timestamp() + "-" + algo + "-" + short_hash(resolved))
                       : fs::path(o.out_dir);
    fs::create_directories(dir / "checkpoints");
    fs::create_directories(dir / "curves");
    fs::create_directories(dir / "eval");
    fs::create_directories(dir / "replays");
    return dir;
}

void write_manifest(const fs::path& dir, const CommonOpts& o, const std::string& command,
                    const json& resolved) {
    json m = {{"command", command},
              {"config_file", o.config_path},
              {"config_hash", short_hash(resolved)},
              {"timestamp", timestamp()},
              {"resolved", resolved}};
    io::write_file((dir / "manifest.json").string(), m.dump(2) + "\n");
}

int cmd_train(const CommonOpts& opts, const std::string& algo, long steps, int episodes,
              int n_seeds, std::uint64_t base_seed, int jobs) {
    harness::TrainRunConfig cfg;
    cfg.algorithm = algo;
    cfg.total_steps = steps;
    cfg.total_episodes = episodes;
    cfg.n_seeds = n_seeds;
    cfg.env = opts.env;
    cfg.hp = opts.hp;

    json resolved = {{"algorithm", algo},
                     {"steps", steps},
                     {"episodes", episodes},
                     {"n_seeds", n_seeds},
                     {"base_seed", base_seed},
                     {"env", env_to_json(cfg.env)},
                     {"hyperparams", hp_to_json(cfg.hp)}};
    const fs::path dir = make_run_dir(opts, algo, resolved);
    write_manifest(dir, opts, "train", resolved);
    std::printf("run dir: %s\n", dir.string().c_str());

    std::vector<harness::TrainResult> results(n_seeds);
    std::vector<std::thread> workers;
    std::atomic<int> next{0};
    const int nw = std::max(1, std::min(jobs, n_seeds));
    for (int w = 0; w < nw; ++w)
        workers.emplace_back([&] {
            for (int k = next.fetch_add(1); k < n_seeds; k = next.fetch_add(1))
                results[k] = harness::train(cfg, derive_seed(base_seed, k));
        });
    for (auto& t : workers) t.join();

    bool any_diverged = false;
    std::vector<harness::CurveLog> logs;
    for (int k = 0; k < n_seeds; ++k) {
        const auto& r = results[k];
        const std::string tag = algo + "_seed" + std::to_string(k);
        io::write_file((dir / "checkpoints" / (tag + ".json")).string(),
                       r.checkpoint.dump() + "\n");
        io::write_file((dir / "curves" / (tag + ".csv")).string(), harness::curve_to_csv(r.log));
        std::printf("seed %d: %zu episodes, %.0fs%s\n", k, r.log.episodes.size(),
                    r.wall_seconds, r.diverged ? " [DIVERGED]" : "");
        any_diverged |= r.diverged;
        logs.push_back(r.log);
    }
    const auto agg = harness::aggregate_curves(logs);
    std::ostringstream agg_csv;
    agg_csv << "episode,mean,lo,hi\n";
    agg_csv.precision(17);
    for (std::size_t i = 0; i < agg.mean.size(); ++i)
        agg_csv << i << "," << agg.mean[i] << "," << agg.lo[i] << "," << agg.hi[i] << "\n";
    io::write_file((dir / "curves" / (algo + "_aggregate.csv")).string(), agg_csv.str());
    return any_diverged ? 2 : 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path, int episodes,
             std::uint64_t eval_seed) {
    const json cp = json::parse(io::read_file(checkpoint_path));
    auto agent = agents::agent_from_checkpoint(cp);
    const auto report = harness::evaluate(*agent, opts.env, episodes, eval_seed);

    json resolved = {{"checkpoint", checkpoint_path},
                     {"episodes", episodes},
                     {"eval_seed", eval_seed},
                     {"env", env_to_json(opts.env)}};
    const fs::path dir = make_run_dir(opts, agent->algo(), resolved);
    write_manifest(dir, opts, "eval", resolved);
    io::write_file((dir / "eval" / "report.json").string(),
                   harness::to_json(report).dump(2) + "\n");
    std::printf("%s  completed=%d/%d  mean_reward=%.3f  mean_speed=%.3f\n",
                agent->algo().c_str(), report.completed_episodes, episodes,
                report.mean_episodic_reward, report.mean_speed);
    return 0;
}

int cmd_race(const CommonOpts& opts, const std::vector<std::string>& checkpoints,
             std::uint64_t track_seed) {
    std::vector<std::unique_ptr<agents::Agent>> loaded;
    std::vector<agents::Agent*> ptrs;
    for (const auto& p : checkpoints) {
        loaded.push_back(agents::agent_from_checkpoint(json::parse(io::read_file(p))));
        ptrs.push_back(loaded.back().get());
    }
    const auto replay = harness::race(ptrs, opts.env, track_seed);
    if (!harness::validate_replay(replay))
        throw std::runtime_error("race replay failed re-simulation check");

    json resolved = {{"checkpoints", checkpoints},
                     {"track_seed", track_seed},
                     {"env", env_to_json(opts.env)}};
    const fs::path dir = make_run_dir(opts, "race", resolved);
    write_manifest(dir, opts, "race", resolved);
    io::write_file((dir / "replays" / "race.json").string(),
                   harness::to_json(replay).dump() + "\n");

    TrackConfig tc = opts.env.track;
    tc.rng_seed = track_seed;
    tc.enable_obstacles = opts.env.enable_obstacles;
    tc.enable_chicanes = opts.env.enable_chicanes;
    auto gt = generate_track(tc);
    static const char* colors[] = {"blue", "orange", "purple", "teal", "brown", "magenta"};
    std::vector<io::SvgTrajectory> trs;
    for (std::size_t i = 0; i < replay.agents.size(); ++i) {
        const auto& a = replay.agents[i];
        trs.push_back({a.name + " (" + to_string(a.outcome) + ")", colors[i % 6], a.positions});
    }
    io::write_file((dir / "replays" / "race.svg").string(),
                   io::track_svg(gt.borders, gt.map, trs));
    for (const auto& a : replay.agents)
        std::printf("%-10s outcome=%-10s return=%.3f steps=%zu\n", a.name.c_str(),
                    to_string(a.outcome), a.episode_return, a.actions.size());
    return 0;
}

int cmd_plot(const std::vector<std::string>& csvs, const std::string& out_path) {
    static const char* colors[] = {"blue", "orange", "green", "red", "purple", "brown"};
    std::vector<io::CurveSeries> series;
    for (std::size_t i = 0; i < csvs.size(); ++i) {
        const std::string stem = fs::path(csvs[i]).stem().string();
        const auto logs = harness::curves_from_csv(io::read_file(csvs[i]), stem);
        const auto agg = harness::aggregate_curves(logs);
        series.push_back({stem, colors[i % 6], agg.mean, agg.lo, agg.hi});
    }
    io::write_file(out_path, io::curves_svg(series));
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_track_debug(const CommonOpts& opts, std::uint64_t seed, const std::string& out_dir) {
    TrackConfig tc = opts.env.track;
    tc.rng_seed = seed;
    tc.enable_obstacles = opts.env.enable_obstacles;
    tc.enable_chicanes = opts.env.enable_chicanes;
    auto gt = generate_track(tc);
    fs::create_directories(out_dir);
    const std::string base = (fs::path(out_dir) / ("track_" + std::to_string(seed))).string();
    io::write_pgm(gt.map, base + ".pgm");
    io::write_file(base + ".svg", io::track_svg(gt.borders, gt.map));
    std::printf("wrote %s.pgm and %s.svg (%zu drivable cells)\n", base.c_str(), base.c_str(),
                gt.map.count_true());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"microracer: procedural racing environment and RL baselines"};
    app.require_subcommand(1);

    CommonOpts opts;
    app.add_option("--config", opts.config_path, "JSON config file (flags override it)");
    app.add_option("--out", opts.out_dir, "output directory (default: runs/<ts>-<algo>-<hash>)");
    // env toggles, default all enabled
    bool no_obstacles = false, no_chicanes = false, no_turn_limit = false, no_lowspeed = false;
    app.add_flag("--no-obstacles", no_obstacles, "disable obstacles");
    app.add_flag("--no-chicanes", no_chicanes, "disable chicanes");
    app.add_flag("--no-turn-limit", no_turn_limit, "disable the speed-dependent turn limit");
    app.add_flag("--no-low-speed-termination", no_lowspeed, "disable low-speed termination");

    std::string algo = "sac";
    long steps = 50000;
    int episodes = 600, n_seeds = 1, eval_episodes = 100, jobs = 1;
    std::uint64_t seed = 1, track_seed = 1, eval_seed = harness::kEvalSeedBase;
    std::string checkpoint, plot_out = "curves.svg", debug_out = ".";
    std::vector<std::string> checkpoints, csvs;

    auto* train = app.add_subcommand("train", "train an agent over one or more seeds");
    train->fallthrough();
    train->add_option("--algo", algo, "ddpg|ddpg2|td3|sac|dsac|ppo")->required();
    train->add_option("--steps", steps, "environment steps per seed (off-policy agents)");
    train->add_option("--episodes", episodes, "episodes per seed (ppo)");
    train->add_option("--seeds", n_seeds, "number of seeds");
    train->add_option("--seed", seed, "base seed");
    train->add_option("--jobs", jobs, "parallel training workers");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on fresh tracks");
    eval->fallthrough();
    eval->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
    eval->add_option("--episodes", eval_episodes, "evaluation episodes");
    eval->add_option("--seed", eval_seed, "evaluation track seed base");

    auto* race = app.add_subcommand("race", "race several checkpoints on one track");
    race->fallthrough();
    race->add_option("--checkpoint", checkpoints, "checkpoint JSON (repeatable)")->required();
    race->add_option("--track-seed", track_seed, "shared track seed");

    auto* plot = app.add_subcommand("plot", "render training-curve CSVs to SVG");
    plot->fallthrough();
    plot->add_option("--curves", csvs, "curve CSV (repeatable)")->required();
    plot->add_option("--out-file", plot_out, "output SVG path");

    auto* tdbg = app.add_subcommand("track-debug", "dump a generated track as PGM + SVG");
    tdbg->fallthrough();
    tdbg->add_option("--seed", track_seed, "track seed");
    tdbg->add_option("--dir", debug_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // usage problems -> 1
    }

    try {
        opts.load_config();
        opts.env.enable_obstacles = !no_obstacles;
        opts.env.enable_chicanes = !no_chicanes;
        opts.env.enable_turn_limit = !no_turn_limit;
        opts.env.enable_low_speed_termination = !no_lowspeed;
        opts.env.validate();

        if (train->parsed()) {
            const auto& known = agents::known_algorithms();
            if (std::find(known.begin(), known.end(), algo) == known.end()) {
                std::fprintf(stderr, "unknown algorithm: %s\n", algo.c_str());
                return 1;
            }
            return cmd_train(opts, algo, steps, episodes, n_seeds, seed, jobs);
        }
        if (eval->parsed()) return cmd_eval(opts, checkpoint, eval_episodes, eval_seed);
        if (race->parsed()) return cmd_race(opts, checkpoints, track_seed);
        if (plot->parsed()) return cmd_plot(csvs, plot_out);
        if (tdbg->parsed()) return cmd_track_debug(opts, track_seed, debug_out);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
