#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "microracer/harness.hpp"
#include "microracer/io.hpp"

using namespace microracer;
namespace hn = microracer::harness;

namespace {

hn::TrainRunConfig quick_config(const std::string& algo) {
    hn::TrainRunConfig cfg;
    cfg.algorithm = algo;
    cfg.total_steps = 900;
    cfg.total_episodes = 2;
    cfg.hp.warmup_steps = 100;
    cfg.env.track.map_resolution = 400;
    return cfg;
}

struct HeuristicAgent : agents::Agent {
    EnvConfig cfg;
    explicit HeuristicAgent(EnvConfig c) : cfg(std::move(c)) {}
    std::string algo() const override { return "heuristic"; }
    Action select_action(const Observation& o, agents::Mode) override {
        return hn::heuristic_action(o, cfg);
    }
    void record(const Observation&, const Action&, const StepResult&) override {}
    void update() override {}
    nlohmann::json checkpoint() const override { return {}; }
    void load(const nlohmann::json&) override {}
};

}  // namespace

TEST_CASE("train: bit-identical runs from the same seed") {
    const auto cfg = quick_config("td3");
    const auto a = hn::train(cfg, 7);
    const auto b = hn::train(cfg, 7);
    CHECK(hn::curve_to_csv(a.log) == hn::curve_to_csv(b.log));
    CHECK(a.checkpoint.dump() == b.checkpoint.dump());
    CHECK_FALSE(a.diverged);
    CHECK(!a.log.episodes.empty());

    const auto c = hn::train(cfg, 8);
    CHECK(a.checkpoint.dump() != c.checkpoint.dump());
}

TEST_CASE("train: episode records carry returns, lengths, and causes") {
    const auto res = hn::train(quick_config("ddpg"), 3);
    long total = 0;
    for (const auto& e : res.log.episodes) {
        CHECK(e.length > 0);
        CHECK(e.cause != Termination::none);
        total += e.length;
    }
    CHECK(total <= 900);
}

TEST_CASE("evaluate: deterministic and never mutates the agent") {
    EnvConfig env;
    env.track.map_resolution = 400;
    HeuristicAgent agent(env);
    const auto r1 = hn::evaluate(agent, env, 5);
    const auto r2 = hn::evaluate(agent, env, 5);
    CHECK(r1.mean_episodic_reward == r2.mean_episodic_reward);
    CHECK(r1.completed_episodes == r2.completed_episodes);
    CHECK(r1.episodes.size() == 5);
    for (const auto& e : r1.episodes) CHECK(e.length > 0);
}

TEST_CASE("heuristic policy completes laps (environment is solvable)") {
    EnvConfig env;
    env.track.map_resolution = 400;
    HeuristicAgent agent(env);
    const auto rep = hn::evaluate(agent, env, 10);
    CHECK(rep.completed_episodes >= 7);
    CHECK(rep.mean_episodic_reward > 1.0);
}

TEST_CASE("aggregate: moving average and confidence band arithmetic") {
    const std::vector<double> v = {1, 2, 3, 4, 5, 6};
    const auto ma = hn::moving_average(v, 3);
    CHECK(ma[0] == doctest::Approx(1.0));
    CHECK(ma[1] == doctest::Approx(1.5));
    CHECK(ma[2] == doctest::Approx(2.0));
    CHECK(ma[5] == doctest::Approx(5.0));

    // two seeds with constant returns 1 and 3: mean 2, band from sd=1, n=2
    hn::CurveLog l1, l2;
    l1.algorithm = l2.algorithm = "x";
    l1.seed = 1;
    l2.seed = 2;
    for (int i = 0; i < 30; ++i) {
        l1.episodes.push_back({i, 1.0, 5, 0.0, Termination::timeout});
        l2.episodes.push_back({i, 3.0, 5, 0.0, Termination::timeout});
    }
    const auto agg = hn::aggregate_curves({l1, l2}, 4);
    CHECK(agg.mean[10] == doctest::Approx(2.0));
    const double half = 1.96 * 1.0 / std::sqrt(2.0);
    CHECK(agg.hi[10] - agg.mean[10] == doctest::Approx(half));
    CHECK(agg.mean[10] - agg.lo[10] == doctest::Approx(half));

    // single seed: zero-width band
    const auto solo = hn::aggregate_curves({l1}, 4);
    CHECK(solo.hi[10] == doctest::Approx(solo.lo[10]));

    // truncation to the shortest seed
    l2.episodes.resize(12);
    CHECK(hn::aggregate_curves({l1, l2}).mean.size() == 12);

    CHECK_THROWS_AS(hn::aggregate_curves({}), std::invalid_argument);
    hn::CurveLog other = l1;
    other.algorithm = "y";
    CHECK_THROWS_AS(hn::aggregate_curves({l1, other}), std::invalid_argument);
}

TEST_CASE("curve CSV: schema and round trip") {
    hn::CurveLog log;
    log.algorithm = "sac";
    log.seed = 99;
    log.episodes.push_back({0, 1.25, 17, 0.5, Termination::off_track});
    log.episodes.push_back({1, -0.5, 9, 0.9, Termination::too_slow});
    const std::string csv = hn::curve_to_csv(log);
    CHECK(csv.rfind("episode,return,length,seed\n", 0) == 0);
    const auto back = hn::curves_from_csv(csv, "sac");
    REQUIRE(back.size() == 1);
    CHECK(back[0].seed == 99);
    REQUIRE(back[0].episodes.size() == 2);
    CHECK(back[0].episodes[0].episode_return == 1.25);
    CHECK(back[0].episodes[1].length == 9);
    CHECK_THROWS_AS(hn::curves_from_csv("bogus\n1,2,3,4\n", "x"), std::invalid_argument);
}

TEST_CASE("race: shared track, bit-exact replay, json round trip") {
    EnvConfig env;
    env.track.map_resolution = 400;
    HeuristicAgent h1(env), h2(env);
    const auto replay = hn::race({&h1, &h2}, env, 42);
    REQUIRE(replay.agents.size() == 2);
    // both drove the same track: identical start position
    CHECK(replay.agents[0].positions[0].x == replay.agents[1].positions[0].x);
    CHECK(replay.agents[0].positions.size() == replay.agents[0].actions.size() + 1);
    CHECK(hn::validate_replay(replay));

    const auto j = hn::to_json(replay);
    const auto back = hn::replay_from_json(nlohmann::json::parse(j.dump()), env);
    CHECK(hn::validate_replay(back));

    // a corrupted action trace fails validation
    auto broken = replay;
    // flip the throttle to the opposite extreme; a mere offset could be
    // clamped back onto the recorded value
    broken.agents[0].actions[3][0] = broken.agents[0].actions[3][0] > 0.0 ? -1.0 : 1.0;
    CHECK_FALSE(hn::validate_replay(broken));

    CHECK_THROWS_AS(hn::race({}, env, 1), std::invalid_argument);
}

TEST_CASE("eval report json carries the table-row fields") {
    EnvConfig env;
    env.track.map_resolution = 400;
    HeuristicAgent agent(env);
    const auto rep = hn::evaluate(agent, env, 3);
    const auto j = hn::to_json(rep);
    CHECK(j.contains("completed"));
    CHECK(j.contains("mean_reward"));
    CHECK(j.contains("mean_speed"));
    CHECK(j.at("episodes").size() == 3);
}

TEST_CASE("io: pgm and svg artifacts are written and well-formed") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "microracer_io_test";
    fs::create_directories(dir);

    TrackConfig tc;
    tc.rng_seed = 5;
    tc.map_resolution = 400;
    const auto gt = generate_track(tc);
    const std::string pgm_path = (dir / "t.pgm").string();
    io::write_pgm(gt.map, pgm_path);
    const std::string pgm = io::read_file(pgm_path);
    CHECK(pgm.rfind("P5\n400 400\n255\n", 0) == 0);
    CHECK(pgm.size() == std::string("P5\n400 400\n255\n").size() + 400 * 400);

    const std::string svg = io::track_svg(gt.borders, gt.map, {{"demo", "blue", {{0, 0.6}, {0.1, 0.6}}}});
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("polygon") != std::string::npos);
    CHECK(svg.find("demo") != std::string::npos);

    const std::string curves =
        io::curves_svg({{"sac", "blue", {0.1, 0.4, 0.8}, {0.0, 0.3, 0.7}, {0.2, 0.5, 0.9}}});
    CHECK(curves.find("polyline") != std::string::npos);
    CHECK(curves.find("fill-opacity") != std::string::npos);

    CHECK_THROWS_AS(io::read_file((dir / "missing.txt").string()), std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("train: all six algorithms run a short budget without issue") {
    for (const auto& algo : agents::known_algorithms()) {
        auto cfg = quick_config(algo);
        cfg.total_steps = 400;
        cfg.hp.warmup_steps = 64;
        cfg.total_episodes = 1;
        const auto res = hn::train(cfg, 11);
        CHECK_FALSE(res.diverged);
        CHECK(!res.log.episodes.empty());
        CHECK(res.checkpoint.at("algo") == algo);
    }
}
