#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "microracer/env.hpp"
#include "microracer/nn.hpp"
#include "microracer/rng.hpp"

namespace microracer::agents {

constexpr int kObsDim = 5;
constexpr int kActDim = 2;

inline std::vector<double> obs_to_vec(const Observation& o) {
    return {o.alpha_max, o.d_prev, o.d_max, o.d_next, o.speed};
}

struct Hyperparams {
    double gamma = 0.99;
    double tau = 0.005;
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;

    double exploration_noise_std = 0.1;  // DDPG, TD3 behavior noise
    double parameter_noise_std = 0.2;    // DDPG2
    int policy_delay = 2;                // TD3 actor/target cadence, DSAC target cadence
    double target_noise_std = 0.1;       // TD3 target policy smoothing
    double target_noise_clip = 0.5;
    double target_entropy = -static_cast<double>(kActDim);  // SAC, DSAC
    double dsac_min_sigma = 1.0;
    double dsac_boundary = 10.0;

    double ppo_lr = 3e-4;
    int ppo_epochs = 10;
    int ppo_minibatch = 64;
    double gae_lambda = 0.95;
    double ppo_clip = 0.25;
    double ppo_entropy_coef = 0.01;
    double ppo_target_kl = 0.01;
    double ppo_init_log_std = std::log(0.3);

    std::size_t buffer_capacity = 50000;
    int batch_size = 64;
    int warmup_steps = 1000;
};

struct Transition {
    std::array<double, kObsDim> state{};
    std::array<double, kActDim> action{};
    double reward = 0.0;
    std::array<double, kObsDim> next_state{};
    bool done = false;  // terminal by failure or completion; timeout bootstraps
};

/// FIFO ring buffer with uniform sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(const Transition& t) {
        if (data_.size() < capacity_) {
            data_.push_back(t);
        } else {
            data_[head_] = t;
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return data_[i]; }

    std::vector<const Transition*> sample(int batch, Rng& rng) const {
        if (static_cast<int>(data_.size()) < batch)
            throw std::logic_error("ReplayBuffer::sample: not enough transitions");
        std::vector<const Transition*> out(batch);
        for (int i = 0; i < batch; ++i)
            out[i] = &data_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(data_.size()) - 1))];
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> data_;
};

/// Adam over a raw parameter vector (PPO log-std, SAC temperature).
struct VecAdam {
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    std::vector<double> m, v;

    explicit VecAdam(std::size_t n = 0, double lr_ = 1e-3)
        : lr(lr_), m(n, 0.0), v(n, 0.0) {}

    void apply(std::vector<double>& p, const std::vector<double>& g) {
        step += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(g[i])) throw std::runtime_error("VecAdam: non-finite gradient");
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

enum class Mode { train, eval };

/// Common learner interface driven by the training harness.
class Agent {
public:
    virtual ~Agent() = default;

    virtual std::string algo() const = 0;

    virtual Action select_action(const Observation& obs, Mode mode) = 0;

    /// Record one environment step (obs was the state the action was taken in).
    virtual void record(const Observation& obs, const Action& action, const StepResult& result) = 0;

    /// One gradient update (off-policy agents). PPO updates in end_episode.
    virtual void update() {}

    virtual void end_episode() {}

    virtual bool ready_to_update() const { return false; }

    /// Off-policy agents warm up on uniform random actions before updating.
    virtual bool uses_random_warmup() const { return true; }

    virtual nlohmann::json checkpoint() const = 0;
    virtual void load(const nlohmann::json& j) = 0;
};

inline bool terminal_for_bootstrap(Termination cause) {
    return cause == Termination::off_track || cause == Termination::too_slow ||
           cause == Termination::completed;
}

inline Transition make_transition(const Observation& s, const Action& a, const StepResult& r) {
    Transition t;
    const auto sv = s.as_array();
    const auto nv = r.observation.as_array();
    for (int i = 0; i < kObsDim; ++i) {
        t.state[i] = sv[i];
        t.next_state[i] = nv[i];
    }
    const Action ac = a.clamped();
    t.action = {ac.acceleration, ac.turn};
    t.reward = r.reward;
    t.done = terminal_for_bootstrap(r.cause);
    return t;
}

std::unique_ptr<Agent> make_agent(const std::string& algo, const Hyperparams& hp,
                                  std::uint64_t seed);
std::unique_ptr<Agent> agent_from_checkpoint(const nlohmann::json& j);

}  // namespace microracer::agents
