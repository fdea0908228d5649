#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "microracer/agents/common.hpp"

namespace microracer::agents {

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

/// Generalized advantage estimation over one trajectory.
/// dones[t] marks a true terminal at step t (no bootstrapping past it);
/// bootstrap_value is V(s_T) used when the trajectory was truncated.
inline GaeResult gae_compute(const std::vector<double>& rewards,
                             const std::vector<double>& values,
                             const std::vector<std::uint8_t>& dones, double bootstrap_value,
                             double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (n == 0) throw std::invalid_argument("gae_compute: empty trajectory");
    GaeResult out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double adv = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const double not_done = dones[t] ? 0.0 : 1.0;
        const double v_next = (t + 1 < n) ? values[t + 1] : bootstrap_value;
        const double delta = rewards[t] + gamma * v_next * not_done - values[t];
        adv = delta + gamma * lambda * not_done * adv;
        out.advantages[t] = adv;
        out.returns[t] = adv + values[t];
    }
    return out;
}

/// PPO with clipped surrogate, entropy bonus, per-update advantage
/// normalization, and KL-based early stopping of the epoch loop. The policy
/// is a Gaussian with a tanh-bounded mean network and a learnable
/// state-independent log-std per action dimension.
class PpoAgent : public Agent {
public:
    PpoAgent(const Hyperparams& hp, std::uint64_t seed)
        : hp_(hp),
          rng_(derive_seed(seed, 0x990ULL)),
          log_std_(kActDim, hp.ppo_init_log_std),
          log_std_adam_(kActDim, hp.ppo_lr) {
        using nn::Activation;
        actor_ = nn::Mlp({kObsDim, 64, 64, kActDim},
                         {Activation::tanh, Activation::tanh, Activation::tanh});
        critic_ = nn::Mlp({kObsDim, 64, 64, 1},
                          {Activation::tanh, Activation::tanh, Activation::linear});
        nn::init_uniform_fan_in(actor_, rng_, 3e-3);
        nn::init_uniform_fan_in(critic_, rng_);
        actor_adam_ = nn::AdamState::for_net(actor_, hp_.ppo_lr);
        critic_adam_ = nn::AdamState::for_net(critic_, hp_.ppo_lr);
    }

    std::string algo() const override { return "ppo"; }

    bool uses_random_warmup() const override { return false; }

    Action select_action(const Observation& obs, Mode mode) override {
        const auto x = obs_to_vec(obs);
        const auto mu = actor_.forward(x);
        if (mode == Mode::eval) return Action{mu[0], mu[1]};
        std::vector<double> a(kActDim);
        for (int i = 0; i < kActDim; ++i)
            a[i] = std::clamp(mu[i] + std::exp(log_std_[i]) * rng_.normal(), -1.0, 1.0);
        // cache for the record() that follows this draw
        pending_log_prob_ = log_prob(a, mu);
        pending_value_ = critic_.forward(x)[0];
        pending_valid_ = true;
        return Action{a[0], a[1]};
    }

    void record(const Observation& obs, const Action& action, const StepResult& r) override {
        Step s;
        const auto sv = obs.as_array();
        s.state.assign(sv.begin(), sv.end());
        s.action = {action.clamped().acceleration, action.clamped().turn};
        if (pending_valid_) {
            s.log_prob = pending_log_prob_;
            s.value = pending_value_;
        } else {
            s.log_prob = log_prob(s.action, actor_.forward(s.state));
            s.value = critic_.forward(s.state)[0];
        }
        pending_valid_ = false;
        s.reward = r.reward;
        s.done = terminal_for_bootstrap(r.cause);
        const auto nv = r.observation.as_array();
        last_next_state_.assign(nv.begin(), nv.end());
        last_terminal_ = s.done;
        traj_.push_back(std::move(s));
    }

    void end_episode() override {
        if (traj_.empty()) return;
        const double bootstrap = last_terminal_ ? 0.0 : critic_.forward(last_next_state_)[0];
        run_update(bootstrap);
        traj_.clear();
    }

    nlohmann::json checkpoint() const override {
        return {{"format", "microracer-checkpoint-v1"},
                {"algo", algo()},
                {"nets", {{"actor", nn::to_json(actor_)}, {"critic", nn::to_json(critic_)}}},
                {"log_std", log_std_}};
    }

    void load(const nlohmann::json& j) override {
        actor_ = nn::mlp_from_json(j.at("nets").at("actor"));
        critic_ = nn::mlp_from_json(j.at("nets").at("critic"));
        log_std_ = j.at("log_std").get<std::vector<double>>();
    }

    const nn::Mlp& actor() const { return actor_; }
    const nn::Mlp& critic() const { return critic_; }
    const std::vector<double>& log_std() const { return log_std_; }
    int last_update_epochs() const { return last_update_epochs_; }
    double last_initial_ratio() const { return last_initial_ratio_; }

private:
    struct Step {
        std::vector<double> state;
        std::vector<double> action;
        double log_prob = 0.0;
        double value = 0.0;
        double reward = 0.0;
        bool done = false;
    };

    double log_prob(const std::vector<double>& a, const std::vector<double>& mu) const {
        double lp = 0.0;
        for (int i = 0; i < kActDim; ++i) {
            const double sd = std::exp(log_std_[i]);
            const double z = (a[i] - mu[i]) / sd;
            lp += -0.5 * z * z - log_std_[i] - 0.5 * std::log(2.0 * M_PI);
        }
        return lp;
    }

    void run_update(double bootstrap) {
        const std::size_t n = traj_.size();
        std::vector<double> rewards(n), values(n);
        std::vector<std::uint8_t> dones(n);
        for (std::size_t i = 0; i < n; ++i) {
            rewards[i] = traj_[i].reward;
            values[i] = traj_[i].value;
            dones[i] = traj_[i].done ? 1 : 0;
        }
        auto gae = gae_compute(rewards, values, dones, bootstrap, hp_.gamma, hp_.gae_lambda);

        // normalize advantages over the update batch
        double mean = std::accumulate(gae.advantages.begin(), gae.advantages.end(), 0.0) / n;
        double var = 0.0;
        for (double a : gae.advantages) var += (a - mean) * (a - mean);
        const double stdev = std::sqrt(var / n) + 1e-8;
        for (double& a : gae.advantages) a = (a - mean) / stdev;

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);

        // before any step the re-evaluated ratio must be exactly 1
        last_initial_ratio_ = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto mu = actor_.forward(traj_[i].state);
            last_initial_ratio_ += std::exp(log_prob(traj_[i].action, mu) - traj_[i].log_prob);
        }
        last_initial_ratio_ /= static_cast<double>(n);

        last_update_epochs_ = 0;
        for (int epoch = 0; epoch < hp_.ppo_epochs; ++epoch) {
            // Fisher-Yates with the agent RNG keeps runs reproducible
            for (std::size_t i = n; i-- > 1;) {
                const std::size_t j = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(i)));
                std::swap(order[i], order[j]);
            }
            for (std::size_t start = 0; start < n; start += hp_.ppo_minibatch) {
                const std::size_t stop = std::min(n, start + hp_.ppo_minibatch);
                minibatch_step(order, start, stop, gae);
            }
            last_update_epochs_ = epoch + 1;

            // approx KL(old || new) over the whole batch
            double kl = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto mu = actor_.forward(traj_[i].state);
                kl += traj_[i].log_prob - log_prob(traj_[i].action, mu);
            }
            kl /= static_cast<double>(n);
            if (kl > hp_.ppo_target_kl) break;
        }
    }

    void minibatch_step(const std::vector<std::size_t>& order, std::size_t start,
                        std::size_t stop, const GaeResult& gae) {
        const double inv_m = 1.0 / static_cast<double>(stop - start);
        auto ag = actor_.zero_grad();
        auto cg = critic_.zero_grad();
        std::vector<double> ls_grad(kActDim, 0.0);
        nn::Cache acache, ccache;
        for (std::size_t k = start; k < stop; ++k) {
            const Step& s = traj_[order[k]];
            const double adv = gae.advantages[order[k]];
            const double ret = gae.returns[order[k]];

            const auto mu = actor_.forward(s.state, &acache);
            const double new_lp = log_prob(s.action, mu);
            const double ratio = std::exp(new_lp - s.log_prob);
            if (!std::isfinite(ratio)) {
                std::fprintf(stderr, "microracer: ppo skipping sample, non-finite ratio\n");
                continue;
            }
            const double lo = 1.0 - hp_.ppo_clip, hi = 1.0 + hp_.ppo_clip;
            const double unclipped = ratio * adv;
            const double clipped = std::clamp(ratio, lo, hi) * adv;
            // gradient flows through the ratio only when it is the active
            // branch of the min
            if (unclipped <= clipped) {
                std::vector<double> mu_grad(kActDim);
                for (int i = 0; i < kActDim; ++i) {
                    const double sd = std::exp(log_std_[i]);
                    const double z = (s.action[i] - mu[i]) / sd;
                    const double dr_dmu = ratio * z / sd;
                    const double dr_dls = ratio * (z * z - 1.0);
                    mu_grad[i] = -adv * dr_dmu * inv_m;
                    ls_grad[i] += -adv * dr_dls * inv_m;
                }
                actor_.backward(acache, mu_grad, ag);
            }
            // entropy bonus: d(entropy)/d(log_std_i) = 1
            for (int i = 0; i < kActDim; ++i) ls_grad[i] += -hp_.ppo_entropy_coef * inv_m;

            const double v = critic_.forward(s.state, &ccache)[0];
            critic_.backward(ccache, {2.0 * (v - ret) * inv_m}, cg);
        }
        nn::adam_step(actor_, ag, actor_adam_);
        nn::adam_step(critic_, cg, critic_adam_);
        log_std_adam_.apply(log_std_, ls_grad);
    }

    Hyperparams hp_;
    Rng rng_;
    nn::Mlp actor_, critic_;
    std::vector<double> log_std_;
    nn::AdamState actor_adam_, critic_adam_;
    VecAdam log_std_adam_;

    std::vector<Step> traj_;
    std::vector<double> last_next_state_;
    bool last_terminal_ = false;
    double pending_log_prob_ = 0.0;
    double pending_value_ = 0.0;
    bool pending_valid_ = false;
    int last_update_epochs_ = 0;
    double last_initial_ratio_ = 1.0;
};

}  // namespace microracer::agents
