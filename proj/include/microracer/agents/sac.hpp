#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "microracer/agents/td3.hpp"

namespace microracer::agents {

constexpr double kSquashEps = 1e-6;
constexpr double kLogTwoPi = 1.8378770664093453;

/// Reparameterized squashed-Gaussian draw: a = tanh(mu + sigma*eps), with
/// the tanh-corrected log density.
struct SquashedSample {
    std::vector<double> u;
    std::vector<double> a;
    double log_prob = 0.0;
};

inline SquashedSample squash_with_noise(const std::vector<double>& mu,
                                        const std::vector<double>& sigma,
                                        const std::vector<double>& eps) {
    SquashedSample s;
    const std::size_t n = mu.size();
    s.u.resize(n);
    s.a.resize(n);
    s.log_prob = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s.u[i] = mu[i] + sigma[i] * eps[i];
        s.a[i] = std::tanh(s.u[i]);
        s.log_prob += -0.5 * eps[i] * eps[i] - std::log(sigma[i]) - 0.5 * kLogTwoPi -
                      std::log(1.0 - s.a[i] * s.a[i] + kSquashEps);
    }
    return s;
}

/// d(log_prob)/du for one component, with the squash correction's epsilon
/// kept exact so finite differences agree.
inline double dlogp_du(double a) {
    const double one_m = 1.0 - a * a;
    return 2.0 * a * one_m / (one_m + kSquashEps);
}

/// SAC: squashed-Gaussian actor, twin critics with min target, entropy
/// bonus with a temperature adapted toward a target entropy.
class SacAgent : public Agent {
public:
    SacAgent(const Hyperparams& hp, std::uint64_t seed)
        : hp_(hp),
          rng_(derive_seed(seed, 0x5ACULL)),
          buffer_(hp.buffer_capacity),
          log_alpha_(1, std::log(0.2)),
          alpha_adam_(1, hp.actor_lr) {
        actor_ = nn::GaussianHead({kObsDim, 64, 64}, kActDim);
        actor_.init(rng_, 3e-3);
        q1_ = make_q_net();
        q2_ = make_q_net();
        nn::init_uniform_fan_in(q1_, rng_);
        nn::init_uniform_fan_in(q2_, rng_);
        q1_target_ = q1_;
        q2_target_ = q2_;
        q1_adam_ = nn::AdamState::for_net(q1_, hp_.critic_lr);
        q2_adam_ = nn::AdamState::for_net(q2_, hp_.critic_lr);
        actor_trunk_adam_ = nn::AdamState::for_net(actor_.trunk, hp_.actor_lr);
        actor_mu_adam_ = nn::AdamState::for_net(actor_.mu_head, hp_.actor_lr);
        actor_sigma_adam_ = nn::AdamState::for_net(actor_.sigma_head, hp_.actor_lr);
    }

    std::string algo() const override { return "sac"; }

    double alpha() const { return std::exp(log_alpha_[0]); }

    Action select_action(const Observation& obs, Mode mode) override {
        const auto [mu, sigma] = actor_.forward(obs_to_vec(obs));
        if (mode == Mode::eval) return Action{std::tanh(mu[0]), std::tanh(mu[1])};
        std::vector<double> eps(kActDim);
        for (double& e : eps) e = rng_.normal();
        const auto s = squash_with_noise(mu, sigma, eps);
        return Action{s.a[0], s.a[1]};
    }

    void record(const Observation& obs, const Action& action, const StepResult& r) override {
        buffer_.push(make_transition(obs, action, r));
    }

    bool ready_to_update() const override {
        return buffer_.size() >= static_cast<std::size_t>(hp_.batch_size);
    }

    void update() override {
        const auto batch = buffer_.sample(hp_.batch_size, rng_);
        const double inv_b = 1.0 / hp_.batch_size;
        const double a_temp = alpha();

        // critic targets: y = r + gamma*(1-done)*(min Q_target(s',a') - alpha*logp')
        auto g1 = q1_.zero_grad();
        auto g2 = q2_.zero_grad();
        nn::Cache cache;
        for (const Transition* t : batch) {
            const std::vector<double> s(t->state.begin(), t->state.end());
            const std::vector<double> a(t->action.begin(), t->action.end());
            const std::vector<double> s2(t->next_state.begin(), t->next_state.end());
            double y = t->reward;
            if (!t->done) {
                const auto [mu2, sig2] = actor_.forward(s2);
                std::vector<double> eps(kActDim);
                for (double& e : eps) e = rng_.normal();
                const auto smp = squash_with_noise(mu2, sig2, eps);
                const auto sa2 = concat_sa(s2, smp.a);
                const double qmin =
                    std::min(q1_target_.forward(sa2)[0], q2_target_.forward(sa2)[0]);
                y += hp_.gamma * (qmin - a_temp * smp.log_prob);
            }
            const auto sa = concat_sa(s, a);
            const double v1 = q1_.forward(sa, &cache)[0];
            q1_.backward(cache, {2.0 * (v1 - y) * inv_b}, g1);
            const double v2 = q2_.forward(sa, &cache)[0];
            q2_.backward(cache, {2.0 * (v2 - y) * inv_b}, g2);
        }
        nn::adam_step(q1_, g1, q1_adam_);
        nn::adam_step(q2_, g2, q2_adam_);

        // actor: minimize alpha*logp - min Q(s, a(s)); temperature: drive the
        // expected log-prob toward the target entropy
        auto ag = actor_.zero_grad();
        nn::GaussianHead::HeadCache acache;
        auto scratch1 = q1_.zero_grad();
        auto scratch2 = q2_.zero_grad();
        double mean_logp = 0.0;
        for (const Transition* t : batch) {
            const std::vector<double> s(t->state.begin(), t->state.end());
            const auto [mu, sigma] = actor_.forward(s, &acache);
            std::vector<double> eps(kActDim);
            for (double& e : eps) e = rng_.normal();
            const auto smp = squash_with_noise(mu, sigma, eps);
            mean_logp += smp.log_prob * inv_b;

            const auto sa = concat_sa(s, smp.a);
            const double v1 = q1_.forward(sa, &cache)[0];
            nn::Cache cache2;
            const double v2 = q2_.forward(sa, &cache2)[0];
            std::vector<double> dsa;
            if (v1 <= v2)
                q1_.backward(cache, {1.0}, scratch1, &dsa);
            else
                q2_.backward(cache2, {1.0}, scratch2, &dsa);

            std::vector<double> mu_grad(kActDim), sigma_grad(kActDim);
            for (int i = 0; i < kActDim; ++i) {
                const double dq_da = dsa[kObsDim + i];
                const double du = (-dq_da * (1.0 - smp.a[i] * smp.a[i]) +
                                   a_temp * dlogp_du(smp.a[i])) *
                                  inv_b;
                mu_grad[i] = du;
                sigma_grad[i] = du * eps[i] - a_temp / sigma[i] * inv_b;
            }
            actor_.backward(acache, mu_grad, sigma_grad, ag);
        }
        nn::adam_step(actor_.trunk, ag.trunk, actor_trunk_adam_);
        nn::adam_step(actor_.mu_head, ag.mu, actor_mu_adam_);
        nn::adam_step(actor_.sigma_head, ag.sigma, actor_sigma_adam_);

        const std::vector<double> alpha_grad = {-(mean_logp + hp_.target_entropy)};
        alpha_adam_.apply(log_alpha_, alpha_grad);

        nn::soft_update(q1_target_, q1_, hp_.tau);
        nn::soft_update(q2_target_, q2_, hp_.tau);
    }

    nlohmann::json checkpoint() const override {
        nlohmann::json nets;
        nets["actor"] = nn::to_json(actor_);
        nets["q1"] = nn::to_json(q1_);
        nets["q2"] = nn::to_json(q2_);
        nets["q1_target"] = nn::to_json(q1_target_);
        nets["q2_target"] = nn::to_json(q2_target_);
        return {{"format", "microracer-checkpoint-v1"},
                {"algo", algo()},
                {"nets", nets},
                {"log_alpha", log_alpha_[0]}};
    }

    void load(const nlohmann::json& j) override {
        const auto& nets = j.at("nets");
        actor_ = nn::gaussian_head_from_json(nets.at("actor"));
        q1_ = nn::mlp_from_json(nets.at("q1"));
        q2_ = nn::mlp_from_json(nets.at("q2"));
        q1_target_ = nn::mlp_from_json(nets.at("q1_target"));
        q2_target_ = nn::mlp_from_json(nets.at("q2_target"));
        log_alpha_[0] = j.value("log_alpha", std::log(0.2));
    }

    const nn::GaussianHead& actor() const { return actor_; }
    ReplayBuffer& buffer() { return buffer_; }

private:
    Hyperparams hp_;
    Rng rng_;
    ReplayBuffer buffer_;
    nn::GaussianHead actor_;
    nn::Mlp q1_, q2_, q1_target_, q2_target_;
    nn::AdamState q1_adam_, q2_adam_, actor_trunk_adam_, actor_mu_adam_, actor_sigma_adam_;
    std::vector<double> log_alpha_;
    VecAdam alpha_adam_;
};

}  // namespace microracer::agents
