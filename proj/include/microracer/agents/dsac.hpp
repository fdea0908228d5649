#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "microracer/agents/sac.hpp"

namespace microracer::agents {

/// DSAC: SAC with the twin scalar critics replaced by a single
/// distributional critic predicting a Gaussian (mean, deviation) over the
/// return. The critic is trained by negative log-likelihood of the soft TD
/// target, with the target clamped into a band around the target-network
/// mean and the deviation floored.
class DsacAgent : public Agent {
public:
    DsacAgent(const Hyperparams& hp, std::uint64_t seed)
        : hp_(hp),
          rng_(derive_seed(seed, 0xD5ACULL)),
          buffer_(hp.buffer_capacity),
          log_alpha_(1, std::log(0.2)),
          alpha_adam_(1, hp.actor_lr) {
        actor_ = nn::GaussianHead({kObsDim, 64, 64}, kActDim);
        actor_.init(rng_, 3e-3);
        // same 64-64 trunk shape as the actor, over (state, action);
        // sigma floor = dsac_min_sigma via the log clamp
        critic_ = nn::GaussianHead({kObsDim + kActDim, 64, 64}, 1,
                                   std::log(hp_.dsac_min_sigma), std::log(100.0));
        critic_.init(rng_);
        critic_target_ = critic_;
        actor_trunk_adam_ = nn::AdamState::for_net(actor_.trunk, hp_.actor_lr);
        actor_mu_adam_ = nn::AdamState::for_net(actor_.mu_head, hp_.actor_lr);
        actor_sigma_adam_ = nn::AdamState::for_net(actor_.sigma_head, hp_.actor_lr);
        critic_trunk_adam_ = nn::AdamState::for_net(critic_.trunk, hp_.critic_lr);
        critic_mu_adam_ = nn::AdamState::for_net(critic_.mu_head, hp_.critic_lr);
        critic_sigma_adam_ = nn::AdamState::for_net(critic_.sigma_head, hp_.critic_lr);
    }

    std::string algo() const override { return "dsac"; }

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

        auto cg = critic_.zero_grad();
        nn::GaussianHead::HeadCache ccache;
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
                const auto q_next = critic_target_.forward(concat_sa(s2, smp.a)).first[0];
                y += hp_.gamma * (q_next - a_temp * smp.log_prob);
            }
            const auto sa = concat_sa(s, a);
            const double q_anchor = critic_target_.forward(sa).first[0];
            y = std::clamp(y, q_anchor - hp_.dsac_boundary, q_anchor + hp_.dsac_boundary);

            const auto [mu, sigma] = critic_.forward(sa, &ccache);
            const double m = mu[0], sd = sigma[0];
            // Gaussian NLL: 0.5*((y-m)/sd)^2 + log sd
            const std::vector<double> mu_grad = {(m - y) / (sd * sd) * inv_b};
            const std::vector<double> sigma_grad = {
                (1.0 / sd - (y - m) * (y - m) / (sd * sd * sd)) * inv_b};
            critic_.backward(ccache, mu_grad, sigma_grad, cg);
        }
        nn::adam_step(critic_.trunk, cg.trunk, critic_trunk_adam_);
        nn::adam_step(critic_.mu_head, cg.mu, critic_mu_adam_);
        nn::adam_step(critic_.sigma_head, cg.sigma, critic_sigma_adam_);

        // actor and temperature as in SAC, on the critic mean
        auto ag = actor_.zero_grad();
        nn::GaussianHead::HeadCache acache;
        auto scratch = critic_.zero_grad();
        double mean_logp = 0.0;
        for (const Transition* t : batch) {
            const std::vector<double> s(t->state.begin(), t->state.end());
            const auto [mu, sigma] = actor_.forward(s, &acache);
            std::vector<double> eps(kActDim);
            for (double& e : eps) e = rng_.normal();
            const auto smp = squash_with_noise(mu, sigma, eps);
            mean_logp += smp.log_prob * inv_b;

            critic_.forward(concat_sa(s, smp.a), &ccache);
            std::vector<double> dsa;
            critic_.backward(ccache, {1.0}, {0.0}, scratch, &dsa);

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

        update_count_ += 1;
        if (update_count_ % hp_.policy_delay == 0) {
            nn::soft_update(critic_target_.trunk, critic_.trunk, hp_.tau);
            nn::soft_update(critic_target_.mu_head, critic_.mu_head, hp_.tau);
            nn::soft_update(critic_target_.sigma_head, critic_.sigma_head, hp_.tau);
        }
    }

    nlohmann::json checkpoint() const override {
        nlohmann::json nets;
        nets["actor"] = nn::to_json(actor_);
        nets["critic"] = nn::to_json(critic_);
        nets["critic_target"] = nn::to_json(critic_target_);
        return {{"format", "microracer-checkpoint-v1"},
                {"algo", algo()},
                {"nets", nets},
                {"log_alpha", log_alpha_[0]},
                {"update_count", update_count_}};
    }

    void load(const nlohmann::json& j) override {
        const auto& nets = j.at("nets");
        actor_ = nn::gaussian_head_from_json(nets.at("actor"));
        critic_ = nn::gaussian_head_from_json(nets.at("critic"));
        critic_target_ = nn::gaussian_head_from_json(nets.at("critic_target"));
        log_alpha_[0] = j.value("log_alpha", std::log(0.2));
        update_count_ = j.value("update_count", 0L);
    }

    const nn::GaussianHead& actor() const { return actor_; }
    const nn::GaussianHead& critic() const { return critic_; }
    ReplayBuffer& buffer() { return buffer_; }

private:
    Hyperparams hp_;
    Rng rng_;
    ReplayBuffer buffer_;
    nn::GaussianHead actor_, critic_, critic_target_;
    nn::AdamState actor_trunk_adam_, actor_mu_adam_, actor_sigma_adam_;
    nn::AdamState critic_trunk_adam_, critic_mu_adam_, critic_sigma_adam_;
    std::vector<double> log_alpha_;
    VecAdam alpha_adam_;
    long update_count_ = 0;
};

}  // namespace microracer::agents
