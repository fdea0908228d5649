#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "microracer/agents/common.hpp"

namespace microracer::agents {

/// Scalar critic over the concatenated (observation, action) vector.
inline nn::Mlp make_q_net() {
    using nn::Activation;
    return nn::Mlp({kObsDim + kActDim, 64, 64, 1},
                   {Activation::relu, Activation::relu, Activation::linear});
}

inline nn::Mlp make_flat_actor() {
    using nn::Activation;
    return nn::Mlp({kObsDim, 64, 64, kActDim},
                   {Activation::relu, Activation::relu, Activation::tanh});
}

inline std::vector<double> concat_sa(const std::vector<double>& s, const std::vector<double>& a) {
    std::vector<double> x;
    x.reserve(s.size() + a.size());
    x.insert(x.end(), s.begin(), s.end());
    x.insert(x.end(), a.begin(), a.end());
    return x;
}

/// TD3: twin critics with min-target, delayed actor/target updates, and
/// clipped noise on the target action.
class Td3Agent : public Agent {
public:
    Td3Agent(const Hyperparams& hp, std::uint64_t seed)
        : hp_(hp), rng_(derive_seed(seed, 0x7D3ULL)), buffer_(hp.buffer_capacity) {
        actor_ = make_flat_actor();
        nn::init_uniform_fan_in(actor_, rng_, 3e-3);
        q1_ = make_q_net();
        q2_ = make_q_net();
        nn::init_uniform_fan_in(q1_, rng_);
        nn::init_uniform_fan_in(q2_, rng_);
        actor_target_ = actor_;
        q1_target_ = q1_;
        q2_target_ = q2_;
        actor_adam_ = nn::AdamState::for_net(actor_, hp_.actor_lr);
        q1_adam_ = nn::AdamState::for_net(q1_, hp_.critic_lr);
        q2_adam_ = nn::AdamState::for_net(q2_, hp_.critic_lr);
    }

    std::string algo() const override { return "td3"; }

    Action select_action(const Observation& obs, Mode mode) override {
        auto a = actor_.forward(obs_to_vec(obs));
        if (mode == Mode::train)
            for (double& v : a) v += rng_.normal(0.0, hp_.exploration_noise_std);
        return Action{a[0], a[1]}.clamped();
    }

    void record(const Observation& obs, const Action& action, const StepResult& r) override {
        buffer_.push(make_transition(obs, action, r));
    }

    bool ready_to_update() const override {
        return buffer_.size() >= static_cast<std::size_t>(hp_.batch_size);
    }

    /// Target action with clipped smoothing noise, clamped to the action box.
    std::vector<double> smoothed_target_action(const std::vector<double>& s2) {
        auto a2 = actor_target_.forward(s2);
        for (double& v : a2) {
            const double eps = std::clamp(rng_.normal(0.0, hp_.target_noise_std),
                                          -hp_.target_noise_clip, hp_.target_noise_clip);
            v = std::clamp(v + eps, -1.0, 1.0);
        }
        return a2;
    }

    void update() override {
        const auto batch = buffer_.sample(hp_.batch_size, rng_);
        const double inv_b = 1.0 / hp_.batch_size;

        auto g1 = q1_.zero_grad();
        auto g2 = q2_.zero_grad();
        nn::Cache cache;
        for (const Transition* t : batch) {
            const std::vector<double> s(t->state.begin(), t->state.end());
            const std::vector<double> a(t->action.begin(), t->action.end());
            const std::vector<double> s2(t->next_state.begin(), t->next_state.end());
            double y = t->reward;
            if (!t->done) {
                const auto a2 = smoothed_target_action(s2);
                const auto sa2 = concat_sa(s2, a2);
                y += hp_.gamma *
                     std::min(q1_target_.forward(sa2)[0], q2_target_.forward(sa2)[0]);
            }
            const auto sa = concat_sa(s, a);
            const double v1 = q1_.forward(sa, &cache)[0];
            q1_.backward(cache, {2.0 * (v1 - y) * inv_b}, g1);
            const double v2 = q2_.forward(sa, &cache)[0];
            q2_.backward(cache, {2.0 * (v2 - y) * inv_b}, g2);
        }
        nn::adam_step(q1_, g1, q1_adam_);
        nn::adam_step(q2_, g2, q2_adam_);

        update_count_ += 1;
        if (update_count_ % hp_.policy_delay != 0) return;

        // delayed actor step: ascend Q1(s, pi(s))
        auto ga = actor_.zero_grad();
        nn::Cache acache;
        auto scratch = q1_.zero_grad();
        for (const Transition* t : batch) {
            const std::vector<double> s(t->state.begin(), t->state.end());
            const auto a = actor_.forward(s, &acache);
            q1_.forward(concat_sa(s, a), &cache);
            std::vector<double> dsa;
            q1_.backward(cache, {-inv_b}, scratch, &dsa);
            const std::vector<double> da(dsa.begin() + kObsDim, dsa.end());
            actor_.backward(acache, da, ga);
        }
        nn::adam_step(actor_, ga, actor_adam_);

        nn::soft_update(actor_target_, actor_, hp_.tau);
        nn::soft_update(q1_target_, q1_, hp_.tau);
        nn::soft_update(q2_target_, q2_, hp_.tau);
    }

    nlohmann::json checkpoint() const override {
        nlohmann::json nets;
        nets["actor"] = nn::to_json(actor_);
        nets["q1"] = nn::to_json(q1_);
        nets["q2"] = nn::to_json(q2_);
        nets["actor_target"] = nn::to_json(actor_target_);
        nets["q1_target"] = nn::to_json(q1_target_);
        nets["q2_target"] = nn::to_json(q2_target_);
        return {{"format", "microracer-checkpoint-v1"},
                {"algo", algo()},
                {"nets", nets},
                {"update_count", update_count_}};
    }

    void load(const nlohmann::json& j) override {
        const auto& nets = j.at("nets");
        actor_ = nn::mlp_from_json(nets.at("actor"));
        q1_ = nn::mlp_from_json(nets.at("q1"));
        q2_ = nn::mlp_from_json(nets.at("q2"));
        actor_target_ = nn::mlp_from_json(nets.at("actor_target"));
        q1_target_ = nn::mlp_from_json(nets.at("q1_target"));
        q2_target_ = nn::mlp_from_json(nets.at("q2_target"));
        update_count_ = j.value("update_count", 0L);
    }

    // exposed for tests
    const nn::Mlp& actor() const { return actor_; }
    nn::Mlp& q1() { return q1_; }
    nn::Mlp& q2() { return q2_; }
    long update_count() const { return update_count_; }
    ReplayBuffer& buffer() { return buffer_; }

private:
    Hyperparams hp_;
    Rng rng_;
    ReplayBuffer buffer_;
    nn::Mlp actor_, q1_, q2_;
    nn::Mlp actor_target_, q1_target_, q2_target_;
    nn::AdamState actor_adam_, q1_adam_, q2_adam_;
    long update_count_ = 0;
};

}  // namespace microracer::agents
