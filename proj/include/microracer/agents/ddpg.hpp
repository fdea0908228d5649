#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "microracer/agents/common.hpp"

namespace microracer::agents {

/// Deterministic actor with one 32-32 relu tower per action: one tower
/// outputs the acceleration, the other the turn, both tanh-bounded. Both
/// towers see the full observation.
struct TwoTowerActor {
    nn::Mlp acc_tower;
    nn::Mlp turn_tower;

    TwoTowerActor() {
        using nn::Activation;
        const std::vector<int> dims = {kObsDim, 32, 32, 1};
        const std::vector<Activation> acts = {Activation::relu, Activation::relu,
                                              Activation::tanh};
        acc_tower = nn::Mlp(dims, acts);
        turn_tower = nn::Mlp(dims, acts);
    }

    void init(Rng& rng) {
        nn::init_uniform_fan_in(acc_tower, rng, 3e-3);
        nn::init_uniform_fan_in(turn_tower, rng, 3e-3);
    }

    struct Caches {
        nn::Cache acc, turn;
    };

    std::vector<double> forward(const std::vector<double>& obs, Caches* c = nullptr) const {
        const auto a = acc_tower.forward(obs, c ? &c->acc : nullptr);
        const auto t = turn_tower.forward(obs, c ? &c->turn : nullptr);
        return {a[0], t[0]};
    }

    struct Grads {
        nn::Gradients acc, turn;
    };
    Grads zero_grad() const { return {acc_tower.zero_grad(), turn_tower.zero_grad()}; }

    void backward(const Caches& c, const std::vector<double>& action_grad, Grads& accum) const {
        acc_tower.backward(c.acc, {action_grad[0]}, accum.acc);
        turn_tower.backward(c.turn, {action_grad[1]}, accum.turn);
    }

    std::size_t param_count() const { return acc_tower.param_count() + turn_tower.param_count(); }
};

/// Critic with separate state (16-32) and action (32) paths whose features
/// are concatenated into a 64-64 relu head ending in a scalar Q.
struct TwoBranchCritic {
    nn::Mlp state_path;
    nn::Mlp action_path;
    nn::Mlp head;

    TwoBranchCritic() {
        using nn::Activation;
        state_path = nn::Mlp({kObsDim, 16, 32}, {Activation::relu, Activation::relu});
        action_path = nn::Mlp({kActDim, 32}, {Activation::relu});
        head = nn::Mlp({64, 64, 64, 1},
                       {Activation::relu, Activation::relu, Activation::linear});
    }

    void init(Rng& rng) {
        nn::init_uniform_fan_in(state_path, rng);
        nn::init_uniform_fan_in(action_path, rng);
        nn::init_uniform_fan_in(head, rng, 3e-3);
    }

    struct Caches {
        nn::Cache state, action, head;
    };

    double forward(const std::vector<double>& obs, const std::vector<double>& act,
                   Caches* c = nullptr) const {
        const auto hs = state_path.forward(obs, c ? &c->state : nullptr);
        const auto ha = action_path.forward(act, c ? &c->action : nullptr);
        std::vector<double> h;
        h.reserve(hs.size() + ha.size());
        h.insert(h.end(), hs.begin(), hs.end());
        h.insert(h.end(), ha.begin(), ha.end());
        return head.forward(h, c ? &c->head : nullptr)[0];
    }

    struct Grads {
        nn::Gradients state, action, head;
    };
    Grads zero_grad() const {
        return {state_path.zero_grad(), action_path.zero_grad(), head.zero_grad()};
    }

    /// Backprop dL/dQ; optionally reports dQ-path gradient w.r.t. the action
    /// input (used for the deterministic policy gradient).
    void backward(const Caches& c, double q_grad, Grads& accum,
                  std::vector<double>* action_grad = nullptr) const {
        std::vector<double> h_grad;
        head.backward(c.head, {q_grad}, accum.head, &h_grad);
        const int ns = state_path.output_dim();
        std::vector<double> gs(h_grad.begin(), h_grad.begin() + ns);
        std::vector<double> ga(h_grad.begin() + ns, h_grad.end());
        state_path.backward(c.state, gs, accum.state);
        action_path.backward(c.action, ga, accum.action, action_grad);
    }

    std::size_t param_count() const {
        return state_path.param_count() + action_path.param_count() + head.param_count();
    }
};

/// DDPG, plus the parameter-space-noise variant (DDPG2). DDPG2 swaps the
/// two-tower actor for a single 64-64 relu net and explores by perturbing a
/// copy of the actor weights once per episode instead of adding action noise.
class DdpgAgent : public Agent {
public:
    DdpgAgent(const Hyperparams& hp, std::uint64_t seed, bool param_noise)
        : hp_(hp),
          param_noise_(param_noise),
          rng_(derive_seed(seed, param_noise ? 0xDD62ULL : 0xDD61ULL)),
          buffer_(hp.buffer_capacity) {
        if (param_noise_) {
            using nn::Activation;
            flat_actor_ = nn::Mlp({kObsDim, 64, 64, kActDim},
                                  {Activation::relu, Activation::relu, Activation::tanh});
            nn::init_uniform_fan_in(flat_actor_, rng_, 3e-3);
            flat_actor_target_ = flat_actor_;
            perturbed_actor_ = flat_actor_;
            resample_perturbation();
            flat_actor_adam_ = nn::AdamState::for_net(flat_actor_, hp_.actor_lr);
        } else {
            actor_.init(rng_);
            actor_target_ = actor_;
            actor_acc_adam_ = nn::AdamState::for_net(actor_.acc_tower, hp_.actor_lr);
            actor_turn_adam_ = nn::AdamState::for_net(actor_.turn_tower, hp_.actor_lr);
        }
        critic_.init(rng_);
        critic_target_ = critic_;
        critic_state_adam_ = nn::AdamState::for_net(critic_.state_path, hp_.critic_lr);
        critic_action_adam_ = nn::AdamState::for_net(critic_.action_path, hp_.critic_lr);
        critic_head_adam_ = nn::AdamState::for_net(critic_.head, hp_.critic_lr);
    }

    std::string algo() const override { return param_noise_ ? "ddpg2" : "ddpg"; }

    Action select_action(const Observation& obs, Mode mode) override {
        const auto x = obs_to_vec(obs);
        std::vector<double> a;
        if (param_noise_) {
            a = (mode == Mode::train ? perturbed_actor_ : flat_actor_).forward(x);
        } else {
            a = actor_.forward(x);
            if (mode == Mode::train) {
                for (double& v : a) v += rng_.normal(0.0, hp_.exploration_noise_std);
            }
        }
        return Action{a[0], a[1]}.clamped();
    }

    void record(const Observation& obs, const Action& action, const StepResult& r) override {
        buffer_.push(make_transition(obs, action, r));
    }

    bool ready_to_update() const override {
        return buffer_.size() >= static_cast<std::size_t>(hp_.batch_size);
    }

    void end_episode() override {
        if (param_noise_) resample_perturbation();
    }

    void update() override {
        const auto batch = buffer_.sample(hp_.batch_size, rng_);
        const double inv_b = 1.0 / hp_.batch_size;

        // critic regression toward r + gamma*(1-done)*Q_target(s', pi_target(s'))
        auto cgrads = critic_.zero_grad();
        TwoBranchCritic::Caches ccache;
        for (const Transition* t : batch) {
            const std::vector<double> s(t->state.begin(), t->state.end());
            const std::vector<double> a(t->action.begin(), t->action.end());
            const std::vector<double> s2(t->next_state.begin(), t->next_state.end());
            double y = t->reward;
            if (!t->done) {
                const auto a2 = target_policy(s2);
                y += hp_.gamma * critic_target_.forward(s2, a2);
            }
            const double q = critic_.forward(s, a, &ccache);
            critic_.backward(ccache, 2.0 * (q - y) * inv_b, cgrads);
        }
        nn::adam_step(critic_.state_path, cgrads.state, critic_state_adam_);
        nn::adam_step(critic_.action_path, cgrads.action, critic_action_adam_);
        nn::adam_step(critic_.head, cgrads.head, critic_head_adam_);

        // actor ascends Q(s, pi(s))
        if (param_noise_) {
            auto agrads = flat_actor_.zero_grad();
            nn::Cache acache;
            auto scratch = critic_.zero_grad();
            for (const Transition* t : batch) {
                const std::vector<double> s(t->state.begin(), t->state.end());
                const auto a = flat_actor_.forward(s, &acache);
                const double q = critic_.forward(s, a, &ccache);
                (void)q;
                std::vector<double> dq_da;
                critic_.backward(ccache, -inv_b, scratch, &dq_da);
                flat_actor_.backward(acache, dq_da, agrads);
            }
            nn::adam_step(flat_actor_, agrads, flat_actor_adam_);
            nn::soft_update(flat_actor_target_, flat_actor_, hp_.tau);
        } else {
            auto agrads = actor_.zero_grad();
            TwoTowerActor::Caches acache;
            auto scratch = critic_.zero_grad();
            for (const Transition* t : batch) {
                const std::vector<double> s(t->state.begin(), t->state.end());
                const auto a = actor_.forward(s, &acache);
                const double q = critic_.forward(s, a, &ccache);
                (void)q;
                std::vector<double> dq_da;
                critic_.backward(ccache, -inv_b, scratch, &dq_da);
                actor_.backward(acache, dq_da, agrads);
            }
            nn::adam_step(actor_.acc_tower, agrads.acc, actor_acc_adam_);
            nn::adam_step(actor_.turn_tower, agrads.turn, actor_turn_adam_);
            nn::soft_update(actor_target_.acc_tower, actor_.acc_tower, hp_.tau);
            nn::soft_update(actor_target_.turn_tower, actor_.turn_tower, hp_.tau);
        }
        nn::soft_update(critic_target_.state_path, critic_.state_path, hp_.tau);
        nn::soft_update(critic_target_.action_path, critic_.action_path, hp_.tau);
        nn::soft_update(critic_target_.head, critic_.head, hp_.tau);
    }

    nlohmann::json checkpoint() const override {
        nlohmann::json nets;
        if (param_noise_) {
            nets["actor"] = nn::to_json(flat_actor_);
            nets["actor_target"] = nn::to_json(flat_actor_target_);
        } else {
            nets["actor_acc_tower"] = nn::to_json(actor_.acc_tower);
            nets["actor_turn_tower"] = nn::to_json(actor_.turn_tower);
            nets["actor_target_acc_tower"] = nn::to_json(actor_target_.acc_tower);
            nets["actor_target_turn_tower"] = nn::to_json(actor_target_.turn_tower);
        }
        nets["critic_state_path"] = nn::to_json(critic_.state_path);
        nets["critic_action_path"] = nn::to_json(critic_.action_path);
        nets["critic_head"] = nn::to_json(critic_.head);
        nets["critic_target_state_path"] = nn::to_json(critic_target_.state_path);
        nets["critic_target_action_path"] = nn::to_json(critic_target_.action_path);
        nets["critic_target_head"] = nn::to_json(critic_target_.head);
        return {{"format", "microracer-checkpoint-v1"}, {"algo", algo()}, {"nets", nets}};
    }

    void load(const nlohmann::json& j) override {
        const auto& nets = j.at("nets");
        if (param_noise_) {
            flat_actor_ = nn::mlp_from_json(nets.at("actor"));
            flat_actor_target_ = nn::mlp_from_json(nets.at("actor_target"));
            perturbed_actor_ = flat_actor_;
        } else {
            actor_.acc_tower = nn::mlp_from_json(nets.at("actor_acc_tower"));
            actor_.turn_tower = nn::mlp_from_json(nets.at("actor_turn_tower"));
            actor_target_.acc_tower = nn::mlp_from_json(nets.at("actor_target_acc_tower"));
            actor_target_.turn_tower = nn::mlp_from_json(nets.at("actor_target_turn_tower"));
        }
        critic_.state_path = nn::mlp_from_json(nets.at("critic_state_path"));
        critic_.action_path = nn::mlp_from_json(nets.at("critic_action_path"));
        critic_.head = nn::mlp_from_json(nets.at("critic_head"));
        critic_target_.state_path = nn::mlp_from_json(nets.at("critic_target_state_path"));
        critic_target_.action_path = nn::mlp_from_json(nets.at("critic_target_action_path"));
        critic_target_.head = nn::mlp_from_json(nets.at("critic_target_head"));
    }

    // exposed for tests
    const TwoTowerActor& actor() const { return actor_; }
    const TwoBranchCritic& critic() const { return critic_; }
    TwoBranchCritic& critic_mutable() { return critic_; }
    const nn::Mlp& flat_actor() const { return flat_actor_; }
    const nn::Mlp& perturbed_actor() const { return perturbed_actor_; }
    ReplayBuffer& buffer() { return buffer_; }
    void resample_perturbation() {
        perturbed_actor_ = flat_actor_;
        for (auto& layer : perturbed_actor_.layers()) {
            for (double& w : layer.w) w += rng_.normal(0.0, hp_.parameter_noise_std);
            for (double& b : layer.b) b += rng_.normal(0.0, hp_.parameter_noise_std);
        }
    }

private:
    std::vector<double> target_policy(const std::vector<double>& s) const {
        return param_noise_ ? flat_actor_target_.forward(s) : actor_target_.forward(s);
    }

    Hyperparams hp_;
    bool param_noise_;
    Rng rng_;
    ReplayBuffer buffer_;

    TwoTowerActor actor_, actor_target_;
    nn::Mlp flat_actor_, flat_actor_target_, perturbed_actor_;

    TwoBranchCritic critic_, critic_target_;

    nn::AdamState actor_acc_adam_, actor_turn_adam_, flat_actor_adam_;
    nn::AdamState critic_state_adam_, critic_action_adam_, critic_head_adam_;
};

}  // namespace microracer::agents
