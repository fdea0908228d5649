#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "microracer/rng.hpp"

namespace microracer::nn {

enum class Activation { relu, tanh, linear };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::linear: return "linear";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "linear") return Activation::linear;
    throw std::invalid_argument("unknown activation: " + s);
}

inline void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite value in ") + what);
}

struct Layer {
    int in = 0;
    int out = 0;
    std::vector<double> w;  // out x in, row-major
    std::vector<double> b;  // out
    Activation act = Activation::linear;
};

struct LayerGrad {
    std::vector<double> w;
    std::vector<double> b;
};

/// Per-layer forward pass record: the input to each layer and its
/// activation output, consumed by backward().
struct Cache {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> outputs;
    bool valid = false;
};

class Mlp;

struct Gradients {
    std::vector<LayerGrad> layers;

    void scale(double s) {
        for (auto& lg : layers) {
            for (double& x : lg.w) x *= s;
            for (double& x : lg.b) x *= s;
        }
    }
    void add(const Gradients& o) {
        assert(layers.size() == o.layers.size());
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (std::size_t i = 0; i < layers[l].w.size(); ++i) layers[l].w[i] += o.layers[l].w[i];
            for (std::size_t i = 0; i < layers[l].b.size(); ++i) layers[l].b[i] += o.layers[l].b[i];
        }
    }
};

class Mlp {
public:
    Mlp() = default;

    /// dims = {in, h1, ..., out}; acts has dims.size()-1 entries.
    Mlp(const std::vector<int>& dims, const std::vector<Activation>& acts) {
        assert(dims.size() >= 2 && acts.size() == dims.size() - 1);
        layers_.resize(acts.size());
        for (std::size_t l = 0; l < acts.size(); ++l) {
            layers_[l].in = dims[l];
            layers_[l].out = dims[l + 1];
            layers_[l].w.assign(static_cast<std::size_t>(dims[l]) * dims[l + 1], 0.0);
            layers_[l].b.assign(dims[l + 1], 0.0);
            layers_[l].act = acts[l];
        }
    }

    int input_dim() const { return layers_.front().in; }
    int output_dim() const { return layers_.back().out; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.w.size() + l.b.size();
        return n;
    }

    std::vector<double> forward(const std::vector<double>& input, Cache* cache = nullptr) const {
        if (static_cast<int>(input.size()) != input_dim())
            throw std::invalid_argument("Mlp::forward: input dimension mismatch");
        if (cache) {
            cache->inputs.resize(layers_.size());
            cache->outputs.resize(layers_.size());
        }
        std::vector<double> x = input;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& L = layers_[l];
            if (cache) cache->inputs[l] = x;
            std::vector<double> z(L.out);
            for (int o = 0; o < L.out; ++o) {
                double s = L.b[o];
                const double* wr = &L.w[static_cast<std::size_t>(o) * L.in];
                for (int i = 0; i < L.in; ++i) s += wr[i] * x[i];
                z[o] = activate(s, L.act);
            }
            if (cache) cache->outputs[l] = z;
            x = std::move(z);
        }
        check_finite(x, "Mlp::forward output");
        if (cache) cache->valid = true;
        return x;
    }

    /// Exact reverse-mode gradients of the cached forward pass. Accumulates
    /// into `accum`; optionally reports the gradient w.r.t. the input.
    void backward(const Cache& cache, const std::vector<double>& output_grad, Gradients& accum,
                  std::vector<double>* input_grad = nullptr) const {
        if (!cache.valid) throw std::logic_error("Mlp::backward: no forward cache");
        if (accum.layers.empty()) accum = zero_grad();
        std::vector<double> g = output_grad;
        for (std::size_t li = layers_.size(); li-- > 0;) {
            const Layer& L = layers_[li];
            const auto& x = cache.inputs[li];
            const auto& a = cache.outputs[li];
            std::vector<double> dz(L.out);
            for (int o = 0; o < L.out; ++o) dz[o] = g[o] * activate_deriv(a[o], L.act);
            LayerGrad& lg = accum.layers[li];
            for (int o = 0; o < L.out; ++o) {
                lg.b[o] += dz[o];
                double* wr = &lg.w[static_cast<std::size_t>(o) * L.in];
                for (int i = 0; i < L.in; ++i) wr[i] += dz[o] * x[i];
            }
            if (li > 0 || input_grad) {
                std::vector<double> gx(L.in, 0.0);
                for (int o = 0; o < L.out; ++o) {
                    const double* wr = &L.w[static_cast<std::size_t>(o) * L.in];
                    for (int i = 0; i < L.in; ++i) gx[i] += wr[i] * dz[o];
                }
                g = std::move(gx);
            }
        }
        if (input_grad) *input_grad = std::move(g);
    }

    Gradients zero_grad() const {
        Gradients g;
        g.layers.resize(layers_.size());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            g.layers[l].w.assign(layers_[l].w.size(), 0.0);
            g.layers[l].b.assign(layers_[l].b.size(), 0.0);
        }
        return g;
    }

private:
    static double activate(double z, Activation a) {
        switch (a) {
            case Activation::relu: return z > 0.0 ? z : 0.0;
            case Activation::tanh: return std::tanh(z);
            case Activation::linear: return z;
        }
        return z;
    }
    // derivative expressed through the activation output
    static double activate_deriv(double out, Activation a) {
        switch (a) {
            case Activation::relu: return out > 0.0 ? 1.0 : 0.0;
            case Activation::tanh: return 1.0 - out * out;
            case Activation::linear: return 1.0;
        }
        return 1.0;
    }

    std::vector<Layer> layers_;
};

/// Uniform fan-in initialization for all layers; final-layer weights can be
/// drawn small (DDPG-style) via final_scale.
inline void init_uniform_fan_in(Mlp& net, Rng& rng, double final_scale = 0.0) {
    auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Layer& L = layers[l];
        double bound = 1.0 / std::sqrt(static_cast<double>(L.in));
        if (final_scale > 0.0 && l == layers.size() - 1) bound = final_scale;
        for (double& w : L.w) w = rng.uniform(-bound, bound);
        for (double& b : L.b) b = rng.uniform(-bound, bound);
    }
}

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<LayerGrad> m;
    std::vector<LayerGrad> v;

    static AdamState for_net(const Mlp& net, double lr) {
        AdamState s;
        s.lr = lr;
        const Gradients z = net.zero_grad();
        s.m = z.layers;
        s.v = z.layers;
        return s;
    }
};

/// Bias-corrected Adam update, in place.
inline void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    auto update = [&](double& p, const double g, double& m, double& v) {
        if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        const double mh = m / bc1;
        const double vh = v / bc2;
        p -= state.lr * mh / (std::sqrt(vh) + state.eps);
    };
    auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t i = 0; i < layers[l].w.size(); ++i)
            update(layers[l].w[i], grads.layers[l].w[i], state.m[l].w[i], state.v[l].w[i]);
        for (std::size_t i = 0; i < layers[l].b.size(); ++i)
            update(layers[l].b[i], grads.layers[l].b[i], state.m[l].b[i], state.v[l].b[i]);
    }
}

/// Polyak averaging: target <- (1-tau)*target + tau*online.
inline void soft_update(Mlp& target, const Mlp& online, double tau) {
    auto& tl = target.layers();
    const auto& ol = online.layers();
    if (tl.size() != ol.size()) throw std::invalid_argument("soft_update: architecture mismatch");
    for (std::size_t l = 0; l < tl.size(); ++l) {
        if (tl[l].w.size() != ol[l].w.size())
            throw std::invalid_argument("soft_update: architecture mismatch");
        for (std::size_t i = 0; i < tl[l].w.size(); ++i)
            tl[l].w[i] = (1.0 - tau) * tl[l].w[i] + tau * ol[l].w[i];
        for (std::size_t i = 0; i < tl[l].b.size(); ++i)
            tl[l].b[i] = (1.0 - tau) * tl[l].b[i] + tau * ol[l].b[i];
    }
}

/// Gaussian output head: a shared trunk with linear mu and log-sigma heads.
/// Sigma is exp of the clamped raw log-sigma.
struct GaussianHead {
    Mlp trunk;
    Mlp mu_head;
    Mlp sigma_head;
    double log_sigma_min = -20.0;
    double log_sigma_max = 2.0;

    struct HeadCache {
        Cache trunk, mu, sigma;
        std::vector<double> raw_log_sigma;
        std::vector<double> sigma_value;
    };

    GaussianHead() = default;

    GaussianHead(const std::vector<int>& trunk_dims, int out_dim, double lsmin = -20.0,
                 double lsmax = 2.0)
        : log_sigma_min(lsmin), log_sigma_max(lsmax) {
        std::vector<Activation> acts(trunk_dims.size() - 1, Activation::relu);
        trunk = Mlp(trunk_dims, acts);
        mu_head = Mlp({trunk_dims.back(), out_dim}, {Activation::linear});
        sigma_head = Mlp({trunk_dims.back(), out_dim}, {Activation::linear});
    }

    void init(Rng& rng, double final_scale = 0.0) {
        init_uniform_fan_in(trunk, rng);
        init_uniform_fan_in(mu_head, rng, final_scale);
        init_uniform_fan_in(sigma_head, rng, final_scale);
    }

    int output_dim() const { return mu_head.output_dim(); }

    std::pair<std::vector<double>, std::vector<double>> forward(const std::vector<double>& input,
                                                                HeadCache* cache = nullptr) const {
        Cache local_trunk;
        Cache* tc = cache ? &cache->trunk : &local_trunk;
        const std::vector<double> h = trunk.forward(input, tc);
        std::vector<double> mu = mu_head.forward(h, cache ? &cache->mu : nullptr);
        std::vector<double> raw = sigma_head.forward(h, cache ? &cache->sigma : nullptr);
        std::vector<double> sigma(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i)
            sigma[i] = std::exp(std::clamp(raw[i], log_sigma_min, log_sigma_max));
        if (cache) {
            cache->raw_log_sigma = raw;
            cache->sigma_value = sigma;
        }
        return {std::move(mu), std::move(sigma)};
    }

    struct HeadGrads {
        Gradients trunk, mu, sigma;
    };

    HeadGrads zero_grad() const { return {trunk.zero_grad(), mu_head.zero_grad(), sigma_head.zero_grad()}; }

    /// Backprop dL/dmu and dL/dsigma through both heads and the trunk.
    void backward(const HeadCache& cache, const std::vector<double>& mu_grad,
                  const std::vector<double>& sigma_grad, HeadGrads& accum,
                  std::vector<double>* input_grad = nullptr) const {
        // dL/draw = dL/dsigma * sigma (zero where the clamp saturates)
        std::vector<double> raw_grad(sigma_grad.size());
        for (std::size_t i = 0; i < sigma_grad.size(); ++i) {
            const bool clamped = cache.raw_log_sigma[i] <= log_sigma_min ||
                                 cache.raw_log_sigma[i] >= log_sigma_max;
            raw_grad[i] = clamped ? 0.0 : sigma_grad[i] * cache.sigma_value[i];
        }
        std::vector<double> h_grad_mu, h_grad_sigma;
        mu_head.backward(cache.mu, mu_grad, accum.mu, &h_grad_mu);
        sigma_head.backward(cache.sigma, raw_grad, accum.sigma, &h_grad_sigma);
        for (std::size_t i = 0; i < h_grad_mu.size(); ++i) h_grad_mu[i] += h_grad_sigma[i];
        trunk.backward(cache.trunk, h_grad_mu, accum.trunk, input_grad);
    }
};

// ---- serialization (bit-exact via shortest-round-trip JSON doubles) ----

inline nlohmann::json to_json(const Mlp& net) {
    nlohmann::json j = nlohmann::json::array();
    for (const Layer& l : net.layers()) {
        j.push_back({{"in", l.in},
                     {"out", l.out},
                     {"act", to_string(l.act)},
                     {"w", l.w},
                     {"b", l.b}});
    }
    return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
    std::vector<int> dims;
    std::vector<Activation> acts;
    for (const auto& lj : j) {
        if (dims.empty()) dims.push_back(lj.at("in").get<int>());
        dims.push_back(lj.at("out").get<int>());
        acts.push_back(activation_from_string(lj.at("act").get<std::string>()));
    }
    Mlp net(dims, acts);
    std::size_t li = 0;
    for (const auto& lj : j) {
        net.layers()[li].w = lj.at("w").get<std::vector<double>>();
        net.layers()[li].b = lj.at("b").get<std::vector<double>>();
        if (net.layers()[li].w.size() !=
            static_cast<std::size_t>(net.layers()[li].in) * net.layers()[li].out)
            throw std::invalid_argument("mlp_from_json: weight shape mismatch");
        ++li;
    }
    return net;
}

inline nlohmann::json to_json(const GaussianHead& h) {
    return {{"trunk", to_json(h.trunk)},
            {"mu", to_json(h.mu_head)},
            {"sigma", to_json(h.sigma_head)},
            {"log_sigma_min", h.log_sigma_min},
            {"log_sigma_max", h.log_sigma_max}};
}

inline GaussianHead gaussian_head_from_json(const nlohmann::json& j) {
    GaussianHead h;
    h.trunk = mlp_from_json(j.at("trunk"));
    h.mu_head = mlp_from_json(j.at("mu"));
    h.sigma_head = mlp_from_json(j.at("sigma"));
    h.log_sigma_min = j.at("log_sigma_min").get<double>();
    h.log_sigma_max = j.at("log_sigma_max").get<double>();
    return h;
}

}  // namespace microracer::nn
