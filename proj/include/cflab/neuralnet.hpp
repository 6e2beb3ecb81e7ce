#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cflab/core.hpp"
#include "cflab/factorization.hpp"
#include "cflab/rng.hpp"

namespace cflab {

enum class InputModeling { Concat, Hadamard };

inline const char* to_string(InputModeling m) {
    return m == InputModeling::Concat ? "concat" : "hadamard";
}

inline InputModeling modeling_from_string(std::string_view s) {
    if (s == "concat") return InputModeling::Concat;
    if (s == "hadamard") return InputModeling::Hadamard;
    throw Error("unknown input modeling: " + std::string(s));
}

inline std::int32_t input_width(InputModeling m, std::int32_t p) {
    return m == InputModeling::Concat ? 2 * p : p;
}

enum class Activation { ReLU, ELU, Tanh, Sigmoid };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::ELU: return "elu";
        case Activation::Tanh: return "tanh";
        default: return "sigmoid";
    }
}

inline Activation activation_from_string(std::string_view s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "elu") return Activation::ELU;
    if (s == "tanh") return Activation::Tanh;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw Error("unknown activation: " + std::string(s));
}

// ELU uses alpha = 1; the ReLU subgradient at exactly 0 is 0.
inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::ReLU: return z > 0.0 ? z : 0.0;
        case Activation::ELU: return z > 0.0 ? z : std::expm1(z);
        case Activation::Tanh: return std::tanh(z);
        default: return sigmoid(z);
    }
}

inline double activate_grad(Activation a, double z) {
    switch (a) {
        case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
        case Activation::ELU: return z > 0.0 ? 1.0 : std::exp(z);
        case Activation::Tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        default: {
            const double s = sigmoid(z);
            return s * (1.0 - s);
        }
    }
}

/// (hidden layer count, activation); L = 0 carries no activation.
struct MlpArchitecture {
    std::int32_t hidden_count = 0;
    std::optional<Activation> activation;

    std::string name() const {
        std::string s = "L" + std::to_string(hidden_count);
        if (activation) s += std::string("-") + to_string(*activation);
        return s;
    }
};

/// The 13 architectures searched per setting: the linear net plus
/// L in {1,2,3} x {ReLU, ELU, tanh, sigmoid}.
inline std::vector<MlpArchitecture> enumerate_architectures() {
    std::vector<MlpArchitecture> out;
    out.push_back({0, std::nullopt});
    for (std::int32_t hidden = 1; hidden <= 3; ++hidden)
        for (auto a : {Activation::ReLU, Activation::ELU, Activation::Tanh, Activation::Sigmoid})
            out.push_back({hidden, a});
    return out;
}

/// Width chain input -> hidden pyramid -> 1. Hidden widths halve the input
/// width per level, clamped at 1.
inline std::vector<std::int32_t> layer_widths(std::int32_t in_width, std::int32_t hidden_count) {
    std::vector<std::int32_t> w{in_width};
    for (std::int32_t l = 1; l <= hidden_count; ++l)
        w.push_back(std::max<std::int32_t>(1, in_width >> l));
    w.push_back(1);
    return w;
}

struct MlpLayer {
    Matrix weights;  // out x in
    std::vector<double> bias;  // out

    friend bool operator==(const MlpLayer&, const MlpLayer&) = default;
};

/// The scoring MLP. Hidden layers are affine + activation; the final layer
/// is a plain affine map to one raw score (losses apply their own link).
struct MlpNetwork {
    std::vector<MlpLayer> layers;  // hidden_count + 1 entries
    Activation activation = Activation::ReLU;  // unused when hidden_count == 0
    std::int32_t hidden_count = 0;
    InputModeling modeling = InputModeling::Concat;

    std::int32_t in_width() const {
        return static_cast<std::int32_t>(layers.front().weights.cols);
    }

    friend bool operator==(const MlpNetwork&, const MlpNetwork&) = default;
};

/// He init for the ReLU family, 1/fan_in otherwise (incl. the linear net).
inline MlpNetwork build_network(InputModeling modeling, std::int32_t p,
                                const MlpArchitecture& arch, std::uint64_t seed) {
    MlpNetwork net;
    net.modeling = modeling;
    net.hidden_count = arch.hidden_count;
    net.activation = arch.activation.value_or(Activation::ReLU);

    const auto widths = layer_widths(input_width(modeling, p), arch.hidden_count);
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const auto in = static_cast<std::size_t>(widths[l]);
        const auto out = static_cast<std::size_t>(widths[l + 1]);
        MlpLayer layer;
        layer.weights = Matrix(out, in);
        layer.bias.assign(out, 0.0);
        const bool relu_family =
            arch.activation && (*arch.activation == Activation::ReLU || *arch.activation == Activation::ELU);
        const double stddev = std::sqrt((relu_family ? 2.0 : 1.0) / static_cast<double>(in));
        for (auto& w : layer.weights.data) w = rng.normal(0.0, stddev);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

/// Concat -> [e_u, e_v]; Hadamard -> elementwise product.
inline void build_input_into(InputModeling modeling, std::span<const double> e_u,
                             std::span<const double> e_v, std::vector<double>& out) {
    if (e_u.size() != e_v.size()) throw Error("build_input: latent vector length mismatch");
    if (modeling == InputModeling::Concat) {
        out.resize(2 * e_u.size());
        std::copy(e_u.begin(), e_u.end(), out.begin());
        std::copy(e_v.begin(), e_v.end(), out.begin() + static_cast<std::ptrdiff_t>(e_u.size()));
    } else {
        out.resize(e_u.size());
        for (std::size_t k = 0; k < e_u.size(); ++k) out[k] = e_u[k] * e_v[k];
    }
}

inline std::vector<double> build_input(InputModeling modeling, std::span<const double> e_u,
                                       std::span<const double> e_v) {
    std::vector<double> out;
    build_input_into(modeling, e_u, e_v, out);
    return out;
}

/// Cached per-layer pre-activations and activations from one forward pass.
struct MlpTape {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;  // one per layer
    std::vector<std::vector<double>> act;  // hidden layers only
};

inline void affine_into(const MlpLayer& layer, std::span<const double> in,
                        std::vector<double>& out) {
    const auto& w = layer.weights;
    out.resize(w.rows);
    for (std::size_t o = 0; o < w.rows; ++o)
        out[o] = layer.bias[o] + dot(w.row(o), in);
}

/// Evaluates the network, retaining everything backward() needs.
inline double forward(const MlpNetwork& net, std::span<const double> input, MlpTape& tape) {
    if (static_cast<std::int32_t>(input.size()) != net.in_width())
        throw Error("forward: input width mismatch");
    tape.input.assign(input.begin(), input.end());
    tape.pre.resize(net.layers.size());
    tape.act.resize(net.layers.size() - 1);

    std::span<const double> cur = tape.input;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        affine_into(net.layers[l], cur, tape.pre[l]);
        if (l + 1 < net.layers.size()) {
            auto& a = tape.act[l];
            a.resize(tape.pre[l].size());
            for (std::size_t k = 0; k < a.size(); ++k)
                a[k] = activate(net.activation, tape.pre[l][k]);
            cur = a;
        }
    }
    return tape.pre.back()[0];
}

/// Reusable buffers for tape-free scoring.
struct MlpScratch {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> input;
};

/// Score only; no tape. The hot path of ranking evaluation.
inline double predict(const MlpNetwork& net, std::span<const double> input, MlpScratch& s) {
    std::span<const double> cur = input;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& out = (l % 2 == 0) ? s.a : s.b;
        affine_into(net.layers[l], cur, out);
        if (l + 1 < net.layers.size())
            for (auto& z : out) z = activate(net.activation, z);
        cur = out;
    }
    return cur[0];
}

/// Parameter gradients mirroring an MlpNetwork, plus the gradient w.r.t.
/// the network input (needed to reach the embeddings).
struct MlpGradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> bias;
    std::vector<double> input;

    // scratch for backward()
    std::vector<double> delta_;
    std::vector<double> prev_;

    explicit MlpGradients(const MlpNetwork& net) {
        for (const auto& layer : net.layers) {
            weights.emplace_back(layer.weights.rows, layer.weights.cols);
            bias.emplace_back(layer.bias.size(), 0.0);
        }
        input.assign(static_cast<std::size_t>(net.in_width()), 0.0);
    }

    void zero() {
        for (auto& w : weights) w.fill(0.0);
        for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
        std::fill(input.begin(), input.end(), 0.0);
    }
};

/// Accumulates upstream * d(score)/d(theta) for every parameter and
/// upstream * d(score)/d(input) into `g`.
inline void backward(const MlpNetwork& net, const MlpTape& tape, double upstream,
                     MlpGradients& g) {
    if (tape.pre.size() != net.layers.size() ||
        tape.input.size() != static_cast<std::size_t>(net.in_width()))
        throw Error("backward: tape does not match network");

    auto& delta = g.delta_;
    auto& prev = g.prev_;
    delta.assign(1, upstream);

    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        const std::span<const double> in =
            l == 0 ? std::span<const double>(tape.input) : std::span<const double>(tape.act[l - 1]);

        auto& gw = g.weights[l];
        auto& gb = g.bias[l];
        for (std::size_t o = 0; o < layer.weights.rows; ++o) {
            const double d = delta[o];
            gb[o] += d;
            auto grow = gw.row(o);
            for (std::size_t k = 0; k < in.size(); ++k) grow[k] += d * in[k];
        }

        prev.assign(in.size(), 0.0);
        for (std::size_t o = 0; o < layer.weights.rows; ++o) {
            const double d = delta[o];
            const auto wrow = layer.weights.row(o);
            for (std::size_t k = 0; k < in.size(); ++k) prev[k] += d * wrow[k];
        }

        if (l == 0) {
            for (std::size_t k = 0; k < prev.size(); ++k) g.input[k] += prev[k];
        } else {
            delta.resize(prev.size());
            for (std::size_t k = 0; k < prev.size(); ++k)
                delta[k] = prev[k] * activate_grad(net.activation, tape.pre[l - 1][k]);
        }
    }
}

/// Chain rule through the input modeling: splits (Concat) or crosses with
/// the partner vector (Hadamard).
inline void backprop_to_embeddings(InputModeling modeling, std::span<const double> input_grad,
                                   std::span<const double> e_u, std::span<const double> e_v,
                                   std::span<double> grad_e_u, std::span<double> grad_e_v) {
    const std::size_t p = e_u.size();
    if (input_grad.size() != static_cast<std::size_t>(input_width(modeling, static_cast<std::int32_t>(p))))
        throw Error("backprop_to_embeddings: input gradient width mismatch");
    if (modeling == InputModeling::Concat) {
        for (std::size_t k = 0; k < p; ++k) {
            grad_e_u[k] += input_grad[k];
            grad_e_v[k] += input_grad[p + k];
        }
    } else {
        for (std::size_t k = 0; k < p; ++k) {
            grad_e_u[k] += input_grad[k] * e_v[k];
            grad_e_v[k] += input_grad[k] * e_u[k];
        }
    }
}

/// Embeddings plus scoring network; the neural counterpart of LatentFactors.
/// Bias vectors are carried but never enter the network input.
struct NcfnModel {
    LatentFactors factors;
    MlpNetwork net;

    double score_pair(std::int32_t user, std::int32_t item, MlpScratch& s) const {
        build_input_into(net.modeling, factors.user_factors.row(static_cast<std::size_t>(user)),
                         factors.item_factors.row(static_cast<std::size_t>(item)), s.input);
        return predict(net, s.input, s);
    }

    std::vector<double> score_all_items(std::int32_t user) const {
        if (user < 0 || user >= factors.m())
            throw Error("score_all_items: user index out of range");
        thread_local MlpScratch scratch;
        std::vector<double> out(factors.item_factors.rows);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = score_pair(user, static_cast<std::int32_t>(i), scratch);
        return out;
    }

    friend bool operator==(const NcfnModel&, const NcfnModel&) = default;
};

}  // namespace cflab
