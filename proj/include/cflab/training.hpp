#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cflab/core.hpp"
#include "cflab/dataset.hpp"
#include "cflab/evaluation.hpp"
#include "cflab/factorization.hpp"
#include "cflab/neuralnet.hpp"
#include "cflab/rng.hpp"

namespace cflab {

enum class Loss { BCE, BPR };

inline const char* to_string(Loss l) { return l == Loss::BCE ? "bce" : "bpr"; }

inline Loss loss_from_string(std::string_view s) {
    if (s == "bce") return Loss::BCE;
    if (s == "bpr") return Loss::BPR;
    throw Error("unknown loss: " + std::string(s));
}

enum class EmbeddingMode { Learned, PretrainedAdjustable, PretrainedFixed };

inline const char* to_string(EmbeddingMode m) {
    switch (m) {
        case EmbeddingMode::Learned: return "learned";
        case EmbeddingMode::PretrainedAdjustable: return "pretrained";
        default: return "pretrained_fixed";
    }
}

inline EmbeddingMode embedding_mode_from_string(std::string_view s) {
    if (s == "learned") return EmbeddingMode::Learned;
    if (s == "pretrained") return EmbeddingMode::PretrainedAdjustable;
    if (s == "pretrained_fixed") return EmbeddingMode::PretrainedFixed;
    throw Error("unknown embedding mode: " + std::string(s));
}

// --- losses -------------------------------------------------------------

/// Pointwise binary cross-entropy on sigma(score) against the 0/1 target
/// max{0, label}. Log-sum-exp form; stable for |score| up to ~500.
inline std::pair<double, double> bce_loss_and_grad(double score, double label) {
    if (label != 1.0 && label != -1.0)
        throw Error("bce_loss_and_grad: label must be +1 or -1");
    const double target = label > 0.0 ? 1.0 : 0.0;
    const double loss = target * softplus(-score) + (1.0 - target) * softplus(score);
    const double grad = sigmoid(score) - target;
    return {loss, grad};
}

struct BprGrads {
    double loss;
    double d_pos;
    double d_neg;
};

/// Pairwise ranking loss -log sigma(s_pos - s_neg).
inline BprGrads bpr_loss_and_grads(double score_pos, double score_neg) {
    const double diff = score_pos - score_neg;
    const double slack = 1.0 - sigmoid(diff);
    return {softplus(-diff), -slack, slack};
}

// --- negative sampling ---------------------------------------------------

/// Uniform draw from the items carrying no train positive for this user.
/// Rejection sampling against the user's positive set.
inline std::int32_t sample_negative(const InteractionDataset& ds, std::int32_t user, Rng& rng) {
    const auto& positives = ds.user_positive_sets[static_cast<std::size_t>(user)];
    const auto n = static_cast<std::uint64_t>(ds.maps.n);
    if (positives.size() >= static_cast<std::size_t>(ds.maps.n))
        throw Error("sample_negative: user " + std::to_string(user) + " is positive on all items");
    for (;;) {
        const auto item = static_cast<std::int32_t>(rng.below(n));
        if (!std::binary_search(positives.begin(), positives.end(), item)) return item;
    }
}

// --- Adam ----------------------------------------------------------------

/// First/second moment accumulators for one trainable tensor.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;
    double alpha = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(std::size_t size, double alpha_, double beta1_ = 0.9, double beta2_ = 0.999,
              double eps_ = 1e-8)
        : m(size, 0.0), v(size, 0.0), alpha(alpha_), beta1(beta1_), beta2(beta2_), eps(eps_) {}
};

/// One bias-corrected Adam update over a flat parameter tensor.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw Error("adam_step: shape mismatch");
    ++st.t;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grads[k];
        st.m[k] = st.beta1 * st.m[k] + (1.0 - st.beta1) * g;
        st.v[k] = st.beta2 * st.v[k] + (1.0 - st.beta2) * g * g;
        const double mhat = st.m[k] / c1;
        const double vhat = st.v[k] / c2;
        params[k] -= st.alpha * mhat / (std::sqrt(vhat) + st.eps);
    }
}

// --- training loop --------------------------------------------------------

struct TrainConfig {
    Loss loss = Loss::BPR;
    std::int32_t batch_size = 128;
    std::int32_t epochs = 15;
    double learning_rate = 0.003;
    std::uint64_t seed = 0;
    EmbeddingMode embedding_mode = EmbeddingMode::Learned;
    std::int32_t p = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool use_biases = true;     // LRA only; NCFN never feeds biases to the net
    bool eval_each_epoch = true;  // needs a test split; skipped without one
    bool keep_best_mrr = true;    // false: return the final-epoch model
    int eval_threads = 1;
};

struct EpochStats {
    std::int32_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double mrr = std::numeric_limits<double>::quiet_NaN();
    double map_at_10 = std::numeric_limits<double>::quiet_NaN();
    double auc = std::numeric_limits<double>::quiet_NaN();
    std::int32_t users_evaluated = 0;
    bool evaluated = false;
};

template <class Model>
struct TrainResult {
    Model model;
    std::vector<EpochStats> trace;
    std::int32_t best_epoch = 0;  // 1-based; final epoch when not tracking MRR
};

namespace detail {

inline void check_config(const TrainConfig& cfg, const InteractionDataset& ds) {
    if (cfg.batch_size < 1) throw Error("train: batch_size must be >= 1");
    if (cfg.epochs < 1) throw Error("train: epochs must be >= 1");
    if (cfg.loss == Loss::BPR && ds.scenario != Scenario::Implicit)
        throw Error("train: BPR requires an implicit dataset");
    if (cfg.loss == Loss::BCE && ds.scenario != Scenario::Explicit)
        throw Error("train: BCE requires an explicit dataset");
}

inline std::vector<std::size_t> train_indices(const InteractionDataset& ds, bool positives_only) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.interactions.size(); ++i) {
        if (!ds.in_train(i)) continue;
        if (positives_only && !(ds.interactions[i].label > 0.0)) continue;
        idx.push_back(i);
    }
    return idx;
}

inline void check_finite_loss(double batch_loss, std::int32_t epoch, std::size_t batch) {
    if (!std::isfinite(batch_loss))
        throw Error("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batch));
}

template <class Model, class ScoreAll>
void eval_epoch(const Model& model, const InteractionDataset& ds, const TrainConfig& cfg,
                const ScoreAll& score_all, std::int32_t epoch, double mean_loss,
                std::vector<EpochStats>& trace, TrainResult<Model>& result, double& best_mrr) {
    EpochStats row;
    row.epoch = epoch;
    row.train_loss = mean_loss;
    const bool do_eval = cfg.eval_each_epoch && !ds.split.empty();
    if (do_eval) {
        const EvalReport rep = evaluate(score_all, ds, cfg.eval_threads);
        row.mrr = rep.mrr;
        row.map_at_10 = rep.map_at_10;
        row.auc = rep.auc;
        row.users_evaluated = rep.users_evaluated;
        row.evaluated = true;
        if (cfg.keep_best_mrr && rep.mrr > best_mrr) {
            best_mrr = rep.mrr;
            result.model = model;
            result.best_epoch = epoch;
        }
    }
    trace.push_back(row);
}

}  // namespace detail

/// Fits an LRA model with minibatch gradient descent and Adam. Gradients are
/// accumulated per batch (mean over examples) and applied as one dense step
/// per tensor, so zero-gradient rows still see moment decay.
inline TrainResult<LatentFactors> train_model(LatentFactors model, const InteractionDataset& ds,
                                              const TrainConfig& cfg) {
    detail::check_config(cfg, ds);
    if (cfg.embedding_mode != EmbeddingMode::Learned)
        throw Error("train: pretrained embedding modes apply to the neural model only");

    const auto m = model.user_factors.rows;
    const auto n = model.item_factors.rows;
    const auto p = static_cast<std::size_t>(model.p);

    Matrix g_user(m, p), g_item(n, p);
    std::vector<double> g_ubias(m, 0.0), g_ibias(n, 0.0);
    AdamState st_user(m * p, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    AdamState st_item(n * p, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    AdamState st_ubias(m, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    AdamState st_ibias(n, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);

    auto indices = detail::train_indices(ds, cfg.loss == Loss::BPR);
    Rng rng(cfg.seed);

    TrainResult<LatentFactors> result;
    double best_mrr = -1.0;
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

    for (std::int32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(indices);
        double loss_sum = 0.0;
        std::size_t example_count = 0;

        for (std::size_t start = 0, batch_no = 0; start < indices.size();
             start += batch_size, ++batch_no) {
            const std::size_t end = std::min(indices.size(), start + batch_size);
            const auto count = static_cast<double>(end - start);
            g_user.fill(0.0);
            g_item.fill(0.0);
            std::fill(g_ubias.begin(), g_ubias.end(), 0.0);
            std::fill(g_ibias.begin(), g_ibias.end(), 0.0);

            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& it = ds.interactions[indices[k]];
                const auto u = static_cast<std::size_t>(it.user);
                auto e_u = model.user_factors.row(u);

                if (cfg.loss == Loss::BPR) {
                    const std::int32_t neg = sample_negative(ds, it.user, rng);
                    const auto i = static_cast<std::size_t>(it.item);
                    const auto j = static_cast<std::size_t>(neg);
                    const double s_pos = score(model, it.user, it.item);
                    const double s_neg = score(model, it.user, neg);
                    const auto bg = bpr_loss_and_grads(s_pos, s_neg);
                    batch_loss += bg.loss;

                    auto e_i = model.item_factors.row(i);
                    auto e_j = model.item_factors.row(j);
                    auto gu = g_user.row(u);
                    auto gi = g_item.row(i);
                    auto gj = g_item.row(j);
                    for (std::size_t d = 0; d < p; ++d) {
                        gu[d] += bg.d_pos * e_i[d] + bg.d_neg * e_j[d];
                        gi[d] += bg.d_pos * e_u[d];
                        gj[d] += bg.d_neg * e_u[d];
                    }
                    if (cfg.use_biases) {
                        g_ibias[i] += bg.d_pos;
                        g_ibias[j] += bg.d_neg;
                        // the user bias cancels in the score difference
                    }
                } else {
                    const auto i = static_cast<std::size_t>(it.item);
                    const double s = score(model, it.user, it.item);
                    const auto [loss, grad] = bce_loss_and_grad(s, it.label);
                    batch_loss += loss;

                    auto e_i = model.item_factors.row(i);
                    auto gu = g_user.row(u);
                    auto gi = g_item.row(i);
                    for (std::size_t d = 0; d < p; ++d) {
                        gu[d] += grad * e_i[d];
                        gi[d] += grad * e_u[d];
                    }
                    if (cfg.use_biases) {
                        g_ubias[u] += grad;
                        g_ibias[i] += grad;
                    }
                }
            }
            detail::check_finite_loss(batch_loss, epoch, batch_no);
            loss_sum += batch_loss;
            example_count += end - start;

            const double inv = 1.0 / count;
            for (auto& g : g_user.data) g *= inv;
            for (auto& g : g_item.data) g *= inv;
            adam_step(std::span<double>(model.user_factors.data), g_user.data, st_user);
            adam_step(std::span<double>(model.item_factors.data), g_item.data, st_item);
            if (cfg.use_biases) {
                for (auto& g : g_ubias) g *= inv;
                for (auto& g : g_ibias) g *= inv;
                adam_step(std::span<double>(model.user_bias), g_ubias, st_ubias);
                adam_step(std::span<double>(model.item_bias), g_ibias, st_ibias);
            }
        }

        const double mean_loss =
            example_count ? loss_sum / static_cast<double>(example_count) : 0.0;
        auto score_all = [&model](std::int32_t u) { return score_all_items(model, u); };
        detail::eval_epoch(model, ds, cfg, score_all, epoch, mean_loss, result.trace, result,
                           best_mrr);
    }

    if (result.best_epoch == 0) {  // no snapshot kept: return the final model
        result.model = std::move(model);
        result.best_epoch = cfg.epochs;
    }
    return result;
}

/// Fits an NCFN model with BPR. Gradients flow through the MLP and, unless
/// the embeddings are frozen, into the touched embedding rows.
inline TrainResult<NcfnModel> train_model(NcfnModel model, const InteractionDataset& ds,
                                          const TrainConfig& cfg) {
    detail::check_config(cfg, ds);
    if (cfg.loss != Loss::BPR)
        throw Error("train: the neural model trains with BPR on implicit data only");

    const auto m = model.factors.user_factors.rows;
    const auto n = model.factors.item_factors.rows;
    const auto p = static_cast<std::size_t>(model.factors.p);
    const bool train_embeddings = cfg.embedding_mode != EmbeddingMode::PretrainedFixed;

    MlpGradients net_grads(model.net);
    Matrix g_user(m, p), g_item(n, p);
    std::vector<AdamState> st_weights, st_bias;
    for (const auto& layer : model.net.layers) {
        st_weights.emplace_back(layer.weights.data.size(), cfg.learning_rate, cfg.beta1, cfg.beta2,
                                cfg.eps);
        st_bias.emplace_back(layer.bias.size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    }
    AdamState st_user(m * p, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
    AdamState st_item(n * p, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);

    auto indices = detail::train_indices(ds, true);
    Rng rng(cfg.seed);

    MlpTape tape_pos, tape_neg;
    std::vector<double> input;

    TrainResult<NcfnModel> result;
    double best_mrr = -1.0;
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

    for (std::int32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(indices);
        double loss_sum = 0.0;
        std::size_t example_count = 0;

        for (std::size_t start = 0, batch_no = 0; start < indices.size();
             start += batch_size, ++batch_no) {
            const std::size_t end = std::min(indices.size(), start + batch_size);
            const auto count = static_cast<double>(end - start);
            net_grads.zero();
            if (train_embeddings) {
                g_user.fill(0.0);
                g_item.fill(0.0);
            }

            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const auto& it = ds.interactions[indices[k]];
                const std::int32_t neg = sample_negative(ds, it.user, rng);
                const auto u = static_cast<std::size_t>(it.user);
                const auto i = static_cast<std::size_t>(it.item);
                const auto j = static_cast<std::size_t>(neg);

                const auto e_u = model.factors.user_factors.row(u);
                const auto e_i = model.factors.item_factors.row(i);
                const auto e_j = model.factors.item_factors.row(j);

                build_input_into(model.net.modeling, e_u, e_i, input);
                const double s_pos = forward(model.net, input, tape_pos);
                build_input_into(model.net.modeling, e_u, e_j, input);
                const double s_neg = forward(model.net, input, tape_neg);

                const auto bg = bpr_loss_and_grads(s_pos, s_neg);
                batch_loss += bg.loss;

                std::fill(net_grads.input.begin(), net_grads.input.end(), 0.0);
                backward(model.net, tape_pos, bg.d_pos, net_grads);
                if (train_embeddings)
                    backprop_to_embeddings(model.net.modeling, net_grads.input, e_u, e_i,
                                           g_user.row(u), g_item.row(i));

                std::fill(net_grads.input.begin(), net_grads.input.end(), 0.0);
                backward(model.net, tape_neg, bg.d_neg, net_grads);
                if (train_embeddings)
                    backprop_to_embeddings(model.net.modeling, net_grads.input, e_u, e_j,
                                           g_user.row(u), g_item.row(j));
            }
            detail::check_finite_loss(batch_loss, epoch, batch_no);
            loss_sum += batch_loss;
            example_count += end - start;

            const double inv = 1.0 / count;
            for (std::size_t l = 0; l < model.net.layers.size(); ++l) {
                for (auto& g : net_grads.weights[l].data) g *= inv;
                for (auto& g : net_grads.bias[l]) g *= inv;
                adam_step(std::span<double>(model.net.layers[l].weights.data),
                          net_grads.weights[l].data, st_weights[l]);
                adam_step(std::span<double>(model.net.layers[l].bias), net_grads.bias[l],
                          st_bias[l]);
            }
            if (train_embeddings) {
                for (auto& g : g_user.data) g *= inv;
                for (auto& g : g_item.data) g *= inv;
                adam_step(std::span<double>(model.factors.user_factors.data), g_user.data, st_user);
                adam_step(std::span<double>(model.factors.item_factors.data), g_item.data, st_item);
            }
        }

        const double mean_loss =
            example_count ? loss_sum / static_cast<double>(example_count) : 0.0;
        auto score_all = [&model](std::int32_t u) { return model.score_all_items(u); };
        detail::eval_epoch(model, ds, cfg, score_all, epoch, mean_loss, result.trace, result,
                           best_mrr);
    }

    if (result.best_epoch == 0) {
        result.model = std::move(model);
        result.best_epoch = cfg.epochs;
    }
    return result;
}

}  // namespace cflab
