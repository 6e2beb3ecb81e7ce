#pragma once

#include <cstdint>
#include <vector>

#include "cflab/core.hpp"
#include "cflab/rng.hpp"

namespace cflab {

/// User/item latent factors plus bias vectors. Doubles as the embedding
/// table for the neural models (which ignore the biases).
struct LatentFactors {
    Matrix user_factors;  // m x p
    Matrix item_factors;  // n x p
    std::vector<double> user_bias;  // m
    std::vector<double> item_bias;  // n
    std::int32_t p = 0;
    std::uint64_t seed = 0;

    std::int32_t m() const { return static_cast<std::int32_t>(user_factors.rows); }
    std::int32_t n() const { return static_cast<std::int32_t>(item_factors.rows); }

    friend bool operator==(const LatentFactors&, const LatentFactors&) = default;
};

/// Factor entries ~ Normal(0, scale^2), biases zero. scale < 0 selects the
/// default 1/sqrt(p).
inline LatentFactors init_factors(std::int32_t m, std::int32_t n, std::int32_t p,
                                  std::uint64_t seed, double scale = -1.0) {
    if (m < 1 || n < 1 || p < 1)
        throw Error("init_factors: dimensions must be positive");
    if (scale < 0.0) scale = 1.0 / std::sqrt(static_cast<double>(p));

    LatentFactors f;
    f.p = p;
    f.seed = seed;
    f.user_factors = Matrix(static_cast<std::size_t>(m), static_cast<std::size_t>(p));
    f.item_factors = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(p));
    f.user_bias.assign(static_cast<std::size_t>(m), 0.0);
    f.item_bias.assign(static_cast<std::size_t>(n), 0.0);

    Rng rng(seed);
    for (auto& x : f.user_factors.data) x = rng.normal(0.0, scale);
    for (auto& x : f.item_factors.data) x = rng.normal(0.0, scale);
    return f;
}

/// Biased dot product e_u . e_i + b_u + b_i.
inline double score(const LatentFactors& f, std::int32_t user, std::int32_t item) {
    if (user < 0 || user >= f.m()) throw Error("score: user index out of range");
    if (item < 0 || item >= f.n()) throw Error("score: item index out of range");
    const auto u = static_cast<std::size_t>(user);
    const auto i = static_cast<std::size_t>(item);
    return dot(f.user_factors.row(u), f.item_factors.row(i)) + f.user_bias[u] + f.item_bias[i];
}

/// Scores of one user against every item.
inline std::vector<double> score_all_items(const LatentFactors& f, std::int32_t user) {
    if (user < 0 || user >= f.m()) throw Error("score_all_items: user index out of range");
    const auto u = static_cast<std::size_t>(user);
    const auto e_u = f.user_factors.row(u);
    const double b_u = f.user_bias[u];
    std::vector<double> out(f.item_factors.rows);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = dot(e_u, f.item_factors.row(i)) + b_u + f.item_bias[i];
    return out;
}

}  // namespace cflab
