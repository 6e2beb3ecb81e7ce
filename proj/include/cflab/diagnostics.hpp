#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "cflab/core.hpp"
#include "cflab/dataset.hpp"
#include "cflab/factorization.hpp"

namespace cflab {

/// Sample covariance with 1/(N-1) normalization; single-pass co-moment.
inline double covariance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("covariance: length mismatch");
    if (x.size() < 2) throw Error("covariance: need at least 2 observations");
    double mean_x = 0.0, mean_y = 0.0, comoment = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mean_x;
        mean_x += dx / static_cast<double>(i + 1);
        mean_y += (y[i] - mean_y) / static_cast<double>(i + 1);
        comoment += dx * (y[i] - mean_y);
    }
    return comoment / static_cast<double>(x.size() - 1);
}

struct PearsonResult {
    double rho;
    double p_value;  // two-sided, from the t statistic with N-2 dof
};

inline PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("pearson: length mismatch");
    if (x.size() < 3) throw Error("pearson: need at least 3 observations");
    const double var_x = covariance(x, x);
    const double var_y = covariance(y, y);
    if (var_x <= 0.0 || var_y <= 0.0)
        throw Error("pearson: correlation undefined for constant input");
    const double rho = covariance(x, y) / std::sqrt(var_x * var_y);

    const auto dof = static_cast<double>(x.size() - 2);
    const double denom = 1.0 - rho * rho;
    double p = 0.0;
    if (denom > 0.0) {
        const double t = rho * std::sqrt(dof / denom);
        const boost::math::students_t_distribution<double> dist(dof);
        p = 2.0 * boost::math::cdf(dist, -std::abs(t));
    }
    return {rho, p};
}

enum class View { User, Item };

inline const char* to_string(View v) { return v == View::User ? "user" : "item"; }

/// Pearson correlation between an entity's latent vector and the
/// per-component covariances of its interaction vector with the other
/// side's factor columns.
struct EntityCorrelation {
    std::int32_t entity = 0;
    double rho = std::numeric_limits<double>::quiet_NaN();
    double p_value = std::numeric_limits<double>::quiet_NaN();
    bool retained = false;
    bool defined = false;  // false when a constant vector made rho undefined
};

namespace detail {

/// rho(e_entity, c) where c_k = cov(interaction vector, factor column k).
inline EntityCorrelation correlate_entity(std::span<const double> interaction_vec,
                                          const Matrix& other_factors,
                                          std::span<const double> own_vector, std::int32_t entity,
                                          double alpha) {
    const std::size_t p = other_factors.cols;
    std::vector<double> column(other_factors.rows);
    std::vector<double> covs(p);
    for (std::size_t k = 0; k < p; ++k) {
        for (std::size_t r = 0; r < other_factors.rows; ++r) column[r] = other_factors(r, k);
        covs[k] = covariance(interaction_vec, column);
    }

    EntityCorrelation out;
    out.entity = entity;
    try {
        const auto [rho, p_value] = pearson(own_vector, covs);
        out.rho = rho;
        out.p_value = p_value;
        out.defined = true;
        out.retained = p_value < alpha;
    } catch (const Error&) {
        // constant interaction vector (or degenerate factors): not retained
    }
    return out;
}

/// Dense interaction vector of one user over all items: stored label where
/// an interaction exists (implicit: 1), zero elsewhere.
inline std::vector<double> user_interaction_vector(const InteractionDataset& ds,
                                                   std::int32_t user) {
    std::vector<double> r(static_cast<std::size_t>(ds.maps.n), 0.0);
    for (const auto& it : ds.interactions)
        if (it.user == user) r[static_cast<std::size_t>(it.item)] = it.label;
    return r;
}

inline std::vector<double> item_interaction_vector(const InteractionDataset& ds,
                                                   std::int32_t item) {
    std::vector<double> r(static_cast<std::size_t>(ds.maps.m), 0.0);
    for (const auto& it : ds.interactions)
        if (it.item == item) r[static_cast<std::size_t>(it.user)] = it.label;
    return r;
}

}  // namespace detail

inline EntityCorrelation user_correlation(const LatentFactors& factors,
                                          const InteractionDataset& ds, std::int32_t user,
                                          double alpha = 0.05) {
    if (factors.p < 3) throw Error("user_correlation: needs p >= 3 latent components");
    if (user < 0 || user >= ds.maps.m) throw Error("user_correlation: user index out of range");
    const auto r = detail::user_interaction_vector(ds, user);
    return detail::correlate_entity(r, factors.item_factors,
                                    factors.user_factors.row(static_cast<std::size_t>(user)), user,
                                    alpha);
}

inline EntityCorrelation item_correlation(const LatentFactors& factors,
                                          const InteractionDataset& ds, std::int32_t item,
                                          double alpha = 0.05) {
    if (factors.p < 3) throw Error("item_correlation: needs p >= 3 latent components");
    if (item < 0 || item >= ds.maps.n) throw Error("item_correlation: item index out of range");
    const auto r = detail::item_interaction_vector(ds, item);
    return detail::correlate_entity(r, factors.user_factors,
                                    factors.item_factors.row(static_cast<std::size_t>(item)), item,
                                    alpha);
}

/// All user-view and item-view correlations in one pass over the data.
struct CorrelationSweep {
    std::vector<EntityCorrelation> users;
    std::vector<EntityCorrelation> items;
};

inline CorrelationSweep correlation_sweep(const LatentFactors& factors,
                                          const InteractionDataset& ds, double alpha = 0.05) {
    if (factors.p < 3) throw Error("correlation_sweep: needs p >= 3 latent components");
    CorrelationSweep sweep;
    sweep.users.reserve(static_cast<std::size_t>(ds.maps.m));
    sweep.items.reserve(static_cast<std::size_t>(ds.maps.n));

    // adjacency avoids rescanning the interaction list per entity
    std::vector<std::vector<std::pair<std::int32_t, double>>> by_user(
        static_cast<std::size_t>(ds.maps.m));
    std::vector<std::vector<std::pair<std::int32_t, double>>> by_item(
        static_cast<std::size_t>(ds.maps.n));
    for (const auto& it : ds.interactions) {
        by_user[static_cast<std::size_t>(it.user)].emplace_back(it.item, it.label);
        by_item[static_cast<std::size_t>(it.item)].emplace_back(it.user, it.label);
    }

    std::vector<double> r_items(static_cast<std::size_t>(ds.maps.n), 0.0);
    for (std::int32_t u = 0; u < ds.maps.m; ++u) {
        for (const auto& [item, label] : by_user[static_cast<std::size_t>(u)])
            r_items[static_cast<std::size_t>(item)] = label;
        sweep.users.push_back(detail::correlate_entity(
            r_items, factors.item_factors, factors.user_factors.row(static_cast<std::size_t>(u)),
            u, alpha));
        for (const auto& [item, label] : by_user[static_cast<std::size_t>(u)])
            r_items[static_cast<std::size_t>(item)] = 0.0;
    }

    std::vector<double> r_users(static_cast<std::size_t>(ds.maps.m), 0.0);
    for (std::int32_t i = 0; i < ds.maps.n; ++i) {
        for (const auto& [user, label] : by_item[static_cast<std::size_t>(i)])
            r_users[static_cast<std::size_t>(user)] = label;
        sweep.items.push_back(detail::correlate_entity(
            r_users, factors.user_factors, factors.item_factors.row(static_cast<std::size_t>(i)),
            i, alpha));
        for (const auto& [user, label] : by_item[static_cast<std::size_t>(i)])
            r_users[static_cast<std::size_t>(user)] = 0.0;
    }
    return sweep;
}

/// Distribution summary over the retained correlations.
struct CorrelationStats {
    std::size_t n = 0;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double sigma = std::numeric_limits<double>::quiet_NaN();
    double min = std::numeric_limits<double>::quiet_NaN();
    double q25 = std::numeric_limits<double>::quiet_NaN();
    double median = std::numeric_limits<double>::quiet_NaN();
    double q75 = std::numeric_limits<double>::quiet_NaN();
    double max = std::numeric_limits<double>::quiet_NaN();
    bool empty = true;
};

inline std::vector<double> retained_rhos(const std::vector<EntityCorrelation>& correlations) {
    std::vector<double> out;
    for (const auto& c : correlations)
        if (c.retained) out.push_back(c.rho);
    return out;
}

/// Quantile by linear interpolation between order statistics; v sorted.
inline double quantile_sorted(const std::vector<double>& v, double q) {
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline CorrelationStats summarize(const std::vector<EntityCorrelation>& correlations) {
    auto rhos = retained_rhos(correlations);
    CorrelationStats stats;
    stats.n = rhos.size();
    if (rhos.empty()) return stats;
    stats.empty = false;
    std::sort(rhos.begin(), rhos.end());

    double sum = 0.0;
    for (double r : rhos) sum += r;
    stats.mean = sum / static_cast<double>(rhos.size());
    double ss = 0.0;
    for (double r : rhos) ss += (r - stats.mean) * (r - stats.mean);
    stats.sigma = rhos.size() > 1 ? std::sqrt(ss / static_cast<double>(rhos.size() - 1)) : 0.0;

    stats.min = rhos.front();
    stats.q25 = quantile_sorted(rhos, 0.25);
    stats.median = quantile_sorted(rhos, 0.5);
    stats.q75 = quantile_sorted(rhos, 0.75);
    stats.max = rhos.back();
    return stats;
}

/// Fixed-width histogram over [lo, hi]; values at hi land in the last bin.
struct Histogram {
    std::vector<double> edges;  // nbins + 1
    std::vector<std::size_t> counts;
};

inline Histogram histogram(const std::vector<double>& values, double lo, double hi,
                           std::size_t nbins) {
    if (!(hi > lo) || nbins == 0) throw Error("histogram: bad range or bin count");
    Histogram h;
    h.edges.resize(nbins + 1);
    h.counts.assign(nbins, 0);
    const double width = (hi - lo) / static_cast<double>(nbins);
    for (std::size_t b = 0; b <= nbins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
    for (double v : values) {
        if (v < lo || v > hi) continue;
        auto bin = static_cast<std::size_t>((v - lo) / width);
        if (bin >= nbins) bin = nbins - 1;
        ++h.counts[bin];
    }
    return h;
}

}  // namespace cflab
