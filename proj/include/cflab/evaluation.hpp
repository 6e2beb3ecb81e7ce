#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "cflab/core.hpp"
#include "cflab/dataset.hpp"

namespace cflab {

/// Ranking metrics over the masked full-item candidate list, macro-averaged
/// across users that hold at least one test positive.
struct EvalReport {
    double mrr = 0.0;
    double map_at_10 = 0.0;
    double auc = 0.0;
    std::int32_t users_evaluated = 0;
};

template <class ScoreFn>
concept ItemScorer = requires(const ScoreFn& fn, std::int32_t user) {
    { fn(user) } -> std::convertible_to<std::vector<double>>;
};

namespace detail {

/// Per-user test positives (label > 0 in the test partition), sorted.
inline std::vector<std::vector<std::int32_t>> test_positive_sets(const InteractionDataset& ds) {
    std::vector<std::vector<std::int32_t>> sets(static_cast<std::size_t>(ds.maps.m));
    if (ds.split.empty()) return sets;
    for (std::size_t idx = 0; idx < ds.interactions.size(); ++idx) {
        const auto& it = ds.interactions[idx];
        if (it.label > 0.0 && ds.split[idx] == SplitPart::Test)
            sets[static_cast<std::size_t>(it.user)].push_back(it.item);
    }
    for (auto& s : sets) std::sort(s.begin(), s.end());
    return sets;
}

struct Candidate {
    double score;
    std::int32_t item;
    bool relevant;
};

struct UserMetrics {
    double rr = 0.0;
    double ap10 = 0.0;
    double auc = 0.0;
    bool has_auc = false;
    bool evaluated = false;
};

/// Candidates = all items minus the user's train positives, ordered by
/// score descending with ascending item index breaking ties.
inline void build_candidates(const InteractionDataset& ds, std::int32_t user,
                             const std::vector<double>& scores,
                             const std::vector<std::int32_t>& test_pos,
                             std::vector<Candidate>& out) {
    const auto& train_pos = ds.user_positive_sets[static_cast<std::size_t>(user)];
    out.clear();
    out.reserve(scores.size() - train_pos.size());
    for (std::int32_t item = 0; item < ds.maps.n; ++item) {
        if (std::binary_search(train_pos.begin(), train_pos.end(), item)) continue;
        const bool rel = std::binary_search(test_pos.begin(), test_pos.end(), item);
        out.push_back({scores[static_cast<std::size_t>(item)], item, rel});
    }
    std::sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.item < b.item;
    });
}

inline UserMetrics user_metrics(const InteractionDataset& ds, std::int32_t user,
                                const std::vector<double>& scores,
                                const std::vector<std::int32_t>& test_pos,
                                std::vector<Candidate>& scratch) {
    UserMetrics m;
    if (test_pos.empty()) return m;
    m.evaluated = true;
    build_candidates(ds, user, scores, test_pos, scratch);
    const auto& cands = scratch;

    std::size_t total_rel = 0;
    for (const auto& c : cands) total_rel += c.relevant;

    // reciprocal rank of the first relevant candidate (1-based)
    for (std::size_t k = 0; k < cands.size(); ++k) {
        if (cands[k].relevant) {
            m.rr = 1.0 / static_cast<double>(k + 1);
            break;
        }
    }

    // AP@10 with the bounded normalizer min(|rel|, 10)
    double ap = 0.0;
    std::size_t hits = 0;
    const std::size_t cutoff = std::min<std::size_t>(10, cands.size());
    for (std::size_t k = 0; k < cutoff; ++k) {
        if (cands[k].relevant) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    m.ap10 = ap / static_cast<double>(std::min<std::size_t>(total_rel, 10));

    // AUC by tie-grouped pair counting: strictly-higher pairs win, ties 0.5
    const std::size_t n_pos = total_rel;
    const std::size_t n_neg = cands.size() - total_rel;
    if (n_pos > 0 && n_neg > 0) {
        double wins = 0.0;
        std::size_t neg_below = 0;
        std::size_t g_end = cands.size();
        while (g_end > 0) {
            std::size_t g_begin = g_end;
            const double s = cands[g_end - 1].score;
            while (g_begin > 0 && cands[g_begin - 1].score == s) --g_begin;
            std::size_t g_pos = 0;
            for (std::size_t k = g_begin; k < g_end; ++k) g_pos += cands[k].relevant;
            const std::size_t g_neg = (g_end - g_begin) - g_pos;
            wins += static_cast<double>(g_pos) * static_cast<double>(neg_below);
            wins += 0.5 * static_cast<double>(g_pos) * static_cast<double>(g_neg);
            neg_below += g_neg;
            g_end = g_begin;
        }
        m.auc = wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
        m.has_auc = true;
    }
    return m;
}

}  // namespace detail

/// Candidate items for one user, best first. Ties break toward the lower
/// item index, so the permutation is deterministic.
template <ItemScorer ScoreFn>
std::vector<std::int32_t> rank_items(const ScoreFn& score_fn, const InteractionDataset& ds,
                                     std::int32_t user) {
    const std::vector<double> scores = score_fn(user);
    const auto test_sets = detail::test_positive_sets(ds);
    std::vector<detail::Candidate> cands;
    detail::build_candidates(ds, user, scores, test_sets[static_cast<std::size_t>(user)], cands);
    std::vector<std::int32_t> out(cands.size());
    for (std::size_t k = 0; k < cands.size(); ++k) out[k] = cands[k].item;
    return out;
}

/// MRR, MAP@10 and AUC in one sweep. Per-user work may fan out over
/// `nthreads`; the reduction order is fixed, so results are deterministic.
template <ItemScorer ScoreFn>
EvalReport evaluate(const ScoreFn& score_fn, const InteractionDataset& ds, int nthreads = 1) {
    if (ds.split.empty()) throw Error("evaluate: dataset has no train/test split");
    const auto test_sets = detail::test_positive_sets(ds);

    std::vector<std::int32_t> users;
    for (std::int32_t u = 0; u < ds.maps.m; ++u)
        if (!test_sets[static_cast<std::size_t>(u)].empty()) users.push_back(u);
    if (users.empty()) throw Error("evaluate: no user has test positives");

    std::vector<detail::UserMetrics> results(users.size());
    auto worker = [&](std::size_t begin, std::size_t end) {
        std::vector<detail::Candidate> scratch;
        for (std::size_t k = begin; k < end; ++k) {
            const auto u = users[k];
            const std::vector<double> scores = score_fn(u);
            results[k] =
                detail::user_metrics(ds, u, scores, test_sets[static_cast<std::size_t>(u)], scratch);
        }
    };

    if (nthreads <= 1 || users.size() < 2) {
        worker(0, users.size());
    } else {
        const auto nt = std::min<std::size_t>(static_cast<std::size_t>(nthreads), users.size());
        std::vector<std::thread> threads;
        const std::size_t chunk = (users.size() + nt - 1) / nt;
        for (std::size_t t = 0; t < nt; ++t) {
            const std::size_t b = t * chunk;
            const std::size_t e = std::min(users.size(), b + chunk);
            if (b < e) threads.emplace_back(worker, b, e);
        }
        for (auto& th : threads) th.join();
    }

    EvalReport rep;
    double sum_rr = 0.0, sum_ap = 0.0, sum_auc = 0.0;
    std::int32_t n_auc = 0;
    for (const auto& r : results) {
        sum_rr += r.rr;
        sum_ap += r.ap10;
        if (r.has_auc) {
            sum_auc += r.auc;
            ++n_auc;
        }
        ++rep.users_evaluated;
    }
    rep.mrr = sum_rr / rep.users_evaluated;
    rep.map_at_10 = sum_ap / rep.users_evaluated;
    rep.auc = n_auc > 0 ? sum_auc / n_auc : 0.0;
    return rep;
}

template <ItemScorer ScoreFn>
double mrr(const ScoreFn& fn, const InteractionDataset& ds) {
    return evaluate(fn, ds).mrr;
}

template <ItemScorer ScoreFn>
double map_at_10(const ScoreFn& fn, const InteractionDataset& ds) {
    return evaluate(fn, ds).map_at_10;
}

template <ItemScorer ScoreFn>
double auc(const ScoreFn& fn, const InteractionDataset& ds) {
    return evaluate(fn, ds).auc;
}

}  // namespace cflab
