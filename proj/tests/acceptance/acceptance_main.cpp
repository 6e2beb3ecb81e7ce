// Acceptance suite. Runs every numbered criterion and prints one PASS/FAIL
// line each. Criteria 1-5 need the MovieLens ml-latest-small ratings.csv
// (--ratings, CFLAB_ML_RATINGS, or data/ml-latest-small/ratings.csv in the
// source tree); 6-10 are self-contained.
//
// usage: acceptance [--ratings PATH] [--out DIR] [--criteria 1,2,5] [--jobs N]

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cflab/dataset.hpp"
#include "cflab/diagnostics.hpp"
#include "cflab/harness.hpp"
#include "cflab/model_io.hpp"
#include "cflab/training.hpp"

#include "../support.hpp"

namespace fs = std::filesystem;
using namespace cflab;
using Clock = std::chrono::steady_clock;

namespace {

struct Options {
    std::string ratings;
    std::string out = "acceptance_out";
    std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    int jobs = 0;
};

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string locate_ratings(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("CFLAB_ML_RATINGS"); env && *env) return env;
    const fs::path in_tree = fs::path(CFLAB_SOURCE_DIR) / "data" / "ml-latest-small" / "ratings.csv";
    if (fs::exists(in_tree)) return in_tree.string();
    const fs::path local = fs::path("data") / "ml-latest-small" / "ratings.csv";
    if (fs::exists(local)) return local.string();
    return in_tree.string();  // reported in failure messages
}

std::string fmt(double v) { return fmt_double(v); }

// Shared state across dataset-dependent criteria so the expensive fits run
// once even when several criteria are selected.
struct Context {
    Options opt;
    std::string ratings_path;
    bool dataset_available = false;

    std::optional<std::vector<RawRating>> ratings;
    std::optional<CorrelationStats> stats[4];  // impl-user, impl-item, expl-user, expl-item
    std::optional<LraSearchOutcome> search;
    std::optional<InteractionDataset> split_ds;

    std::string missing_message() const {
        return "ml-latest-small not found at '" + ratings_path +
               "' (pass --ratings, set CFLAB_ML_RATINGS, or unzip the dataset into "
               "data/ml-latest-small/)";
    }

    const std::vector<RawRating>& load() {
        if (!ratings) ratings = load_ratings(ratings_path);
        return *ratings;
    }

    void ensure_diagnostics() {
        if (stats[0]) return;
        const auto& raw = load();
        const auto maps = build_index_maps(raw);

        TrainConfig cfg;  // the fixed fitting recipe: p=32, batch 128, 15 epochs, lr 0.003
        cfg.batch_size = 128;
        cfg.epochs = 15;
        cfg.learning_rate = 0.003;
        cfg.seed = 42;
        cfg.p = 32;
        cfg.eval_each_epoch = false;
        cfg.keep_best_mrr = false;

        {
            auto ds = binarize_implicit(raw, maps);
            cfg.loss = Loss::BPR;
            auto fit = train_model(init_factors(maps.m, maps.n, 32, cfg.seed), ds, cfg);
            const auto sweep = correlation_sweep(fit.model, ds, 0.05);
            stats[0] = summarize(sweep.users);
            stats[1] = summarize(sweep.items);
        }
        {
            auto ds = binarize_explicit(raw, maps);
            cfg.loss = Loss::BCE;
            auto fit = train_model(init_factors(maps.m, maps.n, 32, cfg.seed), ds, cfg);
            const auto sweep = correlation_sweep(fit.model, ds, 0.05);
            stats[2] = summarize(sweep.users);
            stats[3] = summarize(sweep.items);
        }
    }

    const InteractionDataset& ensure_split_dataset() {
        if (!split_ds) {
            const auto& raw = load();
            auto ds = binarize_implicit(raw, build_index_maps(raw));
            split_train_test(ds, 0.8, 42);
            split_ds = std::move(ds);
        }
        return *split_ds;
    }

    const LraSearchOutcome& ensure_search() {
        if (!search) {
            const auto& ds = ensure_split_dataset();
            LraGrid grid;  // p x lr x 2 seeds, 20 epochs, best-MRR snapshots
            grid.p_values = {16, 32, 64};
            grid.learning_rates = {0.001, 0.003, 0.01};
            grid.seeds = {101, 211};
            grid.epochs = 20;
            search = lra_search(ds, grid, opt.jobs, 1, &std::cerr);
        }
        return *search;
    }
};

// --- criteria 1-5: the reference dataset ------------------------------------

Outcome criterion_dataset_fidelity(Context& ctx) {
    const auto t0 = Clock::now();
    const auto& raw = ctx.load();
    const auto maps = build_index_maps(raw);
    const auto implicit_ds = binarize_implicit(raw, maps);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

    std::ostringstream d;
    d << "ratings=" << raw.size() << " m=" << maps.m << " n=" << maps.n
      << " positives=" << implicit_ds.interactions.size() << " in " << fmt(secs) << "s";
    const bool pass = raw.size() == 100836 && maps.m == 610 && maps.n == 9724 &&
                      implicit_ds.interactions.size() == 54732 && secs < 10.0;
    return {pass, d.str()};
}

Outcome criterion_covariance_means(Context& ctx) {
    ctx.ensure_diagnostics();
    const double want_mean[4] = {0.8246, 0.7256, 0.8987, 0.8156};
    const double want_n[4] = {610, 4275, 610, 6278};
    const char* label[4] = {"implicit/user", "implicit/item", "explicit/user", "explicit/item"};

    std::ostringstream d;
    bool pass = true;
    for (int k = 0; k < 4; ++k) {
        const auto& s = *ctx.stats[k];
        const bool mean_ok = !s.empty && std::abs(s.mean - want_mean[k]) <= 0.05;
        const bool n_ok = std::abs(static_cast<double>(s.n) - want_n[k]) <= 0.15 * want_n[k];
        pass = pass && mean_ok && n_ok;
        d << label[k] << " mean=" << (s.empty ? "n/a" : fmt(s.mean)) << " (want " << fmt(want_mean[k])
          << "+-0.05) n=" << s.n << " (want " << fmt(want_n[k]) << "+-15%)"
          << (k < 3 ? "; " : "");
    }
    return {pass, d.str()};
}

Outcome criterion_medians(Context& ctx) {
    ctx.ensure_diagnostics();
    const double want[4] = {0.8425, 0.7472, 0.9034, 0.8433};
    const char* label[4] = {"implicit/user", "implicit/item", "explicit/user", "explicit/item"};
    std::ostringstream d;
    bool pass = true;
    for (int k = 0; k < 4; ++k) {
        const auto& s = *ctx.stats[k];
        const bool ok = !s.empty && std::abs(s.median - want[k]) <= 0.05;
        pass = pass && ok;
        d << label[k] << " median=" << (s.empty ? "n/a" : fmt(s.median)) << " (want " << fmt(want[k])
          << "+-0.05)" << (k < 3 ? "; " : "");
    }
    return {pass, d.str()};
}

Outcome criterion_lra_level(Context& ctx) {
    const auto& outcome = ctx.ensure_search();
    const double mrr = outcome.best.report.mrr;
    const double auc_value = outcome.best.report.auc;
    const bool mrr_ok = std::abs(mrr - 0.0436) <= 0.30 * 0.0436;
    const bool auc_ok = std::abs(auc_value - 0.9211) <= 0.02;
    std::ostringstream d;
    d << "mf_best=" << outcome.best.id() << " mrr=" << fmt(mrr)
      << " (want 0.0436+-30%) auc=" << fmt(auc_value) << " (want 0.9211+-0.02)";
    return {mrr_ok && auc_ok, d.str()};
}

Outcome criterion_orderings(Context& ctx) {
    const auto& search = ctx.ensure_search();
    const auto& ds = ctx.ensure_split_dataset();

    NcfnGrid grid;  // reduced: 1 seed, lr 0.003, L in {0,1,2}, ReLU+tanh
    grid.architectures = {{0, std::nullopt},
                          {1, Activation::ReLU},
                          {1, Activation::Tanh},
                          {2, Activation::ReLU},
                          {2, Activation::Tanh}};
    grid.learning_rates = {0.003};
    grid.seeds = {101};
    grid.epochs = 20;
    grid.p = search.best_factors.p;  // pretrained settings must share the latent space

    const auto specs = enumerate_grid(grid);
    const fs::path out_dir = fs::path(ctx.opt.out) / "ordering_grid";
    fs::create_directories(out_dir);
    const auto results = run_grid(ds, &search.best_factors, specs, out_dir.string(), true,
                                  ctx.opt.jobs, 1, &std::cerr);
    const auto table = best_per_setting(results, search.best.report);
    write_table2_csv((fs::path(ctx.opt.out) / "table2.csv").string(), table);
    write_figure3_csv((fs::path(ctx.opt.out) / "figure3.csv").string(), table);
    write_figure3_svg((fs::path(ctx.opt.out) / "figure3.svg").string(), table);

    auto row = [&table](InputModeling mo, EmbeddingMode em) -> const SettingRow& {
        for (const auto& r : table.rows)
            if (r.modeling == mo && r.embedding_mode == em) return r;
        throw Error("setting row missing");
    };
    const auto& concat_learned = row(InputModeling::Concat, EmbeddingMode::Learned);
    const auto& hadamard_pre = row(InputModeling::Hadamard, EmbeddingMode::PretrainedAdjustable);
    const double mf_mrr = search.best.report.mrr;
    const double mf_auc = search.best.report.auc;

    bool pass = true;
    std::ostringstream d;
    for (const auto& r : table.rows)
        if (r.missing) pass = false;

    // (a) concat/learned strictly below the baseline on MRR and AUC
    const bool a_ok = !concat_learned.missing && concat_learned.report.mrr < mf_mrr &&
                      concat_learned.report.auc < mf_auc;
    // (b) hadamard/pretrained tops every setting and beats the baseline
    bool b_ok = !hadamard_pre.missing && hadamard_pre.report.mrr > mf_mrr;
    for (const auto& r : table.rows)
        if (!(r.modeling == InputModeling::Hadamard &&
              r.embedding_mode == EmbeddingMode::PretrainedAdjustable) &&
            !r.missing && r.report.mrr >= hadamard_pre.report.mrr)
            b_ok = false;
    // (c) pretraining never hurts a setting's MRR
    bool c_ok = true;
    for (auto mo : {InputModeling::Concat, InputModeling::Hadamard}) {
        const auto& learned = row(mo, EmbeddingMode::Learned);
        for (auto em : {EmbeddingMode::PretrainedAdjustable, EmbeddingMode::PretrainedFixed}) {
            const auto& pre = row(mo, em);
            if (learned.missing || pre.missing || pre.report.mrr < learned.report.mrr) c_ok = false;
        }
    }
    pass = pass && a_ok && b_ok && c_ok;

    d << "(a) concat/learned below baseline: " << (a_ok ? "yes" : "NO") << " [mrr "
      << fmt(concat_learned.report.mrr) << " vs " << fmt(mf_mrr) << ", auc "
      << fmt(concat_learned.report.auc) << " vs " << fmt(mf_auc) << "]; ";
    d << "(b) hadamard/pretrained on top and above baseline: " << (b_ok ? "yes" : "NO") << " [mrr "
      << fmt(hadamard_pre.report.mrr) << "]; ";
    d << "(c) pretrained >= learned per setting: " << (c_ok ? "yes" : "NO");
    return {pass, d.str()};
}

// --- criterion 6: gradient correctness ----------------------------------------

LatentFactors tiny_factors(std::uint64_t seed) {
    LatentFactors f;
    f.p = 4;
    f.seed = seed;
    f.user_factors = Matrix(2, 4);
    f.item_factors = Matrix(3, 4);
    f.user_bias.assign(2, 0.0);
    f.item_bias.assign(3, 0.0);
    Rng rng(seed);
    for (auto& x : f.user_factors.data) x = rng.normal(0.0, 0.8);
    for (auto& x : f.item_factors.data) x = rng.normal(0.0, 0.8);
    return f;
}

bool grad_close(double analytic, double numeric, double tol) {
    return std::abs(analytic - numeric) <=
           tol * std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

// finite differences need ReLU pre-activations clear of the kink
bool kink_free(const MlpNetwork& net, const std::vector<double>& input) {
    if (net.hidden_count == 0 || net.activation != Activation::ReLU) return true;
    MlpTape tape;
    forward(net, input, tape);
    for (std::size_t l = 0; l + 1 < tape.pre.size(); ++l)
        for (double z : tape.pre[l])
            if (std::abs(z) < 1e-3) return false;
    return true;
}

Outcome criterion_gradients(Context&) {
    const double h = 1e-5, tol = 1e-5;
    int checked = 0, bad = 0;
    std::string first_bad;

    for (auto modeling : {InputModeling::Concat, InputModeling::Hadamard}) {
        for (const auto& arch : enumerate_architectures()) {
            for (const bool use_bpr : {true, false}) {
                auto factors = tiny_factors(500 + static_cast<std::uint64_t>(arch.hidden_count));
                auto net = build_network(modeling, 4, arch, 900 + static_cast<std::uint64_t>(checked));

                // configuration: user 0 with positive item 1 (and negative 2 for BPR)
                auto loss_of = [&](const LatentFactors& f, const MlpNetwork& nn) {
                    MlpScratch s;
                    NcfnModel m{f, nn};
                    if (use_bpr)
                        return bpr_loss_and_grads(m.score_pair(0, 1, s), m.score_pair(0, 2, s)).loss;
                    return bce_loss_and_grad(m.score_pair(0, 1, s), 1.0).first;
                };

                // analytic gradients
                MlpTape tape_pos, tape_neg;
                std::vector<double> input;
                MlpGradients grads(net);
                Matrix g_user(2, 4), g_item(3, 4);
                const auto e_u = factors.user_factors.row(0);
                const auto e_i = factors.item_factors.row(1);
                const auto e_j = factors.item_factors.row(2);

                build_input_into(modeling, e_u, e_i, input);
                const double s_pos = forward(net, input, tape_pos);
                if (use_bpr) {
                    build_input_into(modeling, e_u, e_j, input);
                    const double s_neg = forward(net, input, tape_neg);
                    const auto bg = bpr_loss_and_grads(s_pos, s_neg);
                    std::fill(grads.input.begin(), grads.input.end(), 0.0);
                    backward(net, tape_pos, bg.d_pos, grads);
                    backprop_to_embeddings(modeling, grads.input, e_u, e_i, g_user.row(0),
                                           g_item.row(1));
                    std::fill(grads.input.begin(), grads.input.end(), 0.0);
                    backward(net, tape_neg, bg.d_neg, grads);
                    backprop_to_embeddings(modeling, grads.input, e_u, e_j, g_user.row(0),
                                           g_item.row(2));
                } else {
                    const auto [loss, up] = bce_loss_and_grad(s_pos, 1.0);
                    (void)loss;
                    std::fill(grads.input.begin(), grads.input.end(), 0.0);
                    backward(net, tape_pos, up, grads);
                    backprop_to_embeddings(modeling, grads.input, e_u, e_i, g_user.row(0),
                                           g_item.row(1));
                }

                auto fd_check = [&](double analytic, double* slot, const std::string& what) {
                    const double saved = *slot;
                    *slot = saved + h;
                    const double hi = loss_of(factors, net);
                    *slot = saved - h;
                    const double lo = loss_of(factors, net);
                    *slot = saved;
                    const double fd = (hi - lo) / (2 * h);
                    ++checked;
                    if (!grad_close(analytic, fd, tol)) {
                        ++bad;
                        if (first_bad.empty())
                            first_bad = std::string(to_string(modeling)) + " " + arch.name() + " " +
                                        (use_bpr ? "bpr" : "bce") + " " + what + " analytic=" +
                                        fmt(analytic) + " fd=" + fmt(fd);
                    }
                };

                for (std::size_t l = 0; l < net.layers.size(); ++l) {
                    for (std::size_t k = 0; k < net.layers[l].weights.data.size(); ++k)
                        fd_check(grads.weights[l].data[k], &net.layers[l].weights.data[k],
                                 "w" + std::to_string(l) + "/" + std::to_string(k));
                    for (std::size_t k = 0; k < net.layers[l].bias.size(); ++k)
                        fd_check(grads.bias[l][k], &net.layers[l].bias[k],
                                 "b" + std::to_string(l) + "/" + std::to_string(k));
                }
                for (std::size_t k = 0; k < 4; ++k)
                    fd_check(g_user(0, k), &factors.user_factors.data[k], "e_u/" + std::to_string(k));
                for (std::size_t k = 0; k < 4; ++k)
                    fd_check(g_item(1, k), &factors.item_factors.data[4 + k],
                             "e_i/" + std::to_string(k));
                if (use_bpr)
                    for (std::size_t k = 0; k < 4; ++k)
                        fd_check(g_item(2, k), &factors.item_factors.data[8 + k],
                                 "e_j/" + std::to_string(k));
            }
        }
    }
    std::ostringstream d;
    d << checked << " partials across 13 architectures x 2 modelings x 2 losses, " << bad
      << " beyond tolerance" << (first_bad.empty() ? "" : " (first: " + first_bad + ")");
    return {bad == 0, d.str()};
}

// --- criterion 7: metric oracles ------------------------------------------------

struct MetricOracle {
    const InteractionDataset& ds;
    const Matrix& scores;

    bool train_pos(int u, int i) const { return ds.user_has_positive(u, i); }
    bool test_pos(int u, int i) const {
        for (std::size_t idx = 0; idx < ds.interactions.size(); ++idx) {
            const auto& it = ds.interactions[idx];
            if (it.user == u && it.item == i && it.label > 0 && ds.split[idx] == SplitPart::Test)
                return true;
        }
        return false;
    }
    int rank_of(int u, int t) const {
        const double st = scores(static_cast<std::size_t>(u), static_cast<std::size_t>(t));
        int ahead = 0;
        for (int c = 0; c < ds.maps.n; ++c) {
            if (c == t || train_pos(u, c)) continue;
            const double sc = scores(static_cast<std::size_t>(u), static_cast<std::size_t>(c));
            if (sc > st || (sc == st && c < t)) ++ahead;
        }
        return ahead + 1;
    }
    EvalReport all() const {
        double srr = 0, sap = 0, sauc = 0;
        int n = 0, nauc = 0;
        for (int u = 0; u < ds.maps.m; ++u) {
            int total_rel = 0;
            for (int t = 0; t < ds.maps.n; ++t)
                if (!train_pos(u, t) && test_pos(u, t)) ++total_rel;
            if (total_rel == 0) continue;
            ++n;

            int best = INT32_MAX;
            std::vector<int> rel_ranks;
            for (int t = 0; t < ds.maps.n; ++t) {
                if (train_pos(u, t) || !test_pos(u, t)) continue;
                const int r = rank_of(u, t);
                best = std::min(best, r);
                if (r <= 10) rel_ranks.push_back(r);
            }
            std::sort(rel_ranks.begin(), rel_ranks.end());
            double ap = 0;  // precision terms in rank order, matching the sum order under test
            for (std::size_t k = 0; k < rel_ranks.size(); ++k)
                ap += static_cast<double>(k + 1) / rel_ranks[k];
            srr += 1.0 / best;
            sap += ap / std::min(total_rel, 10);

            double wins = 0;
            int pairs = 0;
            for (int t = 0; t < ds.maps.n; ++t) {
                if (train_pos(u, t) || !test_pos(u, t)) continue;
                for (int c = 0; c < ds.maps.n; ++c) {
                    if (c == t || train_pos(u, c) || test_pos(u, c)) continue;
                    const double st = scores(static_cast<std::size_t>(u), static_cast<std::size_t>(t));
                    const double sc = scores(static_cast<std::size_t>(u), static_cast<std::size_t>(c));
                    wins += st > sc ? 1.0 : (st == sc ? 0.5 : 0.0);
                    ++pairs;
                }
            }
            if (pairs) {
                sauc += wins / pairs;
                ++nauc;
            }
        }
        EvalReport rep;
        rep.users_evaluated = n;
        rep.mrr = srr / n;
        rep.map_at_10 = sap / n;
        rep.auc = nauc ? sauc / nauc : 0.0;
        return rep;
    }
};

Outcome criterion_metric_oracles(Context&) {
    Rng rng(8080);
    int instances = 0;
    std::string fail;
    while (instances < 50) {
        const int m = 2 + static_cast<int>(rng.below(10));
        const int n = 4 + static_cast<int>(rng.below(17));
        std::vector<testsupport::Row> rows;
        for (int u = 0; u < m; ++u)
            for (int i = 0; i < n; ++i)
                if (rng.uniform() < 0.3 && static_cast<int>(rows.size()) < m * n - 2)
                    rows.push_back({u, i, 1.0,
                                    rng.uniform() < 0.5 ? SplitPart::Train : SplitPart::Test});
        bool any_test = false;
        for (const auto& r : rows) any_test |= r.part == SplitPart::Test;
        if (rows.empty() || !any_test) continue;
        auto ds = testsupport::make_dataset(m, n, Scenario::Implicit, rows);

        Matrix scores(static_cast<std::size_t>(m), static_cast<std::size_t>(n));
        for (auto& s : scores.data) {
            s = rng.normal();
            if (rng.uniform() < 0.3) s = std::round(s * 2.0) / 2.0;
        }

        const MetricOracle oracle{ds, scores};
        const auto expected = oracle.all();
        if (expected.users_evaluated == 0) continue;
        ++instances;

        auto scorer = [&scores](std::int32_t u) {
            std::vector<double> out(scores.cols);
            for (std::size_t i = 0; i < scores.cols; ++i)
                out[i] = scores(static_cast<std::size_t>(u), i);
            return out;
        };
        const auto got = evaluate(scorer, ds);
        if (got.mrr != expected.mrr || got.map_at_10 != expected.map_at_10 ||
            std::abs(got.auc - expected.auc) > 1e-12 ||
            got.users_evaluated != expected.users_evaluated) {
            fail = "instance " + std::to_string(instances) + ": got mrr=" + fmt(got.mrr) +
                   " map=" + fmt(got.map_at_10) + " auc=" + fmt(got.auc) + ", oracle mrr=" +
                   fmt(expected.mrr) + " map=" + fmt(expected.map_at_10) + " auc=" +
                   fmt(expected.auc);
            break;
        }
    }
    return {fail.empty(), fail.empty() ? "50 random instances match the brute-force oracles" : fail};
}

// --- criterion 8: the optimizer -----------------------------------------------

Outcome criterion_adam(Context&) {
    std::vector<double> params{1.0};
    AdamState st(1, 0.003);
    double ref = 1.0, m = 0.0, v = 0.0;
    double worst = 0.0;
    for (int t = 1; t <= 10; ++t) {
        adam_step(params, std::vector<double>{2.0 * params[0]}, st);
        const double g = 2.0 * ref;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        ref -= 0.003 * (m / (1.0 - std::pow(0.9, t))) /
               (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
        worst = std::max(worst, std::abs(params[0] - ref));
    }
    std::ostringstream d;
    d << "10 steps on a scalar quadratic, max deviation " << fmt(worst);
    return {worst <= 1e-12, d.str()};
}

// --- criterion 9: determinism through the CLI -----------------------------------

int run_command(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

Outcome criterion_determinism(Context& ctx) {
    const fs::path root = fs::path(ctx.opt.out) / "determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string bin = CFLAB_BIN_PATH;
    const std::string log = " >> " + (root / "log.txt").string() + " 2>&1";

    const auto ratings = testsupport::synth_ratings(14, 18, 9, 33);
    testsupport::write_ratings_csv((root / "ratings.csv").string(), ratings);

    auto same = [](const fs::path& a, const fs::path& b) {
        return testsupport::slurp(a.string()) == testsupport::slurp(b.string()) &&
               !testsupport::slurp(a.string()).empty();
    };

    // prepare twice
    for (const char* tag : {"p1", "p2"})
        if (run_command(bin + " prepare --ratings " + (root / "ratings.csv").string() +
                        " --scenario implicit --split 0.8 --seed 7 --out " +
                        (root / tag).string() + log) != 0)
            return {false, "prepare failed; see determinism/log.txt"};
    if (!same(root / "p1/dataset_implicit.json", root / "p2/dataset_implicit.json"))
        return {false, "prepare outputs differ between identical runs"};

    // train twice
    const std::string dataset = (root / "p1/dataset_implicit.json").string();
    for (const char* tag : {"t1", "t2"})
        if (run_command(bin + " train --dataset " + dataset +
                        " --model lra --epochs 3 --p 4 --seed 11 --out " + (root / tag).string() +
                        log) != 0)
            return {false, "train failed; see determinism/log.txt"};
    for (const char* name : {"model.cfmodel", "trace.csv", "report.json"})
        if (!same(root / "t1" / name, root / "t2" / name))
            return {false, std::string("train output ") + name + " differs between identical runs"};

    // grid twice (fresh output directories, parallel workers)
    {
        std::ofstream cfg(root / "grid.json");
        cfg << R"({"lra_search":{"p_values":[4],"learning_rates":[0.01],"seeds":[7],"epochs":2},)"
            << R"("ncfn_grid":{"modelings":["hadamard"],"embedding_modes":["learned","pretrained"],)"
            << R"("hidden_layers":[0,1],"activations":["relu"],"learning_rates":[0.01],)"
            << R"("seeds":[3],"epochs":2,"p":4},"jobs":2})";
    }
    for (const char* tag : {"g1", "g2"})
        if (run_command(bin + " grid --dataset " + dataset + " --config " +
                        (root / "grid.json").string() + " --out " + (root / tag).string() + log) != 0)
            return {false, "grid failed; see determinism/log.txt"};
    for (const char* name : {"results.csv", "table2.csv", "figure3.csv", "mf_best.cfmodel"})
        if (!same(root / "g1" / name, root / "g2" / name))
            return {false, std::string("grid output ") + name + " differs between identical runs"};

    return {true, "prepare, train and grid reruns are byte-identical (checkpoints, traces, results)"};
}

// --- criterion 10: the reproduction caveat ---------------------------------------

Outcome criterion_caveat(Context&) {
    return {true,
            "cell-exact reproduction of the reference tables is not claimed: the original "
            "experiments leave the LRA search grid, MLP hidden widths, parameter initialization "
            "and ranking-evaluation protocol unspecified, so acceptance checks metric levels and "
            "orderings (criteria 4-5) instead of exact cells, per the recorded design decisions"};
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    for (int a = 1; a < argc; ++a) {
        const std::string arg = argv[a];
        auto next = [&]() -> std::string {
            if (a + 1 >= argc) {
                std::cerr << "missing value for " << arg << "\n";
                std::exit(2);
            }
            return argv[++a];
        };
        if (arg == "--ratings") {
            opt.ratings = next();
        } else if (arg == "--out") {
            opt.out = next();
        } else if (arg == "--jobs") {
            opt.jobs = std::stoi(next());
        } else if (arg == "--criteria") {
            opt.criteria.clear();
            std::stringstream ss(next());
            std::string tok;
            while (std::getline(ss, tok, ',')) opt.criteria.push_back(std::stoi(tok));
        } else {
            std::cerr << "unknown argument: " << arg << "\n";
            return 2;
        }
    }
    if (opt.jobs <= 0) opt.jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (opt.jobs <= 0) opt.jobs = 1;
    fs::create_directories(opt.out);

    Context ctx;
    ctx.opt = opt;
    ctx.ratings_path = locate_ratings(opt.ratings);
    ctx.dataset_available = fs::exists(ctx.ratings_path);

    struct Entry {
        int number;
        const char* title;
        bool needs_dataset;
        Outcome (*fn)(Context&);
    };
    const Entry entries[] = {
        {1, "dataset fidelity", true, criterion_dataset_fidelity},
        {2, "covariance diagnostic means and counts", true, criterion_covariance_means},
        {3, "covariance diagnostic medians", true, criterion_medians},
        {4, "LRA baseline level", true, criterion_lra_level},
        {5, "setting-table orderings", true, criterion_orderings},
        {6, "gradient correctness", false, criterion_gradients},
        {7, "metric oracles", false, criterion_metric_oracles},
        {8, "optimizer oracle", false, criterion_adam},
        {9, "command determinism", false, criterion_determinism},
        {10, "exact-reproduction caveat", false, criterion_caveat},
    };

    int failures = 0;
    std::vector<int> failed_ids;
    for (const auto& entry : entries) {
        if (std::find(opt.criteria.begin(), opt.criteria.end(), entry.number) ==
            opt.criteria.end())
            continue;

        Outcome outcome;
        const auto t0 = Clock::now();
        if (entry.needs_dataset && !ctx.dataset_available) {
            outcome = {false, ctx.missing_message()};
        } else {
            try {
                outcome = entry.fn(ctx);
            } catch (const std::exception& e) {
                outcome = {false, std::string("exception: ") + e.what()};
            }
        }
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        std::cout << "criterion " << entry.number << " " << (outcome.pass ? "PASS" : "FAIL") << " ["
                  << entry.title << "] " << outcome.detail << " (" << fmt(secs) << "s)"
                  << std::endl;
        if (!outcome.pass) {
            ++failures;
            failed_ids.push_back(entry.number);
        }
    }

    if (failures == 0) {
        std::cout << "acceptance: all selected criteria passed" << std::endl;
        return 0;
    }
    std::cout << "acceptance: " << failures << " criterion(s) failed:";
    for (int id : failed_ids) std::cout << " " << id;
    std::cout << std::endl;
    return 1;
}
