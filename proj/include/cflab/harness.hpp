#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cflab/core.hpp"
#include "cflab/dataset.hpp"
#include "cflab/model_io.hpp"
#include "cflab/reports.hpp"
#include "cflab/training.hpp"

namespace cflab {

// --- experiment specs ------------------------------------------------------

struct LraGrid {
    std::vector<std::int32_t> p_values{16, 32, 64};
    std::vector<double> learning_rates{0.001, 0.003, 0.01};
    std::vector<std::uint64_t> seeds{101, 211};
    std::int32_t epochs = 20;
    std::int32_t batch_size = 128;
    bool use_biases = true;
};

/// One cell of the neural grid: setting x architecture x lr x seed.
struct ExperimentSpec {
    InputModeling modeling = InputModeling::Concat;
    EmbeddingMode embedding_mode = EmbeddingMode::Learned;
    MlpArchitecture architecture;
    double learning_rate = 0.003;
    std::uint64_t seed = 101;
    std::int32_t epochs = 20;
    std::int32_t batch_size = 128;
    std::int32_t p = 32;
};

/// Deterministic identifier derived from every spec field.
inline std::string run_id(const ExperimentSpec& s) {
    std::string id = std::string(to_string(s.modeling)) + "-" + to_string(s.embedding_mode) + "-" +
                     s.architecture.name() + "-lr" + fmt_double(s.learning_rate) + "-seed" +
                     std::to_string(s.seed);
    if (s.epochs != 20) id += "-e" + std::to_string(s.epochs);
    if (s.batch_size != 128) id += "-b" + std::to_string(s.batch_size);
    if (s.p != 32) id += "-p" + std::to_string(s.p);
    return id;
}

struct NcfnGrid {
    std::vector<InputModeling> modelings{InputModeling::Concat, InputModeling::Hadamard};
    std::vector<EmbeddingMode> embedding_modes{EmbeddingMode::Learned,
                                               EmbeddingMode::PretrainedAdjustable,
                                               EmbeddingMode::PretrainedFixed};
    std::vector<MlpArchitecture> architectures = enumerate_architectures();
    std::vector<double> learning_rates{0.001, 0.003, 0.01};
    std::vector<std::uint64_t> seeds{101, 211, 307, 401, 503};
    std::int32_t epochs = 20;
    std::int32_t batch_size = 128;
    std::int32_t p = 32;
};

/// Exhaustive, duplicate-free enumeration; the default grid yields
/// 6 x 13 x 3 x 5 = 1170 specs.
inline std::vector<ExperimentSpec> enumerate_grid(const NcfnGrid& grid) {
    std::vector<ExperimentSpec> specs;
    for (auto modeling : grid.modelings)
        for (auto mode : grid.embedding_modes)
            for (const auto& arch : grid.architectures)
                for (double lr : grid.learning_rates)
                    for (auto seed : grid.seeds)
                        specs.push_back({modeling, mode, arch, lr, seed, grid.epochs,
                                         grid.batch_size, grid.p});
    return specs;
}

// --- run records -------------------------------------------------------------

/// FNV-1a over the factor tensors; lets pretrained runs prove which
/// factors they started from.
inline std::uint64_t factor_fingerprint(const LatentFactors& f) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    mix(static_cast<std::uint64_t>(f.p));
    for (const auto* vec : {&f.user_factors.data, &f.item_factors.data, &f.user_bias, &f.item_bias})
        for (double x : *vec) mix(std::bit_cast<std::uint64_t>(x));
    return h;
}

struct RunResult {
    ExperimentSpec spec;
    std::string id;
    std::int32_t best_epoch = 0;
    EvalReport report;  // at the best epoch
    std::vector<EpochStats> trace;
    std::uint64_t pretrained_fingerprint = 0;  // 0 for learned embeddings
    double wall_seconds = 0.0;  // in-memory only; log lines, never artifacts
    bool failed = false;
    std::string error;
};

inline nlohmann::json to_json(const RunResult& r) {
    nlohmann::json spec;
    spec["modeling"] = to_string(r.spec.modeling);
    spec["embedding_mode"] = to_string(r.spec.embedding_mode);
    spec["hidden_layers"] = r.spec.architecture.hidden_count;
    if (r.spec.architecture.activation)
        spec["activation"] = to_string(*r.spec.architecture.activation);
    else
        spec["activation"] = nullptr;
    spec["learning_rate"] = r.spec.learning_rate;
    spec["seed"] = r.spec.seed;
    spec["epochs"] = r.spec.epochs;
    spec["batch_size"] = r.spec.batch_size;
    spec["p"] = r.spec.p;

    nlohmann::json j;
    j["format"] = "cflab.run.v1";
    j["id"] = r.id;
    j["spec"] = std::move(spec);
    j["failed"] = r.failed;
    j["error"] = r.error;
    j["best_epoch"] = r.best_epoch;
    j["pretrained_fingerprint"] = r.pretrained_fingerprint;
    j["report"] = {{"mrr", r.report.mrr},
                   {"map_at_10", r.report.map_at_10},
                   {"auc", r.report.auc},
                   {"users_evaluated", r.report.users_evaluated}};
    auto trace = nlohmann::json::array();
    for (const auto& row : r.trace)
        trace.push_back({row.epoch, row.train_loss, row.mrr, row.map_at_10, row.auc,
                         row.users_evaluated, row.evaluated});
    j["trace"] = std::move(trace);
    return j;
}

inline RunResult run_result_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "cflab.run.v1") throw Error("run record: unknown format tag");
    RunResult r;
    const auto& spec = j.at("spec");
    r.spec.modeling = modeling_from_string(spec.at("modeling").get<std::string>());
    r.spec.embedding_mode = embedding_mode_from_string(spec.at("embedding_mode").get<std::string>());
    r.spec.architecture.hidden_count = spec.at("hidden_layers").get<std::int32_t>();
    if (!spec.at("activation").is_null())
        r.spec.architecture.activation =
            activation_from_string(spec.at("activation").get<std::string>());
    r.spec.learning_rate = spec.at("learning_rate").get<double>();
    r.spec.seed = spec.at("seed").get<std::uint64_t>();
    r.spec.epochs = spec.at("epochs").get<std::int32_t>();
    r.spec.batch_size = spec.at("batch_size").get<std::int32_t>();
    r.spec.p = spec.at("p").get<std::int32_t>();
    r.id = j.at("id").get<std::string>();
    r.failed = j.at("failed").get<bool>();
    r.error = j.at("error").get<std::string>();
    r.best_epoch = j.at("best_epoch").get<std::int32_t>();
    r.pretrained_fingerprint = j.at("pretrained_fingerprint").get<std::uint64_t>();
    const auto& rep = j.at("report");
    r.report.mrr = rep.at("mrr").get<double>();
    r.report.map_at_10 = rep.at("map_at_10").get<double>();
    r.report.auc = rep.at("auc").get<double>();
    r.report.users_evaluated = rep.at("users_evaluated").get<std::int32_t>();
    for (const auto& row : j.at("trace")) {
        EpochStats e;
        e.epoch = row.at(0).get<std::int32_t>();
        e.train_loss = row.at(1).get<double>();
        e.mrr = row.at(2).is_null() ? std::numeric_limits<double>::quiet_NaN() : row.at(2).get<double>();
        e.map_at_10 = row.at(3).is_null() ? std::numeric_limits<double>::quiet_NaN() : row.at(3).get<double>();
        e.auc = row.at(4).is_null() ? std::numeric_limits<double>::quiet_NaN() : row.at(4).get<double>();
        e.users_evaluated = row.at(5).get<std::int32_t>();
        e.evaluated = row.at(6).get<bool>();
        r.trace.push_back(e);
    }
    return r;
}

// --- LRA hyperparameter search ----------------------------------------------

struct LraRunRecord {
    std::int32_t p = 0;
    double learning_rate = 0.0;
    std::uint64_t seed = 0;
    std::int32_t best_epoch = 0;
    EvalReport report;
    std::vector<EpochStats> trace;
    bool failed = false;
    std::string error;

    std::string id() const {
        return "lra-p" + std::to_string(p) + "-lr" + fmt_double(learning_rate) + "-seed" +
               std::to_string(seed);
    }
};

struct LraSearchOutcome {
    LatentFactors best_factors;
    LraRunRecord best;
    std::vector<LraRunRecord> all;
};

namespace detail {

inline EvalReport report_from_trace(const std::vector<EpochStats>& trace, std::int32_t best_epoch) {
    EvalReport rep;
    for (const auto& row : trace) {
        if (row.epoch == best_epoch && row.evaluated) {
            rep.mrr = row.mrr;
            rep.map_at_10 = row.map_at_10;
            rep.auc = row.auc;
            rep.users_evaluated = row.users_evaluated;
        }
    }
    return rep;
}

template <class Fn>
void parallel_for_slots(std::size_t count, int jobs, Fn&& fn) {
    if (jobs <= 1 || count < 2) {
        for (std::size_t k = 0; k < count; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= count) return;
            fn(k);
        }
    };
    const auto nt = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < nt; ++t) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
}

}  // namespace detail

/// Trains LRA+BPR across the grid, tracking the best-test-MRR snapshot of
/// each run, and returns the overall best-MRR model (selection is by MRR
/// alone; ties break toward the earlier grid cell).
inline LraSearchOutcome lra_search(const InteractionDataset& ds, const LraGrid& grid,
                                   int jobs = 1, int eval_threads = 1,
                                   std::ostream* log = nullptr) {
    if (ds.scenario != Scenario::Implicit || ds.split.empty())
        throw Error("lra_search: needs an implicit dataset with a train/test split");
    if (grid.p_values.empty() || grid.learning_rates.empty() || grid.seeds.empty())
        throw Error("lra_search: empty grid");
    for (auto p : grid.p_values)
        if (p >= std::min(ds.maps.m, ds.maps.n))
            throw Error("lra_search: p=" + std::to_string(p) + " must stay below min(m, n) = " +
                        std::to_string(std::min(ds.maps.m, ds.maps.n)));

    struct Cell {
        std::int32_t p;
        double lr;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (auto p : grid.p_values)
        for (double lr : grid.learning_rates)
            for (auto seed : grid.seeds) cells.push_back({p, lr, seed});

    std::vector<LraRunRecord> records(cells.size());
    std::vector<LatentFactors> models(cells.size());
    std::mutex log_mutex;

    detail::parallel_for_slots(cells.size(), jobs, [&](std::size_t k) {
        const auto& cell = cells[k];
        LraRunRecord rec;
        rec.p = cell.p;
        rec.learning_rate = cell.lr;
        rec.seed = cell.seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            TrainConfig cfg;
            cfg.loss = Loss::BPR;
            cfg.batch_size = grid.batch_size;
            cfg.epochs = grid.epochs;
            cfg.learning_rate = cell.lr;
            cfg.seed = cell.seed;
            cfg.p = cell.p;
            cfg.use_biases = grid.use_biases;
            cfg.eval_threads = eval_threads;
            auto init = init_factors(ds.maps.m, ds.maps.n, cell.p, cell.seed);
            auto out = train_model(std::move(init), ds, cfg);
            rec.best_epoch = out.best_epoch;
            rec.trace = std::move(out.trace);
            rec.report = detail::report_from_trace(rec.trace, rec.best_epoch);
            models[k] = std::move(out.model);
        } catch (const std::exception& e) {
            rec.failed = true;
            rec.error = e.what();
        }
        if (log) {
            const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
            std::lock_guard lock(log_mutex);
            *log << "[lra-search] " << rec.id() << (rec.failed ? " FAILED " + rec.error
                                                              : " mrr=" + fmt_double(rec.report.mrr))
                 << " (" << fmt_double(dt.count()) << "s)\n";
        }
        records[k] = std::move(rec);
    });

    std::size_t best = cells.size();
    for (std::size_t k = 0; k < records.size(); ++k) {
        if (records[k].failed) continue;
        if (best == cells.size() || records[k].report.mrr > records[best].report.mrr) best = k;
    }
    if (best == cells.size()) throw Error("lra_search: every run failed");

    return {std::move(models[best]), records[best], std::move(records)};
}

// --- the NCFN grid -----------------------------------------------------------

/// Executes one spec. Failures land in the record rather than propagating.
inline RunResult execute_spec(const InteractionDataset& ds, const ExperimentSpec& spec,
                              const LatentFactors* mf_best, int eval_threads = 1) {
    RunResult rec;
    rec.spec = spec;
    rec.id = run_id(spec);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (spec.p >= std::min(ds.maps.m, ds.maps.n))
            throw Error("p=" + std::to_string(spec.p) + " must stay below min(m, n) = " +
                        std::to_string(std::min(ds.maps.m, ds.maps.n)));
        NcfnModel model;
        if (spec.embedding_mode == EmbeddingMode::Learned) {
            model.factors = init_factors(ds.maps.m, ds.maps.n, spec.p, spec.seed);
        } else {
            if (!mf_best) throw Error("pretrained setting without pretrained factors");
            if (mf_best->p != spec.p)
                throw Error("pretrained factors have p=" + std::to_string(mf_best->p) +
                            ", spec wants p=" + std::to_string(spec.p));
            model.factors = *mf_best;
            rec.pretrained_fingerprint = factor_fingerprint(*mf_best);
        }
        model.net = build_network(spec.modeling, spec.p, spec.architecture, spec.seed);

        TrainConfig cfg;
        cfg.loss = Loss::BPR;
        cfg.batch_size = spec.batch_size;
        cfg.epochs = spec.epochs;
        cfg.learning_rate = spec.learning_rate;
        cfg.seed = spec.seed;
        cfg.embedding_mode = spec.embedding_mode;
        cfg.p = spec.p;
        cfg.eval_threads = eval_threads;

        auto out = train_model(std::move(model), ds, cfg);
        rec.best_epoch = out.best_epoch;
        rec.trace = std::move(out.trace);
        rec.report = detail::report_from_trace(rec.trace, rec.best_epoch);
    } catch (const std::exception& e) {
        rec.failed = true;
        rec.error = e.what();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

/// Runs every spec, streaming one JSON record per run into
/// `out_dir`/runs/. With `resume`, completed run ids are loaded instead of
/// re-executed, which together with per-run determinism makes interrupted
/// grids recoverable.
inline std::vector<RunResult> run_grid(const InteractionDataset& ds,
                                       const LatentFactors* mf_best,
                                       const std::vector<ExperimentSpec>& specs,
                                       const std::string& out_dir, bool resume, int jobs = 1,
                                       int eval_threads = 1, std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    const fs::path runs_dir = fs::path(out_dir) / "runs";
    fs::create_directories(runs_dir);

    std::vector<RunResult> results(specs.size());
    std::mutex log_mutex;
    std::atomic<std::size_t> done{0};

    detail::parallel_for_slots(specs.size(), jobs, [&](std::size_t k) {
        const auto& spec = specs[k];
        const std::string id = run_id(spec);
        const fs::path record_path = runs_dir / (id + ".json");

        bool loaded = false;
        if (resume && fs::exists(record_path)) {
            try {
                std::ifstream in(record_path);
                nlohmann::json j;
                in >> j;
                results[k] = run_result_from_json(j);
                loaded = true;
            } catch (const std::exception&) {
                loaded = false;  // unreadable record: recompute
            }
        }
        if (!loaded) {
            results[k] = execute_spec(ds, spec, mf_best, eval_threads);
            try {
                const fs::path tmp = runs_dir / (id + ".json.tmp");
                {
                    auto out = open_out(tmp.string());
                    out << to_json(results[k]).dump(2) << '\n';
                }
                fs::rename(tmp, record_path);
            } catch (const std::exception& e) {
                results[k].failed = true;
                results[k].error = std::string("record write failed: ") + e.what();
            }
        }
        const std::size_t finished = done.fetch_add(1) + 1;
        if (log) {
            std::lock_guard lock(log_mutex);
            *log << "[grid " << finished << "/" << specs.size() << "] " << id
                 << (loaded ? " (resumed)" : "")
                 << (results[k].failed ? " FAILED " + results[k].error
                                       : " mrr=" + fmt_double(results[k].report.mrr) + " auc=" +
                                             fmt_double(results[k].report.auc))
                 << (loaded ? "" : " (" + fmt_double(results[k].wall_seconds) + "s)") << "\n";
        }
    });
    return results;
}

// --- aggregation -------------------------------------------------------------

struct SettingRow {
    InputModeling modeling = InputModeling::Concat;
    EmbeddingMode embedding_mode = EmbeddingMode::Learned;
    bool missing = true;
    std::string best_run_id;
    EvalReport report;
    double mrr_gain_vs_baseline = 0.0;  // relative
};

struct SettingTable {
    std::vector<SettingRow> rows;  // the 6 settings, concat first
    EvalReport baseline;           // MF_best
};

/// Best run per (input modeling, embedding mode) by MRR; ties break on the
/// run id so the table is independent of result ordering.
inline SettingTable best_per_setting(const std::vector<RunResult>& results,
                                     const EvalReport& mf_best) {
    if (results.empty()) throw Error("best_per_setting: no results");
    SettingTable table;
    table.baseline = mf_best;
    for (auto modeling : {InputModeling::Concat, InputModeling::Hadamard}) {
        for (auto mode : {EmbeddingMode::Learned, EmbeddingMode::PretrainedAdjustable,
                          EmbeddingMode::PretrainedFixed}) {
            SettingRow row;
            row.modeling = modeling;
            row.embedding_mode = mode;
            for (const auto& r : results) {
                if (r.failed || r.spec.modeling != modeling || r.spec.embedding_mode != mode)
                    continue;
                const bool better =
                    row.missing || r.report.mrr > row.report.mrr ||
                    (r.report.mrr == row.report.mrr && r.id < row.best_run_id);
                if (better) {
                    row.missing = false;
                    row.best_run_id = r.id;
                    row.report = r.report;
                }
            }
            if (!row.missing && mf_best.mrr > 0.0)
                row.mrr_gain_vs_baseline = (row.report.mrr - mf_best.mrr) / mf_best.mrr;
            table.rows.push_back(row);
        }
    }
    return table;
}

inline std::string setting_label(InputModeling modeling, EmbeddingMode mode) {
    return std::string(to_string(modeling)) + "/" + to_string(mode);
}

// --- artifact writers ----------------------------------------------------------

inline void write_trace_csv(const std::string& path, const std::string& run_id,
                            const std::vector<EpochStats>& trace) {
    auto out = open_out(path);
    out << "run_id,epoch,train_loss,mrr,map_at_10,auc\n";
    for (const auto& row : trace) {
        out << run_id << ',' << row.epoch << ',' << fmt_double(row.train_loss) << ',';
        if (row.evaluated)
            out << fmt_double(row.mrr) << ',' << fmt_double(row.map_at_10) << ','
                << fmt_double(row.auc);
        else
            out << ",,";
        out << '\n';
    }
}

inline void write_results_csv(const std::string& path, const std::vector<RunResult>& results) {
    auto out = open_out(path);
    out << "run_id,modeling,embedding_mode,hidden_layers,activation,learning_rate,seed,"
           "failed,best_epoch,mrr,map_at_10,auc\n";
    for (const auto& r : results) {
        out << r.id << ',' << to_string(r.spec.modeling) << ',' << to_string(r.spec.embedding_mode)
            << ',' << r.spec.architecture.hidden_count << ','
            << (r.spec.architecture.activation ? to_string(*r.spec.architecture.activation) : "")
            << ',' << fmt_double(r.spec.learning_rate) << ',' << r.spec.seed << ','
            << (r.failed ? 1 : 0) << ',' << r.best_epoch << ',' << fmt_double(r.report.mrr) << ','
            << fmt_double(r.report.map_at_10) << ',' << fmt_double(r.report.auc) << '\n';
    }
}

inline void write_table2_csv(const std::string& path, const SettingTable& table) {
    auto out = open_out(path);
    out << "setting,best_run_id,mrr,map_at_10,auc,mrr_gain_vs_baseline\n";
    out << "mf_best,," << fmt_double(table.baseline.mrr) << ','
        << fmt_double(table.baseline.map_at_10) << ',' << fmt_double(table.baseline.auc) << ",0\n";
    for (const auto& row : table.rows) {
        out << setting_label(row.modeling, row.embedding_mode) << ',';
        if (row.missing) {
            out << ",,,,missing\n";
            continue;
        }
        out << row.best_run_id << ',' << fmt_double(row.report.mrr) << ','
            << fmt_double(row.report.map_at_10) << ',' << fmt_double(row.report.auc) << ','
            << fmt_double(row.mrr_gain_vs_baseline) << '\n';
    }
}

inline void write_figure3_csv(const std::string& path, const SettingTable& table) {
    auto out = open_out(path);
    out << "label,mrr\n";
    out << "mf_best," << fmt_double(table.baseline.mrr) << '\n';
    for (const auto& row : table.rows)
        out << setting_label(row.modeling, row.embedding_mode) << ','
            << (row.missing ? std::string() : fmt_double(row.report.mrr)) << '\n';
}

inline void write_figure3_svg(const std::string& path, const SettingTable& table) {
    std::vector<std::string> labels{"mf_best"};
    std::vector<double> values{table.baseline.mrr};
    for (const auto& row : table.rows) {
        labels.push_back(setting_label(row.modeling, row.embedding_mode));
        values.push_back(row.missing ? 0.0 : row.report.mrr);
    }
    write_bar_chart_svg(path, "Best test MRR by setting", labels, values);
}

}  // namespace cflab
