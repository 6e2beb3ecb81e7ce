// cflab command line: dataset preparation, single training runs, latent
// diagnostics, grid execution and report generation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cflab/dataset.hpp"
#include "cflab/diagnostics.hpp"
#include "cflab/harness.hpp"
#include "cflab/model_io.hpp"
#include "cflab/reports.hpp"
#include "cflab/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

[[noreturn]] void usage_error(const std::string& msg) {
    std::cerr << "usage error: " << msg << "\n";
    std::exit(kExitUsage);
}

std::string resolve_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("CFLAB_OUT"); env && *env) return env;
    usage_error("--out DIR is required (or set CFLAB_OUT)");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw cflab::Error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw cflab::Error(path + ": invalid JSON: " + e.what());
    }
    return j;
}

// --- prepare -----------------------------------------------------------------

struct PrepareArgs {
    std::string ratings;
    std::string scenario = "implicit";
    double split = -1.0;  // <0: no split
    std::uint64_t seed = 42;
    std::string out;
};

int cmd_prepare(const PrepareArgs& args) {
    if (args.split >= 0.0 && !(args.split > 0.0 && args.split < 1.0))
        usage_error("--split must lie strictly between 0 and 1");

    const auto ratings = cflab::load_ratings(args.ratings);
    const auto maps = cflab::build_index_maps(ratings);
    const auto scenario = cflab::scenario_from_string(args.scenario);
    auto ds = scenario == cflab::Scenario::Implicit ? cflab::binarize_implicit(ratings, maps)
                                                    : cflab::binarize_explicit(ratings, maps);
    if (args.split > 0.0) cflab::split_train_test(ds, args.split, args.seed);

    const std::string out_dir = resolve_out_dir(args.out);
    fs::create_directories(out_dir);
    const std::string out_path =
        (fs::path(out_dir) / ("dataset_" + args.scenario + ".json")).string();
    cflab::save_dataset(ds, out_path);

    std::cout << "ratings: " << ratings.size() << "\n"
              << "users: " << maps.m << "\n"
              << "items: " << maps.n << "\n"
              << "interactions: " << ds.interactions.size() << "\n"
              << "positives: " << ds.positive_count() << "\n";
    if (!ds.split.empty())
        std::cout << "train: " << ds.train_count() << "\n"
                  << "test: " << ds.interactions.size() - ds.train_count() << "\n";
    std::cout << "dataset: " << out_path << "\n";
    return kExitOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    std::string dataset;
    std::string model = "lra";
    std::string config;
    std::string out;
    std::string pretrained;
    bool fixed = false;
    // overrides; negative/empty means "not given"
    int epochs = -1;
    double lr = -1.0;
    std::int64_t seed = -1;
    int p = -1;
    int batch = -1;
    std::string loss;
    std::string modeling;
    int layers = -1;
    std::string activation;
    int eval_threads = 1;
};

struct TrainSetup {
    cflab::TrainConfig cfg;
    cflab::InputModeling modeling = cflab::InputModeling::Hadamard;
    cflab::MlpArchitecture arch;
};

TrainSetup parse_train_setup(const TrainArgs& args, bool is_dnn) {
    TrainSetup s;
    s.cfg.epochs = is_dnn ? 20 : 15;
    s.cfg.seed = 42;
    if (!args.config.empty()) {
        const json j = read_json_file(args.config);
        if (j.contains("loss")) s.cfg.loss = cflab::loss_from_string(j["loss"].get<std::string>());
        s.cfg.batch_size = j.value("batch_size", s.cfg.batch_size);
        s.cfg.epochs = j.value("epochs", s.cfg.epochs);
        s.cfg.learning_rate = j.value("learning_rate", s.cfg.learning_rate);
        s.cfg.seed = j.value("seed", s.cfg.seed);
        s.cfg.p = j.value("p", s.cfg.p);
        s.cfg.use_biases = j.value("use_biases", s.cfg.use_biases);
        s.cfg.eval_each_epoch = j.value("eval_each_epoch", s.cfg.eval_each_epoch);
        if (j.contains("embedding_mode"))
            s.cfg.embedding_mode =
                cflab::embedding_mode_from_string(j["embedding_mode"].get<std::string>());
        if (j.contains("input_modeling"))
            s.modeling = cflab::modeling_from_string(j["input_modeling"].get<std::string>());
        if (j.contains("hidden_layers")) s.arch.hidden_count = j["hidden_layers"].get<int>();
        if (j.contains("activation") && !j["activation"].is_null())
            s.arch.activation = cflab::activation_from_string(j["activation"].get<std::string>());
    }
    if (!args.loss.empty()) s.cfg.loss = cflab::loss_from_string(args.loss);
    if (args.epochs > 0) s.cfg.epochs = args.epochs;
    if (args.lr > 0) s.cfg.learning_rate = args.lr;
    if (args.seed >= 0) s.cfg.seed = static_cast<std::uint64_t>(args.seed);
    if (args.p > 0) s.cfg.p = args.p;
    if (args.batch > 0) s.cfg.batch_size = args.batch;
    if (!args.modeling.empty()) s.modeling = cflab::modeling_from_string(args.modeling);
    if (args.layers >= 0) s.arch.hidden_count = args.layers;
    if (!args.activation.empty())
        s.arch.activation = cflab::activation_from_string(args.activation);
    if (args.fixed) s.cfg.embedding_mode = cflab::EmbeddingMode::PretrainedFixed;
    else if (!args.pretrained.empty() && s.cfg.embedding_mode == cflab::EmbeddingMode::Learned)
        s.cfg.embedding_mode = cflab::EmbeddingMode::PretrainedAdjustable;
    s.cfg.eval_threads = args.eval_threads;
    if (s.arch.hidden_count == 0) s.arch.activation.reset();
    return s;
}

void write_report_json(const std::string& path, const std::string& model_kind,
                       const std::string& id, std::int32_t best_epoch,
                       const std::vector<cflab::EpochStats>& trace) {
    json j;
    j["format"] = "cflab.report.v1";
    j["model"] = model_kind;
    j["run_id"] = id;
    j["best_epoch"] = best_epoch;
    const cflab::EpochStats* best = nullptr;
    for (const auto& row : trace)
        if (row.epoch == best_epoch) best = &row;
    j["final_train_loss"] = trace.empty() ? 0.0 : trace.back().train_loss;
    if (best && best->evaluated) {
        j["evaluated"] = true;
        j["mrr"] = best->mrr;
        j["map_at_10"] = best->map_at_10;
        j["auc"] = best->auc;
        j["users_evaluated"] = best->users_evaluated;
    } else {
        j["evaluated"] = false;
    }
    auto out = cflab::open_out(path);
    out << j.dump(2) << '\n';
}

int cmd_train(const TrainArgs& args) {
    const bool is_dnn = args.model == "dnn";
    if (!is_dnn && args.model != "lra") usage_error("--model must be lra or dnn");

    TrainSetup s = parse_train_setup(args, is_dnn);
    const bool wants_pretrained = s.cfg.embedding_mode != cflab::EmbeddingMode::Learned;
    if (wants_pretrained && args.pretrained.empty())
        usage_error("pretrained embedding modes need --pretrained FACTORS_FILE");
    if (wants_pretrained && !is_dnn)
        usage_error("--pretrained applies to --model dnn only");

    const auto ds = cflab::load_dataset(args.dataset);
    if (s.cfg.p >= std::min(ds.maps.m, ds.maps.n))
        throw cflab::Error("p=" + std::to_string(s.cfg.p) + " must stay below min(m, n) = " +
                           std::to_string(std::min(ds.maps.m, ds.maps.n)));
    const std::string out_dir = resolve_out_dir(args.out);
    fs::create_directories(out_dir);

    std::string id;
    std::int32_t best_epoch = 0;
    std::vector<cflab::EpochStats> trace;

    if (is_dnn) {
        cflab::NcfnModel model;
        if (wants_pretrained) {
            model.factors = cflab::load_factors(args.pretrained);
            if (model.factors.p != s.cfg.p && args.p <= 0) s.cfg.p = model.factors.p;
            if (model.factors.p != s.cfg.p)
                throw cflab::Error("pretrained factors have p=" + std::to_string(model.factors.p) +
                                   " but config wants p=" + std::to_string(s.cfg.p));
        } else {
            model.factors = cflab::init_factors(ds.maps.m, ds.maps.n, s.cfg.p, s.cfg.seed);
        }
        model.net = cflab::build_network(s.modeling, s.cfg.p, s.arch, s.cfg.seed);
        cflab::ExperimentSpec spec{s.modeling, s.cfg.embedding_mode, s.arch, s.cfg.learning_rate,
                                   s.cfg.seed, s.cfg.epochs, s.cfg.batch_size, s.cfg.p};
        id = cflab::run_id(spec);
        auto out = cflab::train_model(std::move(model), ds, s.cfg);
        best_epoch = out.best_epoch;
        trace = std::move(out.trace);
        cflab::save_model(out.model, (fs::path(out_dir) / "model.cfmodel").string());
    } else {
        auto init = cflab::init_factors(ds.maps.m, ds.maps.n, s.cfg.p, s.cfg.seed);
        id = "lra-p" + std::to_string(s.cfg.p) + "-lr" + cflab::fmt_double(s.cfg.learning_rate) +
             "-seed" + std::to_string(s.cfg.seed);
        auto out = cflab::train_model(std::move(init), ds, s.cfg);
        best_epoch = out.best_epoch;
        trace = std::move(out.trace);
        cflab::save_model(out.model, (fs::path(out_dir) / "model.cfmodel").string());
    }

    cflab::write_trace_csv((fs::path(out_dir) / "trace.csv").string(), id, trace);
    write_report_json((fs::path(out_dir) / "report.json").string(), args.model, id, best_epoch,
                      trace);

    std::cout << "run: " << id << "\n";
    if (!trace.empty()) {
        const auto& last = trace.back();
        std::cout << "final_train_loss: " << cflab::fmt_double(last.train_loss) << "\n";
        for (const auto& row : trace) {
            if (row.epoch == best_epoch && row.evaluated)
                std::cout << "best_epoch: " << best_epoch << "\n"
                          << "mrr: " << cflab::fmt_double(row.mrr) << "\n"
                          << "map_at_10: " << cflab::fmt_double(row.map_at_10) << "\n"
                          << "auc: " << cflab::fmt_double(row.auc) << "\n";
        }
    }
    std::cout << "checkpoint: " << (fs::path(out_dir) / "model.cfmodel").string() << "\n";
    return kExitOk;
}

// --- diagnose ------------------------------------------------------------------

struct DiagnoseArgs {
    std::string dataset;
    std::string factors;
    double alpha = 0.05;
    std::string out;
    int bins = 40;
};

void write_correlations_csv(const std::string& path, const char* view, const char* scenario,
                            const std::vector<cflab::EntityCorrelation>& correlations,
                            const std::vector<std::int64_t>& external_ids) {
    auto out = cflab::open_out(path);
    out << "view,scenario,entity_id,rho,p_value,retained\n";
    for (const auto& c : correlations) {
        out << view << ',' << scenario << ','
            << external_ids[static_cast<std::size_t>(c.entity)] << ',';
        if (c.defined)
            out << cflab::fmt_double(c.rho) << ',' << cflab::fmt_double(c.p_value);
        else
            out << ',';
        out << ',' << (c.retained ? 1 : 0) << '\n';
    }
}

void append_stats_row(std::ostream& out, const char* view, const char* scenario,
                      const cflab::CorrelationStats& s) {
    out << view << ',' << scenario << ',' << s.n;
    if (s.empty) {
        out << ",,,,,,,\n";
        return;
    }
    out << ',' << cflab::fmt_double(s.mean) << ',' << cflab::fmt_double(s.sigma) << ','
        << cflab::fmt_double(s.min) << ',' << cflab::fmt_double(s.q25) << ','
        << cflab::fmt_double(s.median) << ',' << cflab::fmt_double(s.q75) << ','
        << cflab::fmt_double(s.max) << '\n';
}

void write_histogram_csv(const std::string& path, const cflab::Histogram& h) {
    auto out = cflab::open_out(path);
    out << "bin_lo,bin_hi,count\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b)
        out << cflab::fmt_double(h.edges[b]) << ',' << cflab::fmt_double(h.edges[b + 1]) << ','
            << h.counts[b] << '\n';
}

int cmd_diagnose(const DiagnoseArgs& args) {
    if (!(args.alpha >= 0.0 && args.alpha <= 1.0))
        usage_error("--alpha must lie in [0, 1]");
    const auto ds = cflab::load_dataset(args.dataset);
    const auto factors = cflab::load_factors(args.factors);
    if (factors.m() != ds.maps.m || factors.n() != ds.maps.n)
        throw cflab::Error("factors and dataset disagree on m or n");

    const std::string out_dir = resolve_out_dir(args.out);
    fs::create_directories(out_dir);
    const char* scenario = cflab::to_string(ds.scenario);

    const auto sweep = cflab::correlation_sweep(factors, ds, args.alpha);
    const auto user_stats = cflab::summarize(sweep.users);
    const auto item_stats = cflab::summarize(sweep.items);

    write_correlations_csv((fs::path(out_dir) / "correlations_user.csv").string(), "user",
                           scenario, sweep.users, ds.maps.user_ids);
    write_correlations_csv((fs::path(out_dir) / "correlations_item.csv").string(), "item",
                           scenario, sweep.items, ds.maps.item_ids);

    {
        auto out = cflab::open_out((fs::path(out_dir) / "stats.csv").string());
        out << "view,scenario,n,mean,sigma,min,q25,median,q75,max\n";
        append_stats_row(out, "user", scenario, user_stats);
        append_stats_row(out, "item", scenario, item_stats);
    }

    const auto user_hist =
        cflab::histogram(cflab::retained_rhos(sweep.users), -1.0, 1.0, static_cast<std::size_t>(args.bins));
    const auto item_hist =
        cflab::histogram(cflab::retained_rhos(sweep.items), -1.0, 1.0, static_cast<std::size_t>(args.bins));
    write_histogram_csv((fs::path(out_dir) / "histogram_user.csv").string(), user_hist);
    write_histogram_csv((fs::path(out_dir) / "histogram_item.csv").string(), item_hist);
    cflab::write_histogram_svg((fs::path(out_dir) / "histogram_user.svg").string(),
                               std::string("user correlations (") + scenario + ")", user_hist);
    cflab::write_histogram_svg((fs::path(out_dir) / "histogram_item.svg").string(),
                               std::string("item correlations (") + scenario + ")", item_hist);

    auto print_stats = [](const char* view, const cflab::CorrelationStats& s) {
        std::cout << view << " view: n=" << s.n;
        if (!s.empty)
            std::cout << " mean=" << cflab::fmt_double(s.mean)
                      << " median=" << cflab::fmt_double(s.median)
                      << " sigma=" << cflab::fmt_double(s.sigma);
        std::cout << "\n";
    };
    print_stats("user", user_stats);
    print_stats("item", item_stats);
    return kExitOk;
}

// --- grid / report ---------------------------------------------------------------

struct GridArgs {
    std::string dataset;
    std::string config;
    std::string out;
    std::string mf_best;
    bool resume = false;
    int jobs = 0;
};

struct GridConfig {
    cflab::LraGrid lra;
    cflab::NcfnGrid ncfn;
    int jobs = 0;
    int eval_threads = 1;
    std::string dataset_path;
    std::string output_dir;
    double significance_alpha = 0.05;
};

GridConfig parse_grid_config(const json& j) {
    GridConfig cfg;
    if (j.contains("lra_search")) {
        const auto& g = j["lra_search"];
        if (g.contains("p_values")) cfg.lra.p_values = g["p_values"].get<std::vector<std::int32_t>>();
        if (g.contains("learning_rates"))
            cfg.lra.learning_rates = g["learning_rates"].get<std::vector<double>>();
        if (g.contains("seeds")) cfg.lra.seeds = g["seeds"].get<std::vector<std::uint64_t>>();
        cfg.lra.epochs = g.value("epochs", cfg.lra.epochs);
        cfg.lra.batch_size = g.value("batch_size", cfg.lra.batch_size);
        cfg.lra.use_biases = g.value("use_biases", cfg.lra.use_biases);
    }
    if (j.contains("ncfn_grid")) {
        const auto& g = j["ncfn_grid"];
        if (g.contains("modelings")) {
            cfg.ncfn.modelings.clear();
            for (const auto& s : g["modelings"])
                cfg.ncfn.modelings.push_back(cflab::modeling_from_string(s.get<std::string>()));
        }
        if (g.contains("embedding_modes")) {
            cfg.ncfn.embedding_modes.clear();
            for (const auto& s : g["embedding_modes"])
                cfg.ncfn.embedding_modes.push_back(
                    cflab::embedding_mode_from_string(s.get<std::string>()));
        }
        if (g.contains("hidden_layers") || g.contains("activations")) {
            std::vector<int> layers{0, 1, 2, 3};
            std::vector<cflab::Activation> acts{cflab::Activation::ReLU, cflab::Activation::ELU,
                                                cflab::Activation::Tanh, cflab::Activation::Sigmoid};
            if (g.contains("hidden_layers")) layers = g["hidden_layers"].get<std::vector<int>>();
            if (g.contains("activations")) {
                acts.clear();
                for (const auto& s : g["activations"])
                    acts.push_back(cflab::activation_from_string(s.get<std::string>()));
            }
            cfg.ncfn.architectures.clear();
            for (int l : layers) {
                if (l == 0) {
                    cfg.ncfn.architectures.push_back({0, std::nullopt});
                } else {
                    for (auto a : acts)
                        cfg.ncfn.architectures.push_back({l, a});
                }
            }
        }
        if (g.contains("learning_rates"))
            cfg.ncfn.learning_rates = g["learning_rates"].get<std::vector<double>>();
        if (g.contains("seeds")) cfg.ncfn.seeds = g["seeds"].get<std::vector<std::uint64_t>>();
        cfg.ncfn.epochs = g.value("epochs", cfg.ncfn.epochs);
        cfg.ncfn.batch_size = g.value("batch_size", cfg.ncfn.batch_size);
        cfg.ncfn.p = g.value("p", cfg.ncfn.p);
    }
    cfg.jobs = j.value("jobs", cfg.jobs);
    cfg.eval_threads = j.value("eval_threads", cfg.eval_threads);
    cfg.dataset_path = j.value("dataset", cfg.dataset_path);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.significance_alpha = j.value("significance_alpha", cfg.significance_alpha);
    return cfg;
}

json lra_record_to_json(const cflab::LraRunRecord& rec) {
    json j;
    j["format"] = "cflab.lra_run.v1";
    j["id"] = rec.id();
    j["p"] = rec.p;
    j["learning_rate"] = rec.learning_rate;
    j["seed"] = rec.seed;
    j["best_epoch"] = rec.best_epoch;
    j["report"] = {{"mrr", rec.report.mrr},
                   {"map_at_10", rec.report.map_at_10},
                   {"auc", rec.report.auc},
                   {"users_evaluated", rec.report.users_evaluated}};
    return j;
}

cflab::EvalReport report_from_json(const json& rep) {
    cflab::EvalReport r;
    r.mrr = rep.at("mrr").get<double>();
    r.map_at_10 = rep.at("map_at_10").get<double>();
    r.auc = rep.at("auc").get<double>();
    r.users_evaluated = rep.at("users_evaluated").get<std::int32_t>();
    return r;
}

void write_grid_reports(const std::string& out_dir, const std::vector<cflab::RunResult>& results,
                        const cflab::EvalReport& baseline) {
    const auto table = cflab::best_per_setting(results, baseline);
    cflab::write_results_csv((fs::path(out_dir) / "results.csv").string(), results);
    cflab::write_table2_csv((fs::path(out_dir) / "table2.csv").string(), table);
    cflab::write_figure3_csv((fs::path(out_dir) / "figure3.csv").string(), table);
    cflab::write_figure3_svg((fs::path(out_dir) / "figure3.svg").string(), table);

    std::cout << "setting,best_run,mrr,map_at_10,auc\n";
    std::cout << "mf_best,," << cflab::fmt_double(baseline.mrr) << ','
              << cflab::fmt_double(baseline.map_at_10) << ',' << cflab::fmt_double(baseline.auc)
              << "\n";
    for (const auto& row : table.rows) {
        std::cout << cflab::setting_label(row.modeling, row.embedding_mode) << ',';
        if (row.missing)
            std::cout << "missing,,,\n";
        else
            std::cout << row.best_run_id << ',' << cflab::fmt_double(row.report.mrr) << ','
                      << cflab::fmt_double(row.report.map_at_10) << ','
                      << cflab::fmt_double(row.report.auc) << "\n";
    }
}

int cmd_grid(const GridArgs& args) {
    GridConfig cfg = args.config.empty() ? GridConfig{} : parse_grid_config(read_json_file(args.config));
    if (args.jobs > 0) cfg.jobs = args.jobs;
    if (cfg.jobs <= 0) cfg.jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (cfg.jobs <= 0) cfg.jobs = 1;

    const std::string dataset_path = !args.dataset.empty() ? args.dataset : cfg.dataset_path;
    if (dataset_path.empty()) usage_error("--dataset FILE is required");
    std::string out_dir = !args.out.empty() ? args.out : cfg.output_dir;
    out_dir = resolve_out_dir(out_dir);
    fs::create_directories(out_dir);

    const auto ds = cflab::load_dataset(dataset_path);

    // MF_best: explicit file > resumable checkpoint > fresh search
    cflab::LatentFactors mf_best;
    cflab::EvalReport mf_report;
    const fs::path mf_model_path = fs::path(out_dir) / "mf_best.cfmodel";
    const fs::path mf_record_path = fs::path(out_dir) / "mf_best.json";
    const std::string pretrained_file = !args.mf_best.empty() ? args.mf_best
                                        : (args.resume && fs::exists(mf_model_path) &&
                                           fs::exists(mf_record_path))
                                            ? mf_model_path.string()
                                            : "";
    if (!pretrained_file.empty()) {
        mf_best = cflab::load_factors(pretrained_file);
        if (!args.mf_best.empty()) {
            // supplied checkpoint: evaluate it on this dataset's split
            auto score_all = [&mf_best](std::int32_t u) {
                return cflab::score_all_items(mf_best, u);
            };
            mf_report = cflab::evaluate(score_all, ds, cfg.eval_threads);
        } else {
            mf_report = report_from_json(read_json_file(mf_record_path.string()).at("report"));
        }
        std::cout << "[grid] pretrained factors: " << pretrained_file
                  << " mrr=" << cflab::fmt_double(mf_report.mrr) << "\n";
    } else {
        std::cout << "[grid] LRA search over " << cfg.lra.p_values.size() << " x "
                  << cfg.lra.learning_rates.size() << " x " << cfg.lra.seeds.size()
                  << " configurations\n";
        auto outcome = cflab::lra_search(ds, cfg.lra, cfg.jobs, cfg.eval_threads, &std::cout);
        mf_best = std::move(outcome.best_factors);
        mf_report = outcome.best.report;
        cflab::save_model(mf_best, mf_model_path.string());
        {
            auto out = cflab::open_out(mf_record_path.string());
            out << lra_record_to_json(outcome.best).dump(2) << '\n';
        }
        auto out = cflab::open_out((fs::path(out_dir) / "lra_search.csv").string());
        out << "run_id,p,learning_rate,seed,failed,best_epoch,mrr,map_at_10,auc\n";
        for (const auto& rec : outcome.all)
            out << rec.id() << ',' << rec.p << ',' << cflab::fmt_double(rec.learning_rate) << ','
                << rec.seed << ',' << (rec.failed ? 1 : 0) << ',' << rec.best_epoch << ','
                << cflab::fmt_double(rec.report.mrr) << ','
                << cflab::fmt_double(rec.report.map_at_10) << ','
                << cflab::fmt_double(rec.report.auc) << '\n';
        std::cout << "[grid] mf_best: " << outcome.best.id()
                  << " mrr=" << cflab::fmt_double(mf_report.mrr)
                  << " auc=" << cflab::fmt_double(mf_report.auc) << "\n";
    }

    const auto specs = cflab::enumerate_grid(cfg.ncfn);
    std::cout << "[grid] " << specs.size() << " neural runs, " << cfg.jobs << " workers\n";
    const auto results =
        cflab::run_grid(ds, &mf_best, specs, out_dir, args.resume, cfg.jobs, cfg.eval_threads,
                        &std::cout);
    write_grid_reports(out_dir, results, mf_report);
    return kExitOk;
}

struct ReportArgs {
    std::string runs;
    std::string mf_record;
    std::string out;
};

int cmd_report(const ReportArgs& args) {
    const fs::path runs_dir = fs::is_directory(fs::path(args.runs) / "runs")
                                  ? fs::path(args.runs) / "runs"
                                  : fs::path(args.runs);
    if (!fs::is_directory(runs_dir)) throw cflab::Error("no runs directory at " + args.runs);

    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(runs_dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    std::vector<cflab::RunResult> results;
    for (const auto& f : files) results.push_back(cflab::run_result_from_json(read_json_file(f)));
    if (results.empty()) throw cflab::Error("no run records under " + runs_dir.string());

    std::string mf_record = args.mf_record;
    if (mf_record.empty()) {
        const fs::path guess = fs::path(args.runs) / "mf_best.json";
        if (fs::exists(guess)) mf_record = guess.string();
    }
    if (mf_record.empty()) usage_error("--mf-best-record FILE is required (none found next to runs)");
    const auto baseline = report_from_json(read_json_file(mf_record).at("report"));

    const std::string out_dir = resolve_out_dir(args.out);
    fs::create_directories(out_dir);
    write_grid_reports(out_dir, results, baseline);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cflab: collaborative filtering experiments with latent-factor diagnostics"};
    app.require_subcommand(1);

    PrepareArgs prepare;
    auto* cmd_p = app.add_subcommand("prepare", "build a binarized dataset from a ratings CSV");
    cmd_p->add_option("--ratings", prepare.ratings, "ratings.csv path")->required();
    cmd_p->add_option("--scenario", prepare.scenario, "implicit|explicit")
        ->check(CLI::IsMember({"implicit", "explicit"}));
    cmd_p->add_option("--split", prepare.split, "train fraction in (0,1); omit for no split");
    cmd_p->add_option("--seed", prepare.seed, "split seed");
    cmd_p->add_option("--out", prepare.out, "output directory");

    TrainArgs train;
    auto* cmd_t = app.add_subcommand("train", "fit one LRA or neural model");
    cmd_t->add_option("--dataset", train.dataset, "dataset JSON from prepare")->required();
    cmd_t->add_option("--model", train.model, "lra|dnn")->check(CLI::IsMember({"lra", "dnn"}));
    cmd_t->add_option("--loss", train.loss, "bpr|bce")->check(CLI::IsMember({"bpr", "bce"}));
    cmd_t->add_option("--config", train.config, "training config JSON");
    cmd_t->add_option("--out", train.out, "output directory");
    cmd_t->add_option("--pretrained", train.pretrained, "factor checkpoint for dnn pretraining");
    cmd_t->add_flag("--fixed", train.fixed, "freeze pretrained embeddings");
    cmd_t->add_option("--epochs", train.epochs, "override epochs");
    cmd_t->add_option("--lr", train.lr, "override learning rate");
    cmd_t->add_option("--seed", train.seed, "override seed");
    cmd_t->add_option("--p", train.p, "override latent dimension");
    cmd_t->add_option("--batch-size", train.batch, "override batch size");
    cmd_t->add_option("--modeling", train.modeling, "dnn input modeling: concat|hadamard")
        ->check(CLI::IsMember({"concat", "hadamard"}));
    cmd_t->add_option("--layers", train.layers, "dnn hidden layer count (0-3)");
    cmd_t->add_option("--activation", train.activation, "dnn activation")
        ->check(CLI::IsMember({"relu", "elu", "tanh", "sigmoid"}));
    cmd_t->add_option("--eval-threads", train.eval_threads, "threads for ranking evaluation");

    DiagnoseArgs diagnose;
    auto* cmd_d = app.add_subcommand("diagnose", "covariance-correlation diagnostics of factors");
    cmd_d->add_option("--dataset", diagnose.dataset, "dataset JSON")->required();
    cmd_d->add_option("--factors", diagnose.factors, "factor checkpoint")->required();
    cmd_d->add_option("--alpha", diagnose.alpha, "significance threshold");
    cmd_d->add_option("--out", diagnose.out, "output directory");
    cmd_d->add_option("--bins", diagnose.bins, "histogram bin count")->check(CLI::PositiveNumber);

    GridArgs grid;
    auto* cmd_g = app.add_subcommand("grid", "run the full experiment grid");
    cmd_g->add_option("--dataset", grid.dataset, "dataset JSON (implicit, split)");
    cmd_g->add_option("--config", grid.config, "grid config JSON");
    cmd_g->add_option("--out", grid.out, "output directory");
    cmd_g->add_option("--mf-best", grid.mf_best, "pretrained factor checkpoint (skips LRA search)");
    cmd_g->add_flag("--resume", grid.resume, "skip runs with existing records");
    cmd_g->add_option("--jobs", grid.jobs, "worker count (0 = hardware)");

    ReportArgs report;
    auto* cmd_r = app.add_subcommand("report", "regenerate reports from stored run records");
    cmd_r->add_option("--runs", report.runs, "grid output directory (or its runs/ subdir)")
        ->required();
    cmd_r->add_option("--mf-best-record", report.mf_record, "mf_best.json record");
    cmd_r->add_option("--out", report.out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (cmd_p->parsed()) return cmd_prepare(prepare);
        if (cmd_t->parsed()) return cmd_train(train);
        if (cmd_d->parsed()) return cmd_diagnose(diagnose);
        if (cmd_g->parsed()) return cmd_grid(grid);
        if (cmd_r->parsed()) return cmd_report(report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
