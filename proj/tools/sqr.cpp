// sqr: symbolic quantile regression command-line tool.
//
// Subcommands: fit, predict, evaluate, benchmark, synth. Exit codes:
//   0 success, 1 data/model error, 2 configuration error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sqr/bench.hpp"
#include "sqr/data.hpp"
#include "sqr/model_io.hpp"
#include "sqr/pareto.hpp"
#include "sqr/search.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw sqr::DataError("cannot open file for hashing: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw sqr::DataError("cannot write file: " + path);
    out << content;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const ordered_json& config_snapshot, std::uint64_t seed,
                    const std::vector<std::string>& inputs) {
    ordered_json m;
    m["command"] = command;
    m["config"] = config_snapshot;
    m["seed"] = seed;
    ordered_json hashes;
    for (const auto& p : inputs) hashes[p] = hex64(fnv1a_file(p));
    m["input_hashes"] = hashes;
    m["tool_version"] = kToolVersion;
    m["timestamp"] = timestamp_utc();
    write_text(out_dir + "/manifest.json", m.dump(2) + "\n");
}

int cmd_fit(const std::string& data_path, double tau, const std::string& config_path,
            const std::string& out_dir, std::uint64_t seed, bool seed_given, bool deterministic,
            std::size_t max_train_rows, const std::string& target) {
    sqr::SearchConfig cfg;
    if (!config_path.empty()) cfg = sqr::load_config(config_path);
    cfg.tau = tau;
    if (seed_given) cfg.seed = seed;
    cfg.nthreads = deterministic ? 1 : std::max(1u, std::thread::hardware_concurrency());
    cfg.validate();

    sqr::Dataset ds = sqr::load_csv(data_path, target);
    if (max_train_rows > 0) ds = sqr::subsample(ds, max_train_rows, cfg.seed);

    const sqr::SearchResult res = sqr::evolve(ds, cfg);

    fs::create_directories(out_dir);
    write_text(out_dir + "/front.csv", res.front.to_text(&ds.names));

    const auto save_selected = [&](sqr::SelectMode mode, const std::string& name) {
        const auto [complexity, entry] = res.front.select(mode);
        sqr::ExpressionModel model;
        model.expr = entry->expr;
        model.feature_names = ds.names;
        model.tau = cfg.tau;
        sqr::save_model(model, out_dir + "/" + name);
    };
    save_selected(sqr::SelectMode::BestLoss, "model_best.json");
    save_selected(sqr::SelectMode::Elbow, "model_elbow.json");

    ordered_json snapshot;
    std::istringstream cfgtext(sqr::config_to_text(cfg));
    std::string line;
    while (std::getline(cfgtext, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) snapshot[line.substr(0, eq)] = line.substr(eq + 3);
    }
    snapshot["deterministic"] = deterministic;
    std::vector<std::string> inputs = {data_path};
    if (!config_path.empty()) inputs.push_back(config_path);
    write_manifest(out_dir, "fit", snapshot, cfg.seed, inputs);
    return 0;
}

// aligns data columns to the model's expected features by name when the model
// carries names; otherwise the first columns are used positionally
sqr::Matrix align_features(const sqr::Dataset& ds, const sqr::Model& model) {
    if (const auto* e = std::get_if<sqr::ExpressionModel>(&model)) {
        sqr::Matrix X(ds.n(), e->feature_names.size());
        for (std::size_t j = 0; j < e->feature_names.size(); ++j) {
            const auto it = std::find(ds.names.begin(), ds.names.end(), e->feature_names[j]);
            if (it == ds.names.end())
                throw sqr::ModelError("input data lacks feature column '" +
                                      e->feature_names[j] + "'");
            const std::size_t src = static_cast<std::size_t>(it - ds.names.begin());
            for (std::size_t i = 0; i < ds.n(); ++i) X(i, j) = ds.features(i, src);
        }
        return X;
    }
    return ds.features;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path) {
    const sqr::Model model = sqr::load_model(model_path);
    const sqr::Dataset ds = sqr::load_csv(data_path);
    const std::vector<double> preds = sqr::predict(model, align_features(ds, model));
    std::string out = "prediction\n";
    char buf[40];
    for (const double p : preds) {
        std::snprintf(buf, sizeof(buf), "%.17g\n", p);
        out += buf;
    }
    if (out_path.empty() || out_path == "-") std::cout << out;
    else write_text(out_path, out);
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path, double tau,
                 const std::string& target) {
    const sqr::Model model = sqr::load_model(model_path);
    const sqr::Dataset ds = sqr::load_csv(data_path, target);
    const std::vector<double> preds = sqr::predict(model, align_features(ds, model));
    const double nql = sqr::normalized_quantile_loss(tau, ds.target, preds);
    const double coverage = sqr::empirical_coverage(ds.target, preds);
    const double ace = sqr::absolute_coverage_error(tau, coverage);
    const int parsimony = sqr::model_parsimony(model);
    std::printf("nql %.12g\n", nql);
    std::printf("coverage %.12g\n", coverage);
    std::printf("ace %.12g\n", ace);
    std::printf("parsimony %d\n", parsimony);
    return 0;
}

int cmd_benchmark(const std::string& config_path, const std::string& out_dir) {
    const sqr::BenchConfig cfg = sqr::load_bench_config(config_path);
    const sqr::BenchmarkReport report = sqr::run_benchmark(cfg);
    fs::create_directories(out_dir);
    write_text(out_dir + "/report_rows.csv", sqr::report_rows_csv(report));
    write_text(out_dir + "/report_summary.txt", sqr::report_summary_text(report));
    ordered_json snapshot;
    snapshot["config_path"] = config_path;
    std::vector<std::string> inputs = {config_path};
    for (const auto& p : cfg.dataset_paths) inputs.push_back(p);
    write_manifest(out_dir, "benchmark", snapshot, cfg.seed, inputs);
    std::cout << sqr::report_summary_text(report);
    return 0;
}

int cmd_synth(const std::string& kind, std::size_t n, std::uint64_t seed,
              const std::string& out_path, double p1, double p2, double p3) {
    sqr::SynthResult res;
    if (kind == "heteroskedastic") res = sqr::synth_heteroskedastic(n, p1, p2, seed);
    else if (kind == "linear") res = sqr::synth_linear(n, p1, p2, p3, seed);
    else if (kind == "trig") res = sqr::synth_trig(n, p1, p2, p3, seed);
    else throw sqr::ConfigError("unknown synth kind: " + kind);
    sqr::write_csv(res.data, out_path);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"symbolic quantile regression"};
    app.require_subcommand(1);

    // fit
    auto* fit = app.add_subcommand("fit", "search for quantile expressions");
    std::string fit_data, fit_config, fit_out = "sqr_out", fit_target;
    double fit_tau = 0.5;
    std::uint64_t fit_seed = 0;
    bool fit_det = false;
    std::size_t fit_max_rows = 0;
    fit->add_option("--data", fit_data, "training CSV")->required();
    fit->add_option("--tau", fit_tau, "quantile level in (0,1)");
    fit->add_option("--config", fit_config, "search config file");
    fit->add_option("--out", fit_out, "output directory");
    auto* fit_seed_opt = fit->add_option("--seed", fit_seed, "random seed");
    fit->add_flag("--deterministic", fit_det, "single-threaded, bit-reproducible");
    fit->add_option("--max-train-rows", fit_max_rows, "subsample training rows (0 = off)");
    fit->add_option("--target", fit_target, "target column name (default: last column)");

    // predict
    auto* predict = app.add_subcommand("predict", "apply a saved model");
    std::string pr_model, pr_data, pr_out;
    predict->add_option("--model", pr_model, "model file")->required();
    predict->add_option("--data", pr_data, "input CSV")->required();
    predict->add_option("--out", pr_out, "output CSV (default stdout)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score a saved model");
    std::string ev_model, ev_data, ev_target;
    double ev_tau = 0.5;
    evaluate->add_option("--model", ev_model, "model file")->required();
    evaluate->add_option("--data", ev_data, "evaluation CSV")->required();
    evaluate->add_option("--tau", ev_tau, "quantile level in (0,1)");
    evaluate->add_option("--target", ev_target, "target column name");

    // benchmark
    auto* benchmark = app.add_subcommand("benchmark", "run the evaluation protocol");
    std::string bm_config, bm_out = "bench_out";
    benchmark->add_option("--config", bm_config, "benchmark config (JSON)")->required();
    benchmark->add_option("--out", bm_out, "output directory");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string sy_kind = "heteroskedastic", sy_out;
    std::size_t sy_n = 1000;
    std::uint64_t sy_seed = 0;
    double sy_p1 = 3.0, sy_p2 = 1.0, sy_p3 = 0.5;
    synth->add_option("--kind", sy_kind, "heteroskedastic | linear | trig");
    synth->add_option("--n", sy_n, "number of rows");
    synth->add_option("--seed", sy_seed, "random seed");
    synth->add_option("--out", sy_out, "output CSV")->required();
    synth->add_option("--p1", sy_p1, "generator parameter 1 (beta / intercept / amplitude)");
    synth->add_option("--p2", sy_p2, "generator parameter 2 (sigma / slope / frequency)");
    synth->add_option("--p3", sy_p3, "generator parameter 3 (sigma for linear/trig)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (fit->parsed()) {
            if (!(fit_tau > 0.0 && fit_tau < 1.0))
                throw sqr::ConfigError("tau must lie in the open interval (0,1)");
            return cmd_fit(fit_data, fit_tau, fit_config, fit_out, fit_seed,
                           fit_seed_opt->count() > 0, fit_det, fit_max_rows, fit_target);
        }
        if (predict->parsed()) return cmd_predict(pr_model, pr_data, pr_out);
        if (evaluate->parsed()) {
            if (!(ev_tau > 0.0 && ev_tau < 1.0))
                throw sqr::ConfigError("tau must lie in the open interval (0,1)");
            return cmd_evaluate(ev_model, ev_data, ev_tau, ev_target);
        }
        if (benchmark->parsed()) return cmd_benchmark(bm_config, bm_out);
        if (synth->parsed()) return cmd_synth(sy_kind, sy_n, sy_seed, sy_out, sy_p1, sy_p2, sy_p3);
    } catch (const sqr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
