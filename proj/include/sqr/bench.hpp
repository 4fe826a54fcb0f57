#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sqr/baselines.hpp"
#include "sqr/data.hpp"
#include "sqr/loss.hpp"
#include "sqr/model_io.hpp"
#include "sqr/search.hpp"
#include "sqr/stats.hpp"

namespace sqr {

// ---------------------------------------------------------------------------
// Benchmark protocol: models x datasets x folds x quantiles, k-fold CV,
// per-dataset fold averaging, then a two-stage Friedman / Wilcoxon analysis
// with Bonferroni correction.

struct BenchModelSpec {
    enum class Kind { Sqr, Lqr, Qdt, External };
    std::string name;
    Kind kind = Kind::Sqr;
    SearchConfig search;              // Sqr
    std::size_t max_train_rows = 0;   // Sqr: 0 means no subsampling
    int min_samples_leaf = 1;         // Qdt
    std::string predictions_dir;      // External

    bool has_parsimony() const { return kind != Kind::External; }
};

struct BenchConfig {
    std::vector<BenchModelSpec> models;
    std::vector<std::string> dataset_paths;
    std::vector<std::string> dataset_names; // parallel to paths
    std::vector<double> taus = {0.5, 0.9};
    int k = 5;
    std::uint64_t seed = 0;
    int nthreads = 1;
};

struct BenchRow {
    std::string model;
    std::string dataset;
    int fold = 0;
    double tau = 0.5;
    bool ok = false;
    std::string skip_reason;
    double nql = 0.0;
    double ace = 0.0;
    double coverage = 0.0;
    int parsimony = -1; // -1: absent
    double wall_time_ms = 0.0;
};

struct Aggregate {
    std::string model;
    double tau = 0.5;
    double nql_mean = 0.0, nql_sd = 0.0;
    double ace_mean = 0.0, ace_sd = 0.0;
    double parsimony_mean = 0.0, parsimony_sd = 0.0;
    double wall_time_mean_ms = 0.0;
    int datasets_counted = 0;
    bool has_parsimony = true;
};

struct FriedmanOutcome {
    std::string metric;
    double tau = 0.5;
    TestResult result;
    double corrected_alpha = 0.0;
    bool significant = false;
};

struct WilcoxonOutcome {
    std::string metric;
    double tau = 0.5;
    std::string model_a, model_b;
    TestResult result;
    double corrected_alpha = 0.0;
    bool significant = false;
};

struct BenchmarkReport {
    std::vector<BenchRow> rows;
    std::vector<Aggregate> aggregates;
    std::vector<FriedmanOutcome> friedman;
    std::vector<WilcoxonOutcome> wilcoxon;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    // splitmix64-style mixing
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (a + 1) + 0xbf58476d1ce4e5b9ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::string tau_tag(double tau) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", tau);
    return buf;
}

/// External predictions: CSV with header `row,prediction`, one line per test
/// row, keyed by the row's index within the original dataset.
inline std::vector<double> load_external_predictions(const std::string& dir,
                                                     const std::string& dataset, double tau,
                                                     int fold,
                                                     const std::vector<std::size_t>& test_rows) {
    const std::string path =
        dir + "/" + dataset + "_tau" + tau_tag(tau) + "_fold" + std::to_string(fold) + ".csv";
    std::ifstream in(path);
    if (!in) throw DataError("external predictions file not found: " + path);
    std::string line;
    std::getline(in, line); // header
    std::map<std::size_t, double> by_row;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos) throw DataError("malformed prediction line in " + path);
        by_row[std::stoull(line.substr(0, comma))] = std::stod(line.substr(comma + 1));
    }
    std::vector<double> preds;
    preds.reserve(test_rows.size());
    for (const auto r : test_rows) {
        const auto it = by_row.find(r);
        if (it == by_row.end())
            throw DataError("missing prediction for row " + std::to_string(r) + " in " + path);
        preds.push_back(it->second);
    }
    return preds;
}

struct FitOutcome {
    std::vector<double> predictions;
    int parsimony = -1;
    double wall_time_ms = 0.0;
};

inline FitOutcome run_model_on_fold(const BenchModelSpec& spec, const Dataset& train,
                                    const Dataset& test, const std::string& dataset_name,
                                    double tau, int fold,
                                    const std::vector<std::size_t>& test_rows,
                                    std::uint64_t cell_seed) {
    FitOutcome out;
    using clock = std::chrono::steady_clock;
    switch (spec.kind) {
    case BenchModelSpec::Kind::Sqr: {
        SearchConfig cfg = spec.search;
        cfg.tau = tau;
        cfg.seed = cell_seed;
        Dataset fit_data =
            spec.max_train_rows > 0 ? subsample(train, spec.max_train_rows, cell_seed) : train;
        const auto t0 = clock::now();
        const SearchResult res = evolve(fit_data, cfg);
        out.wall_time_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        const auto [complexity, entry] = res.front.select(SelectMode::Elbow);
        out.parsimony = complexity;
        out.predictions = evaluate(entry->expr, test.features);
        break;
    }
    case BenchModelSpec::Kind::Lqr: {
        const auto t0 = clock::now();
        const LinearQuantileModel m = fit_linear_quantile(train, tau);
        out.wall_time_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        out.parsimony = m.parsimony();
        out.predictions = m.predict(test.features);
        break;
    }
    case BenchModelSpec::Kind::Qdt: {
        const auto t0 = clock::now();
        const QuantileTreeModel m = fit_quantile_tree(train, tau, spec.min_samples_leaf);
        out.wall_time_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        out.parsimony = m.parsimony();
        out.predictions = m.predict(test.features);
        break;
    }
    case BenchModelSpec::Kind::External:
        out.predictions = load_external_predictions(spec.predictions_dir, dataset_name, tau,
                                                    fold, test_rows);
        break;
    }
    return out;
}

inline void mean_sd(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (xs.empty()) return;
    for (const double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return;
    double ss = 0.0;
    for (const double x : xs) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

} // namespace detail

inline BenchmarkReport run_benchmark(const BenchConfig& cfg) {
    if (cfg.models.empty()) throw ConfigError("benchmark: need at least one model");
    if (cfg.dataset_paths.empty()) throw ConfigError("benchmark: need at least one dataset");
    for (const double tau : cfg.taus)
        if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("benchmark: taus must lie in (0,1)");

    BenchmarkReport report;

    struct Cell {
        std::size_t dataset_idx;
        int fold;
    };
    std::vector<Dataset> datasets;
    std::vector<FoldPlan> plans;
    for (std::size_t di = 0; di < cfg.dataset_paths.size(); ++di) {
        datasets.push_back(load_csv(cfg.dataset_paths[di]));
        plans.push_back(kfold(datasets.back().n(), cfg.k,
                              detail::mix_seed(cfg.seed, di, 0xf01d)));
    }

    std::vector<Cell> cells;
    for (std::size_t di = 0; di < datasets.size(); ++di)
        for (int f = 0; f < cfg.k; ++f) cells.push_back({di, f});

    // one row slot per (cell, tau, model); cells run independently
    std::vector<std::vector<BenchRow>> cell_rows(cells.size());
    const auto run_cell = [&](std::size_t ci) {
        const auto [di, fold] = cells[ci];
        const Dataset& ds = datasets[di];
        const std::string& name = cfg.dataset_names[di];
        auto [train, test] = split_fold(ds, plans[di], fold);
        std::vector<std::size_t> test_rows;
        for (std::size_t i = 0; i < ds.n(); ++i)
            if (plans[di].assignments[i] == fold) test_rows.push_back(i);

        for (const double tau : cfg.taus) {
            for (const auto& spec : cfg.models) {
                BenchRow row;
                row.model = spec.name;
                row.dataset = name;
                row.fold = fold;
                row.tau = tau;
                const auto [lo, hi] =
                    std::minmax_element(test.target.begin(), test.target.end());
                if (!(*hi > *lo)) {
                    row.skip_reason = "degenerate test-fold target range";
                    cell_rows[ci].push_back(std::move(row));
                    continue;
                }
                try {
                    const auto outcome = detail::run_model_on_fold(
                        spec, train, test, name, tau, fold,
                        test_rows, detail::mix_seed(cfg.seed, di, static_cast<std::uint64_t>(fold)));
                    row.nql = normalized_quantile_loss(tau, test.target, outcome.predictions);
                    row.coverage = empirical_coverage(test.target, outcome.predictions);
                    row.ace = absolute_coverage_error(tau, row.coverage);
                    row.parsimony = outcome.parsimony;
                    row.wall_time_ms = outcome.wall_time_ms;
                    row.ok = true;
                } catch (const std::exception& e) {
                    row.skip_reason = e.what();
                }
                cell_rows[ci].push_back(std::move(row));
            }
        }
    };

    const int nthreads = std::max(1, cfg.nthreads);
    if (nthreads == 1) {
        for (std::size_t ci = 0; ci < cells.size(); ++ci) run_cell(ci);
    } else {
        std::vector<std::thread> workers;
        for (int t = 0; t < nthreads; ++t) workers.emplace_back([&, t] {
            for (std::size_t ci = t; ci < cells.size(); ci += nthreads) run_cell(ci);
        });
        for (auto& w : workers) w.join();
    }
    for (auto& rows : cell_rows)
        for (auto& r : rows) report.rows.push_back(std::move(r));

    // fold scores averaged per dataset, then mean +- SD over datasets
    struct DatasetScore {
        double nql = 0.0, ace = 0.0, parsimony = 0.0, wall = 0.0;
        int folds = 0;
    };
    const auto dataset_scores = [&](const std::string& model, double tau) {
        std::map<std::string, DatasetScore> per_ds;
        for (const auto& r : report.rows) {
            if (!r.ok || r.model != model || r.tau != tau) continue;
            auto& s = per_ds[r.dataset];
            s.nql += r.nql;
            s.ace += r.ace;
            s.parsimony += r.parsimony;
            s.wall += r.wall_time_ms;
            ++s.folds;
        }
        for (auto& [k, s] : per_ds)
            if (s.folds > 0) {
                s.nql /= s.folds;
                s.ace /= s.folds;
                s.parsimony /= s.folds;
                s.wall /= s.folds;
            }
        return per_ds;
    };

    for (const auto& spec : cfg.models) {
        for (const double tau : cfg.taus) {
            const auto per_ds = dataset_scores(spec.name, tau);
            Aggregate agg;
            agg.model = spec.name;
            agg.tau = tau;
            agg.has_parsimony = spec.has_parsimony();
            std::vector<double> nqls, aces, pars, walls;
            for (const auto& [k, s] : per_ds) {
                if (s.folds == 0) continue;
                nqls.push_back(s.nql);
                aces.push_back(s.ace);
                pars.push_back(s.parsimony);
                walls.push_back(s.wall);
            }
            agg.datasets_counted = static_cast<int>(nqls.size());
            detail::mean_sd(nqls, agg.nql_mean, agg.nql_sd);
            detail::mean_sd(aces, agg.ace_mean, agg.ace_sd);
            detail::mean_sd(pars, agg.parsimony_mean, agg.parsimony_sd);
            double dummy_sd;
            detail::mean_sd(walls, agg.wall_time_mean_ms, dummy_sd);
            report.aggregates.push_back(agg);
        }
    }

    // two-stage statistical analysis: Friedman per (metric, tau), then
    // pairwise Wilcoxon only where the Friedman test passes the corrected
    // alpha
    const char* metric_names[] = {"nql", "ace", "parsimony"};
    const int n_metric_tau = 3 * static_cast<int>(cfg.taus.size());
    const double friedman_alpha = bonferroni(0.05, n_metric_tau);
    int total_pairs = 0;
    for (int metric = 0; metric < 3; ++metric) {
        int nm = 0;
        for (const auto& spec : cfg.models)
            if (metric != 2 || spec.has_parsimony()) ++nm;
        total_pairs += static_cast<int>(cfg.taus.size()) * nm * (nm - 1) / 2;
    }
    const double wilcoxon_alpha = total_pairs > 0 ? bonferroni(0.05, total_pairs) : 0.05;

    for (int metric = 0; metric < 3; ++metric) {
        std::vector<std::string> models;
        for (const auto& spec : cfg.models)
            if (metric != 2 || spec.has_parsimony()) models.push_back(spec.name);
        if (models.size() < 2) continue;
        for (const double tau : cfg.taus) {
            // per-dataset score vectors, restricted to datasets covered by all
            // models
            std::map<std::string, std::map<std::string, DatasetScore>> by_model;
            for (const auto& m : models) by_model[m] = dataset_scores(m, tau);
            std::vector<std::string> common;
            for (const auto& [ds, s] : by_model[models[0]]) {
                bool everywhere = true;
                for (const auto& m : models)
                    everywhere &= by_model[m].count(ds) > 0;
                if (everywhere) common.push_back(ds);
            }
            if (common.size() < 2) continue;
            Matrix scores(common.size(), models.size());
            for (std::size_t i = 0; i < common.size(); ++i)
                for (std::size_t j = 0; j < models.size(); ++j) {
                    const auto& s = by_model[models[j]][common[i]];
                    scores(i, j) = metric == 0 ? s.nql : metric == 1 ? s.ace : s.parsimony;
                }
            FriedmanOutcome fo;
            fo.metric = metric_names[metric];
            fo.tau = tau;
            fo.result = friedman_test(scores);
            fo.corrected_alpha = friedman_alpha;
            fo.significant = fo.result.p_value < friedman_alpha;
            report.friedman.push_back(fo);
            if (!fo.significant) continue;
            for (std::size_t a = 0; a < models.size(); ++a) {
                for (std::size_t b = a + 1; b < models.size(); ++b) {
                    std::vector<double> va, vb;
                    for (std::size_t i = 0; i < common.size(); ++i) {
                        va.push_back(scores(i, a));
                        vb.push_back(scores(i, b));
                    }
                    WilcoxonOutcome wo;
                    wo.metric = metric_names[metric];
                    wo.tau = tau;
                    wo.model_a = models[a];
                    wo.model_b = models[b];
                    wo.corrected_alpha = wilcoxon_alpha;
                    try {
                        wo.result = wilcoxon_signed_rank(va, vb);
                        wo.significant = wo.result.p_value < wilcoxon_alpha;
                    } catch (const std::invalid_argument&) {
                        wo.result.degenerate = true; // too few nonzero differences
                    }
                    report.wilcoxon.push_back(wo);
                }
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report emission: a rows CSV plus a structured-text summary.

inline std::string report_rows_csv(const BenchmarkReport& report) {
    std::ostringstream out;
    out << "model,dataset,fold,tau,ok,nql,ace,coverage,parsimony,wall_time_ms,skip_reason\n";
    char buf[64];
    for (const auto& r : report.rows) {
        out << r.model << ',' << r.dataset << ',' << r.fold << ',' << detail::tau_tag(r.tau)
            << ',' << (r.ok ? 1 : 0) << ',';
        if (r.ok) {
            std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,", r.nql, r.ace, r.coverage);
            out << buf;
            if (r.parsimony >= 0) out << r.parsimony;
            out << ',';
            std::snprintf(buf, sizeof(buf), "%.6g", r.wall_time_ms);
            out << buf << ',';
        } else {
            out << ",,,,,";
        }
        out << r.skip_reason << '\n';
    }
    return out.str();
}

inline std::string report_summary_text(const BenchmarkReport& report) {
    std::ostringstream out;
    char buf[160];
    out << "== aggregates (mean +- SD over datasets) ==\n";
    for (const auto& a : report.aggregates) {
        std::snprintf(buf, sizeof(buf),
                      "%-10s tau=%-4g nql %.4f+-%.4f  ace %.4f+-%.4f", a.model.c_str(), a.tau,
                      a.nql_mean, a.nql_sd, a.ace_mean, a.ace_sd);
        out << buf;
        if (a.has_parsimony) {
            std::snprintf(buf, sizeof(buf), "  parsimony %.2f+-%.2f", a.parsimony_mean,
                          a.parsimony_sd);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "  fit %.3f ms  (%d datasets)\n", a.wall_time_mean_ms,
                      a.datasets_counted);
        out << buf;
    }
    out << "\n== Friedman tests (corrected alpha";
    if (!report.friedman.empty()) {
        std::snprintf(buf, sizeof(buf), " = %.5f", report.friedman.front().corrected_alpha);
        out << buf;
    }
    out << ") ==\n";
    for (const auto& f : report.friedman) {
        std::snprintf(buf, sizeof(buf), "%-10s tau=%-4g statistic %.4f  p %.6g  %s\n",
                      f.metric.c_str(), f.tau, f.result.statistic, f.result.p_value,
                      f.significant ? "significant" : "not significant");
        out << buf;
    }
    out << "\n== pairwise Wilcoxon (gated on Friedman; corrected alpha";
    if (!report.wilcoxon.empty()) {
        std::snprintf(buf, sizeof(buf), " = %.5f", report.wilcoxon.front().corrected_alpha);
        out << buf;
    }
    out << ") ==\n";
    for (const auto& w : report.wilcoxon) {
        std::snprintf(buf, sizeof(buf), "%-10s tau=%-4g %s vs %s  T %.1f  p %.6g  %s\n",
                      w.metric.c_str(), w.tau, w.model_a.c_str(), w.model_b.c_str(),
                      w.result.statistic, w.result.p_value,
                      w.result.degenerate ? "degenerate"
                      : w.significant    ? "significant"
                                         : "not significant");
        out << buf;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Benchmark configuration file (JSON).

inline BenchConfig bench_config_from_json(const nlohmann::json& j,
                                          const std::string& base_dir = "") {
    BenchConfig cfg;
    const auto resolve = [&](const std::string& p) {
        if (base_dir.empty() || p.empty() || p.front() == '/') return p;
        return base_dir + "/" + p;
    };
    try {
        for (const auto& d : j.at("datasets")) {
            const std::string path = resolve(d.get<std::string>());
            cfg.dataset_paths.push_back(path);
            // dataset name = file stem
            std::string name = path;
            const auto slash = name.find_last_of('/');
            if (slash != std::string::npos) name.erase(0, slash + 1);
            const auto dot = name.rfind('.');
            if (dot != std::string::npos) name.erase(dot);
            cfg.dataset_names.push_back(name);
        }
        if (j.contains("taus")) cfg.taus = j.at("taus").get<std::vector<double>>();
        cfg.k = j.value("k", 5);
        cfg.seed = j.value("seed", 0ull);
        cfg.nthreads = j.value("nthreads", 1);
        for (const auto& m : j.at("models")) {
            BenchModelSpec spec;
            spec.name = m.at("name").get<std::string>();
            const std::string type = m.at("type").get<std::string>();
            if (type == "sqr") {
                spec.kind = BenchModelSpec::Kind::Sqr;
                if (m.contains("config"))
                    spec.search = load_config(resolve(m.at("config").get<std::string>()));
                spec.max_train_rows = m.value("max_train_rows", 0ull);
            } else if (type == "lqr") {
                spec.kind = BenchModelSpec::Kind::Lqr;
            } else if (type == "qdt") {
                spec.kind = BenchModelSpec::Kind::Qdt;
                spec.min_samples_leaf = m.value("min_samples_leaf", 1);
            } else if (type == "external") {
                spec.kind = BenchModelSpec::Kind::External;
                spec.predictions_dir = resolve(m.at("predictions_dir").get<std::string>());
            } else {
                throw ConfigError("unknown model type: " + type);
            }
            cfg.models.push_back(std::move(spec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed benchmark config: ") + e.what());
    }
    if (cfg.k < 2) throw ConfigError("benchmark: k must be >= 2");
    return cfg;
}

inline BenchConfig load_bench_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open benchmark config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed benchmark config: ") + e.what());
    }
    std::string base = path;
    const auto slash = base.find_last_of('/');
    base = slash == std::string::npos ? std::string() : base.substr(0, slash);
    return bench_config_from_json(j, base);
}

} // namespace sqr
