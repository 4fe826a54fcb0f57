#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "sqr/bench.hpp"

using namespace sqr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("sqr_bench_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string make_synth_csv(const fs::path& dir, const std::string& name, std::uint64_t seed,
                           bool linear = true) {
    const SynthResult res = linear ? synth_linear(150, 1.0, 2.0, 0.3, seed)
                                   : synth_heteroskedastic(150, 3.0, 1.0, seed);
    const std::string path = (dir / (name + ".csv")).string();
    write_csv(res.data, path);
    return path;
}

BenchModelSpec lqr_spec(const std::string& name = "lqr") {
    BenchModelSpec spec;
    spec.name = name;
    spec.kind = BenchModelSpec::Kind::Lqr;
    return spec;
}

BenchModelSpec qdt_spec() {
    BenchModelSpec spec;
    spec.name = "qdt";
    spec.kind = BenchModelSpec::Kind::Qdt;
    spec.min_samples_leaf = 10;
    return spec;
}

} // namespace

TEST_CASE("benchmark accounting: one model, one dataset, k folds") {
    TempDir tmp;
    BenchConfig cfg;
    cfg.dataset_paths = {make_synth_csv(tmp.path, "lin", 1)};
    cfg.dataset_names = {"lin"};
    cfg.models = {lqr_spec()};
    cfg.taus = {0.5};
    cfg.k = 5;
    const BenchmarkReport report = run_benchmark(cfg);
    CHECK(report.rows.size() == 5);
    for (const auto& r : report.rows) {
        CHECK(r.ok);
        CHECK(r.parsimony == 2);
        CHECK(r.ace == doctest::Approx(std::abs(r.coverage - 0.5)));
    }
    REQUIRE(report.aggregates.size() == 1);
    CHECK(report.aggregates[0].datasets_counted == 1);

    // aggregates are recomputable from the raw rows
    double mean_nql = 0.0;
    for (const auto& r : report.rows) mean_nql += r.nql;
    mean_nql /= 5.0;
    CHECK(report.aggregates[0].nql_mean == doctest::Approx(mean_nql).epsilon(1e-12));

    // a single (metric, tau) cell with one model yields no tests
    CHECK(report.friedman.empty());
}

TEST_CASE("two identical models produce identical aggregates") {
    TempDir tmp;
    BenchConfig cfg;
    cfg.dataset_paths = {make_synth_csv(tmp.path, "lin", 2)};
    cfg.dataset_names = {"lin"};
    cfg.models = {lqr_spec("lqr_a"), lqr_spec("lqr_b")};
    cfg.taus = {0.5, 0.9};
    const BenchmarkReport report = run_benchmark(cfg);
    REQUIRE(report.aggregates.size() == 4);
    CHECK(report.aggregates[0].nql_mean == report.aggregates[2].nql_mean);
    CHECK(report.aggregates[1].nql_mean == report.aggregates[3].nql_mean);
}

TEST_CASE("wilcoxon stage is gated on the friedman stage") {
    TempDir tmp;
    BenchConfig cfg;
    for (int i = 0; i < 3; ++i) {
        const std::string name = "d" + std::to_string(i);
        cfg.dataset_paths.push_back(make_synth_csv(tmp.path, name, 10 + i, i % 2 == 0));
        cfg.dataset_names.push_back(name);
    }
    cfg.models = {lqr_spec(), qdt_spec()};
    cfg.taus = {0.5};
    const BenchmarkReport report = run_benchmark(cfg);
    CHECK_FALSE(report.friedman.empty());
    for (const auto& w : report.wilcoxon) {
        bool gate_passed = false;
        for (const auto& f : report.friedman)
            if (f.metric == w.metric && f.tau == w.tau && f.significant) gate_passed = true;
        CHECK(gate_passed);
    }
}

TEST_CASE("external prediction files are scored like internal models") {
    TempDir tmp;
    const std::string data_path = make_synth_csv(tmp.path, "ext", 5);
    const Dataset ds = load_csv(data_path);

    BenchConfig cfg;
    cfg.dataset_paths = {data_path};
    cfg.dataset_names = {"ext"};
    cfg.taus = {0.5};
    cfg.k = 5;
    cfg.seed = 42;

    // perfect predictions keyed by original row index
    const fs::path pred_dir = tmp.path / "preds";
    fs::create_directories(pred_dir);
    const FoldPlan plan = kfold(ds.n(), cfg.k, detail::mix_seed(cfg.seed, 0, 0xf01d));
    for (int f = 0; f < cfg.k; ++f) {
        std::ofstream out(pred_dir / ("ext_tau0.5_fold" + std::to_string(f) + ".csv"));
        out << "row,prediction\n";
        for (std::size_t i = 0; i < ds.n(); ++i)
            if (plan.assignments[i] == f) out << i << ',' << ds.target[i] << '\n';
    }

    BenchModelSpec ext;
    ext.name = "oracle_preds";
    ext.kind = BenchModelSpec::Kind::External;
    ext.predictions_dir = pred_dir.string();
    cfg.models = {ext, lqr_spec()};

    const BenchmarkReport report = run_benchmark(cfg);
    int ext_rows = 0;
    for (const auto& r : report.rows) {
        if (r.model != "oracle_preds") continue;
        ++ext_rows;
        CHECK(r.ok);
        CHECK(r.nql == doctest::Approx(0.0)); // perfect predictions
        CHECK(r.parsimony == -1);             // black box: no parsimony
    }
    CHECK(ext_rows == 5);

    // missing prediction file yields a skip row, not a crash
    BenchModelSpec missing = ext;
    missing.name = "missing";
    missing.predictions_dir = (tmp.path / "nowhere").string();
    cfg.models = {missing};
    const BenchmarkReport rep2 = run_benchmark(cfg);
    for (const auto& r : rep2.rows) {
        CHECK_FALSE(r.ok);
        CHECK_FALSE(r.skip_reason.empty());
    }
}

TEST_CASE("rows CSV and summary text render") {
    TempDir tmp;
    BenchConfig cfg;
    cfg.dataset_paths = {make_synth_csv(tmp.path, "lin", 3)};
    cfg.dataset_names = {"lin"};
    cfg.models = {lqr_spec(), qdt_spec()};
    cfg.taus = {0.5};
    const BenchmarkReport report = run_benchmark(cfg);
    const std::string csv = report_rows_csv(report);
    CHECK(csv.rfind("model,dataset,fold,tau,ok,nql,ace,coverage,parsimony,wall_time_ms,"
                     "skip_reason\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 11); // header + 10 rows
    const std::string summary = report_summary_text(report);
    CHECK(summary.find("aggregates") != std::string::npos);
    CHECK(summary.find("lqr") != std::string::npos);
}

TEST_CASE("benchmark config JSON") {
    TempDir tmp;
    const std::string data_path = make_synth_csv(tmp.path, "lin", 4);
    const std::string cfg_path = (tmp.path / "bench.json").string();
    {
        std::ofstream out(cfg_path);
        out << R"({
  "datasets": ["lin.csv"],
  "taus": [0.5, 0.9],
  "k": 3,
  "seed": 9,
  "models": [
    {"name": "lqr", "type": "lqr"},
    {"name": "qdt", "type": "qdt", "min_samples_leaf": 5}
  ]
})";
    }
    const BenchConfig cfg = load_bench_config(cfg_path);
    CHECK(cfg.dataset_paths == std::vector<std::string>{(tmp.path / "lin.csv").string()});
    CHECK(cfg.dataset_names == std::vector<std::string>{"lin"});
    CHECK(cfg.k == 3);
    CHECK(cfg.seed == 9);
    REQUIRE(cfg.models.size() == 2);
    CHECK(cfg.models[1].min_samples_leaf == 5);

    {
        std::ofstream out(cfg_path);
        out << R"({"datasets": [], "models": []})";
    }
    CHECK_THROWS_AS(run_benchmark(load_bench_config(cfg_path)), ConfigError);
    {
        std::ofstream out(cfg_path);
        out << R"({"datasets": ["lin.csv"], "models": [{"name": "m", "type": "mystery"}]})";
    }
    CHECK_THROWS_AS(load_bench_config(cfg_path), ConfigError);
}
