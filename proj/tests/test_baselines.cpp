#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "sqr/baselines.hpp"
#include "helpers.hpp"

using namespace sqr;

namespace {

Dataset make_dataset(const std::vector<std::vector<double>>& X, const std::vector<double>& y) {
    Dataset ds;
    ds.features = Matrix(X.size(), X[0].size());
    ds.target = y;
    for (std::size_t j = 0; j < X[0].size(); ++j) ds.names.push_back("x" + std::to_string(j));
    ds.target_name = "y";
    for (std::size_t i = 0; i < X.size(); ++i)
        for (std::size_t j = 0; j < X[0].size(); ++j) ds.features(i, j) = X[i][j];
    return ds;
}

double model_objective(const LinearQuantileModel& m, const Dataset& ds) {
    const auto preds = m.predict(ds.features);
    return mean_pinball(m.tau, ds.target, preds);
}

} // namespace

TEST_CASE("LQR on a constant feature reduces to the empirical quantile") {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 1; i <= 10; ++i) {
        X.push_back({5.0}); // zero-variance feature
        y.push_back(static_cast<double>(i));
    }
    const Dataset ds = make_dataset(X, y);
    const LinearQuantileModel m = fit_linear_quantile(ds, 0.9);
    CHECK(m.rank_deficient);
    CHECK(m.coefficients[0] == 0.0);
    CHECK(m.intercept == doctest::Approx(9.0).epsilon(1e-9)); // lower 0.9-quantile of 1..10
    CHECK(m.parsimony() == 2);
}

TEST_CASE("LQR interpolates noise-free lines exactly") {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 40; ++i) {
        const double x = u(rng);
        X.push_back({x});
        y.push_back(2.0 + 3.0 * x);
    }
    const Dataset ds = make_dataset(X, y);
    for (const double tau : {0.2, 0.5, 0.9}) {
        const LinearQuantileModel m = fit_linear_quantile(ds, tau);
        CHECK(m.coefficients[0] == doctest::Approx(3.0).epsilon(1e-6));
        CHECK(m.intercept == doctest::Approx(2.0).epsilon(1e-6));
        CHECK(model_objective(m, ds) < 1e-9);
    }
}

TEST_CASE("LQR objective matches the exhaustive LP oracle") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 5; ++t) {
        const Dataset ds = oracle::random_dataset(50, 2, rng);
        for (const double tau : {0.5, 0.9}) {
            const LinearQuantileModel m = fit_linear_quantile(ds, tau);
            const double got = model_objective(m, ds);
            const double best = oracle::lp_affine_optimum(ds, tau);
            CHECK(got <= best + 1e-6);
            CHECK(got >= best - 1e-12); // oracle is exact; cannot be beaten
        }
    }
}

TEST_CASE("LQR training coverage stays near tau") {
    std::mt19937_64 rng(13);
    const Dataset ds = oracle::random_dataset(200, 2, rng);
    const LinearQuantileModel m = fit_linear_quantile(ds, 0.8);
    const double cov = empirical_coverage(ds.target, m.predict(ds.features));
    CHECK(std::abs(cov - 0.8) <= 3.0 / 200.0 + 1e-9); // (d+1)/n slack
}

TEST_CASE("LQR input validation and prediction") {
    std::mt19937_64 rng(14);
    const Dataset tiny = oracle::random_dataset(2, 2, rng);
    CHECK_THROWS_AS(fit_linear_quantile(tiny, 0.5), std::invalid_argument);

    LinearQuantileModel m;
    m.coefficients = {0.0, 0.0};
    m.intercept = 4.5;
    Matrix X(3, 2);
    const auto preds = m.predict(X);
    CHECK(preds == std::vector<double>{4.5, 4.5, 4.5});
    Matrix bad(3, 1);
    CHECK_THROWS_AS(m.predict(bad), std::invalid_argument);
}

TEST_CASE("QDT single forced leaf predicts the lower order statistic") {
    // a constant feature admits no split boundary, forcing a single leaf
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 1; i <= 10; ++i) {
        X.push_back({1.0});
        y.push_back(static_cast<double>(i));
    }
    const Dataset ds = make_dataset(X, y);
    const QuantileTreeModel m = fit_quantile_tree(ds, 0.9, 1);
    REQUIRE(m.nodes.size() == 1);
    CHECK(m.nodes[0].leaf);
    CHECK(m.nodes[0].value == 9.0); // ceil(0.9*10) = 9th order statistic
    CHECK(m.parsimony() == 1);

    // tau=.5 on an even count gives the lower median
    const QuantileTreeModel med = fit_quantile_tree(ds, 0.5, 1);
    CHECK(med.nodes[0].value == 5.0);
}

TEST_CASE("QDT recovers a two-level piecewise-constant split at the midpoint") {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 20; ++i) {
        const double x = i / 19.0;
        X.push_back({x});
        y.push_back(x < 0.5 ? 1.0 : 5.0);
    }
    const Dataset ds = make_dataset(X, y);
    const QuantileTreeModel m = fit_quantile_tree(ds, 0.5, 1);
    REQUIRE(m.nodes.size() == 3);
    CHECK_FALSE(m.nodes[0].leaf);
    // straddling points are 9/19 and 10/19; threshold is their midpoint
    CHECK(m.nodes[0].threshold == doctest::Approx(0.5 * (9.0 / 19.0 + 10.0 / 19.0)));
    // exhaustive check: no other split point beats this one
    double best = std::numeric_limits<double>::infinity();
    double best_thresh = 0.0;
    for (int s = 1; s < 20; ++s) {
        std::vector<double> l(y.begin(), y.begin() + s), r(y.begin() + s, y.end());
        const auto loss_of = [&](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            const double q = v[(v.size() + 1) / 2 - 1];
            double sum = 0.0;
            for (const double t : v) sum += oracle::pinball(0.5, t - q);
            return sum;
        };
        const double loss = loss_of(l) + loss_of(r);
        if (loss < best) {
            best = loss;
            best_thresh = 0.5 * (X[s - 1][0] + X[s][0]);
        }
    }
    CHECK(m.nodes[0].threshold == doctest::Approx(best_thresh));
}

TEST_CASE("QDT routing sends boundary values right") {
    QuantileTreeModel m;
    m.arity = 1;
    m.nodes.resize(3);
    m.nodes[0] = {false, 0.0, 0, 2.0, 1, 2};
    m.nodes[1] = {true, -1.0, -1, 0.0, -1, -1};
    m.nodes[2] = {true, +1.0, -1, 0.0, -1, -1};
    Matrix X(3, 1);
    X(0, 0) = 1.9;
    X(1, 0) = 2.0; // boundary: goes right
    X(2, 0) = 2.1;
    CHECK(m.predict(X) == std::vector<double>{-1.0, 1.0, 1.0});
}

TEST_CASE("QDT training loss never increases with depth") {
    std::mt19937_64 rng(15);
    const Dataset ds = oracle::random_dataset(120, 2, rng);
    double prev = std::numeric_limits<double>::infinity();
    for (const int leaf : {60, 30, 8, 2, 1}) {
        const QuantileTreeModel m = fit_quantile_tree(ds, 0.7, leaf);
        const double loss = mean_pinball(0.7, ds.target, m.predict(ds.features));
        CHECK(loss <= prev + 1e-12);
        prev = loss;
        CHECK(m.parsimony() == static_cast<int>(m.nodes.size()));
    }
    CHECK_THROWS_AS(fit_quantile_tree(ds, 0.5, 0), std::invalid_argument);
    CHECK_THROWS_AS(fit_quantile_tree(ds, 0.5, 61), std::invalid_argument); // 2*61 > 120
}
