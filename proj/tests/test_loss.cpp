#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "sqr/loss.hpp"

using namespace sqr;

TEST_CASE("pinball asymmetry and basics") {
    // underestimating at tau=.9 costs nine times more than overestimating
    CHECK(pinball(0.9, 1.0, 0.0) == doctest::Approx(0.9));
    CHECK(pinball(0.9, 0.0, 1.0) == doctest::Approx(0.1));
    CHECK(pinball(0.9, 1.0, 0.0) / pinball(0.9, 0.0, 1.0) == doctest::Approx(9.0));

    CHECK(pinball(0.3, 5.0, 5.0) == 0.0);
    CHECK(pinball(0.5, 2.0, 0.0) == doctest::Approx(1.0));
    CHECK(pinball(0.5, 0.0, 2.0) == doctest::Approx(1.0));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ut(0.01, 0.99), uy(-100.0, 100.0);
    for (int t = 0; t < 1000; ++t) {
        const double y = uy(rng);
        CHECK(pinball(ut(rng), y, y) == 0.0);
    }
}

TEST_CASE("pinball sentinel and symmetry") {
    CHECK(pinball(0.5, std::nan(""), 0.0) == worst_loss);
    CHECK(pinball(0.5, 0.0, std::numeric_limits<double>::infinity()) == worst_loss);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ut(0.01, 0.99), uy(-10.0, 10.0);
    for (int t = 0; t < 1000; ++t) {
        const double tau = ut(rng), y = uy(rng), yhat = uy(rng);
        // reflection symmetry
        CHECK(pinball(tau, y, yhat) == doctest::Approx(pinball(1.0 - tau, -y, -yhat)));
        // convexity in yhat at the midpoint
        const double y2 = uy(rng);
        const double mid = 0.5 * (yhat + y2);
        CHECK(pinball(tau, y, mid) <=
              0.5 * pinball(tau, y, yhat) + 0.5 * pinball(tau, y, y2) + 1e-12);
    }
}

TEST_CASE("mean pinball reproduces the synthetic error constants") {
    // 50 unit underestimates + 50 unit overestimates at the median
    std::vector<double> y, yhat;
    for (int i = 0; i < 50; ++i) { y.push_back(1.0); yhat.push_back(0.0); }
    for (int i = 0; i < 50; ++i) { y.push_back(0.0); yhat.push_back(1.0); }
    CHECK(mean_pinball(0.5, y, yhat) == doctest::Approx(0.5));

    // 10 unit underestimates + 90 unit overestimates at tau=.9
    y.clear(); yhat.clear();
    for (int i = 0; i < 10; ++i) { y.push_back(1.0); yhat.push_back(0.0); }
    for (int i = 0; i < 90; ++i) { y.push_back(0.0); yhat.push_back(1.0); }
    const double at_90 = mean_pinball(0.9, y, yhat);
    CHECK(at_90 == doctest::Approx(0.18));
    CHECK(at_90 < 0.5); // matched-rate errors cost less at extreme quantiles

    CHECK(mean_pinball(0.7, y, y) == 0.0);
    CHECK_THROWS_AS(mean_pinball(0.5, std::vector<double>{1.0}, std::vector<double>{}),
                    std::invalid_argument);
}

TEST_CASE("normalized quantile loss") {
    const std::vector<double> y{0.0, 1.0, 2.0, 3.0};
    const std::vector<double> zero(4, 0.0);
    CHECK(mean_pinball(0.5, y, zero) == doctest::Approx(0.75));
    CHECK(normalized_quantile_loss(0.5, y, zero) == doctest::Approx(0.25));
    CHECK(normalized_quantile_loss(0.5, y, y) == 0.0);

    const std::vector<double> flat(4, 2.0);
    CHECK_THROWS_AS(normalized_quantile_loss(0.5, flat, zero), DegenerateRangeError);

    // scale invariance: scaling y and yhat by c leaves nql unchanged
    std::vector<double> yc, pc;
    for (const double v : y) yc.push_back(7.0 * v);
    for (const double v : zero) pc.push_back(7.0 * v);
    CHECK(mean_pinball(0.5, yc, pc) == doctest::Approx(7.0 * 0.75));
    CHECK(normalized_quantile_loss(0.5, yc, pc) ==
          doctest::Approx(normalized_quantile_loss(0.5, y, zero)));
}

TEST_CASE("coverage and ace") {
    const std::vector<double> y{1.0, 2.0, 3.0, 4.0};
    const std::vector<double> yhat{2.0, 2.0, 2.0, 5.0};
    CHECK(empirical_coverage(y, yhat) == doctest::Approx(0.75));

    const std::vector<double> high(4, 4.0); // elementwise >= max(y): ties covered
    CHECK(empirical_coverage(y, high) == 1.0);

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<double> a(1000), b(1000);
    for (int i = 0; i < 1000; ++i) { a[i] = u(rng); b[i] = u(rng); }
    std::size_t covered = 0;
    for (int i = 0; i < 1000; ++i) covered += a[i] <= b[i];
    CHECK(empirical_coverage(a, b) == static_cast<double>(covered) / 1000.0);

    CHECK(absolute_coverage_error(0.9, 0.75) == doctest::Approx(0.15));
    CHECK(absolute_coverage_error(0.42, 0.42) == 0.0);
    CHECK(absolute_coverage_error(0.9, 0.91) == doctest::Approx(0.01));
}

TEST_CASE("quantile level validation") {
    CHECK_THROWS_AS(QuantileLevel(0.0), std::invalid_argument);
    CHECK_THROWS_AS(QuantileLevel(1.0), std::invalid_argument);
    CHECK(double(QuantileLevel(0.5)) == 0.5);
}
