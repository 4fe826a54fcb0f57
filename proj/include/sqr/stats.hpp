#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "sqr/data.hpp" // normal_cdf
#include "sqr/matrix.hpp"

namespace sqr {

/// Average ranks (1-based) with ties sharing their midrank.
inline std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = midrank;
        i = j + 1;
    }
    return ranks;
}

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    bool degenerate = false; // all-tied input, reported as p = 1
};

/// Friedman rank test over a datasets-by-models score matrix. Ties within a
/// row share average ranks; the usual tie-corrected chi-square statistic is
/// referred to the chi-square distribution with (models - 1) degrees of
/// freedom.
inline TestResult friedman_test(const Matrix& scores) {
    const std::size_t N = scores.rows();
    const std::size_t k = scores.cols();
    if (k < 2) throw std::invalid_argument("friedman_test: need at least 2 models");
    if (N < 1) throw std::invalid_argument("friedman_test: need at least 1 dataset");

    std::vector<double> rank_sums(k, 0.0);
    double tie_sum = 0.0; // sum of (t^3 - t) over tie groups of all rows
    std::vector<double> row(k);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < k; ++j) row[j] = scores(i, j);
        const auto ranks = average_ranks(row);
        for (std::size_t j = 0; j < k; ++j) rank_sums[j] += ranks[j];
        std::vector<double> sorted = row;
        std::sort(sorted.begin(), sorted.end());
        std::size_t a = 0;
        while (a < k) {
            std::size_t b = a;
            while (b + 1 < k && sorted[b + 1] == sorted[a]) ++b;
            const double t = static_cast<double>(b - a + 1);
            tie_sum += t * t * t - t;
            a = b + 1;
        }
    }

    double ssq = 0.0;
    for (std::size_t j = 0; j < k; ++j) ssq += rank_sums[j] * rank_sums[j];
    const double Nd = static_cast<double>(N);
    const double kd = static_cast<double>(k);
    const double raw = 12.0 / (Nd * kd * (kd + 1.0)) * ssq - 3.0 * Nd * (kd + 1.0);
    const double correction = 1.0 - tie_sum / (Nd * (kd * kd * kd - kd));

    TestResult res;
    if (correction <= 0.0) { // every row fully tied
        res.statistic = 0.0;
        res.p_value = 1.0;
        res.degenerate = true;
        return res;
    }
    res.statistic = raw / correction;
    const boost::math::chi_squared dist(kd - 1.0);
    res.p_value = boost::math::cdf(boost::math::complement(dist, std::max(res.statistic, 0.0)));
    return res;
}

/// Two-sided Wilcoxon signed-rank test. Zero differences are dropped; the
/// statistic is T = min(W+, W-). Exact p by enumeration of sign patterns for
/// n <= 20, normal approximation with tie correction beyond that.
inline TestResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("wilcoxon_signed_rank: length mismatch");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diffs.push_back(d);
    }
    TestResult res;
    if (diffs.empty()) {
        res.statistic = 0.0;
        res.p_value = 1.0;
        res.degenerate = true;
        return res;
    }
    const std::size_t n = diffs.size();
    if (n < 5)
        throw std::invalid_argument("wilcoxon_signed_rank: need >= 5 nonzero differences");

    std::vector<double> absd(n);
    for (std::size_t i = 0; i < n; ++i) absd[i] = std::abs(diffs[i]);
    const auto ranks = average_ranks(absd);

    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (diffs[i] > 0.0) w_plus += ranks[i];
    const double total = static_cast<double>(n) * (static_cast<double>(n) + 1.0) / 2.0;
    const double w_minus = total - w_plus;
    const double T = std::min(w_plus, w_minus);
    res.statistic = T;

    if (n <= 20) {
        // enumerate all 2^n sign assignments; distribution of W+ is symmetric
        // about total/2, so two-sided p = 2 * P(W+ <= T)
        const std::uint64_t patterns = 1ull << n;
        std::uint64_t count = 0;
        for (std::uint64_t mask = 0; mask < patterns; ++mask) {
            double w = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (mask & (1ull << i)) w += ranks[i];
            if (w <= T + 1e-12) ++count;
        }
        res.p_value = std::min(1.0, 2.0 * static_cast<double>(count) /
                                        static_cast<double>(patterns));
    } else {
        const double nd = static_cast<double>(n);
        double tie_sum = 0.0;
        std::vector<double> sorted = absd;
        std::sort(sorted.begin(), sorted.end());
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_sum += t * t * t - t;
            i = j + 1;
        }
        const double mean = nd * (nd + 1.0) / 4.0;
        const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_sum / 48.0;
        const double z = (T - mean) / std::sqrt(var);
        res.p_value = std::min(1.0, 2.0 * normal_cdf(z));
    }
    return res;
}

inline double bonferroni(double alpha, int m) {
    if (m < 1) throw std::invalid_argument("bonferroni: m must be >= 1");
    return alpha / static_cast<double>(m);
}

} // namespace sqr
