#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sqr/matrix.hpp"

namespace sqr {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Immutable-after-load tabular dataset: feature matrix plus target vector.
struct Dataset {
    Matrix features;                 // n x d
    std::vector<double> target;      // n
    std::vector<std::string> names;  // d feature names
    std::string target_name;

    std::size_t n() const { return target.size(); }
    std::size_t d() const { return features.cols(); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_cell(const std::string& raw, std::size_t row, std::size_t col) {
    const std::string s = trim(raw);
    if (s.empty())
        throw DataError("missing value in row " + std::to_string(row) + ", column " +
                        std::to_string(col));
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size())
        throw DataError("non-numeric value '" + s + "' in row " + std::to_string(row) +
                        ", column " + std::to_string(col));
    if (!std::isfinite(v))
        throw DataError("non-finite value in row " + std::to_string(row) + ", column " +
                        std::to_string(col));
    return v;
}

} // namespace detail

/// Loads a comma-separated file with a header row. The target is the last
/// column unless `target_name` selects another one. Rows containing missing
/// or non-numeric cells are rejected with a row-indexed error.
inline Dataset load_csv(const std::string& path, const std::string& target_name = "") {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file: " + path);
    auto header = detail::split_csv_line(line);
    for (auto& h : header) h = detail::trim(h);
    if (header.empty()) throw DataError("missing header row in " + path);

    std::size_t target_col = header.size() - 1;
    if (!target_name.empty()) {
        const auto it = std::find(header.begin(), header.end(), target_name);
        if (it == header.end())
            throw DataError("target column '" + target_name + "' not found in " + path);
        target_col = static_cast<std::size_t>(it - header.begin());
    }
    if (header.size() < 2) throw DataError("need at least one feature column in " + path);

    Dataset ds;
    ds.target_name = header[target_col];
    for (std::size_t j = 0; j < header.size(); ++j)
        if (j != target_col) ds.names.push_back(header[j]);

    std::vector<double> values;
    std::size_t n = 0;
    for (std::size_t row = 1; std::getline(in, line); ++row) {
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const double v = detail::parse_cell(cells[j], row, j);
            if (j == target_col) ds.target.push_back(v);
            else values.push_back(v);
        }
        ++n;
    }
    if (n < 1) throw DataError("dataset must contain at least 1 data row: " + path);
    ds.features = Matrix(n, header.size() - 1, std::move(values));
    return ds;
}

/// Writes a dataset with full double precision so load_csv round-trips
/// bit-exactly.
inline void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (std::size_t j = 0; j < ds.d(); ++j) out << ds.names[j] << ',';
    out << ds.target_name << '\n';
    char buf[40];
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < ds.d(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.features(i, j));
            out << buf << ',';
        }
        std::snprintf(buf, sizeof(buf), "%.17g", ds.target[i]);
        out << buf << '\n';
    }
}

// ---------------------------------------------------------------------------
// Cross-validation folds and subsampling.

struct FoldPlan {
    int k = 0;
    std::vector<int> assignments; // per-row fold index
    std::uint64_t seed = 0;
};

inline FoldPlan kfold(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
    if (static_cast<std::size_t>(k) > n) throw std::invalid_argument("kfold: k exceeds row count");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.assignments.resize(n);
    for (std::size_t p = 0; p < n; ++p) plan.assignments[order[p]] = static_cast<int>(p % k);
    return plan;
}

inline Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.names = ds.names;
    out.target_name = ds.target_name;
    out.features = Matrix(rows.size(), ds.d());
    out.target.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < ds.d(); ++j) out.features(i, j) = ds.features(rows[i], j);
        out.target.push_back(ds.target[rows[i]]);
    }
    return out;
}

inline std::pair<Dataset, Dataset> split_fold(const Dataset& ds, const FoldPlan& plan,
                                              int test_fold) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < ds.n(); ++i)
        (plan.assignments[i] == test_fold ? test : train).push_back(i);
    return {take_rows(ds, train), take_rows(ds, test)};
}

/// Uniform subsample without replacement; identity (including row order) when
/// the dataset already fits the budget.
inline Dataset subsample(const Dataset& ds, std::size_t max_n, std::uint64_t seed) {
    if (max_n < 1) throw std::invalid_argument("subsample: max_n must be >= 1");
    if (ds.n() <= max_n) return ds;
    std::vector<std::size_t> order(ds.n());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(max_n);
    std::sort(order.begin(), order.end());
    return take_rows(ds, order);
}

// ---------------------------------------------------------------------------
// Synthetic generators with closed-form conditional quantiles.

/// Inverse standard normal CDF (Acklam's rational approximation, refined with
/// one Halley step); accurate to full double precision for our purposes.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    // one Halley refinement against the exact CDF
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Synthetic dataset plus the closed-form conditional quantile function for
/// ground-truth evaluation.
struct SynthResult {
    Dataset data;
    // q_tau(x) for the single feature value x
    std::function<double(double, double)> quantile; // (tau, x) -> q
};

/// x ~ U(0,1); y = beta*x + x*sigma*eps with standard normal eps. The noise
/// scale grows with x, so quantile curves fan out from the origin.
inline SynthResult synth_heteroskedastic(std::size_t n, double beta, double sigma,
                                         std::uint64_t seed) {
    if (n < 10) throw std::invalid_argument("synth_heteroskedastic: n must be >= 10");
    if (!(sigma > 0.0)) throw std::invalid_argument("synth_heteroskedastic: sigma must be > 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, 1.0);
    std::normal_distribution<double> eps(0.0, 1.0);
    SynthResult res;
    res.data.features = Matrix(n, 1);
    res.data.target.resize(n);
    res.data.names = {"x0"};
    res.data.target_name = "y";
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ux(rng);
        res.data.features(i, 0) = x;
        res.data.target[i] = beta * x + x * sigma * eps(rng);
    }
    res.quantile = [beta, sigma](double tau, double x) {
        return beta * x + x * sigma * normal_quantile(tau);
    };
    return res;
}

/// y = intercept + slope*x + sigma*eps; parallel quantile lines.
inline SynthResult synth_linear(std::size_t n, double intercept, double slope, double sigma,
                                std::uint64_t seed) {
    if (n < 10) throw std::invalid_argument("synth_linear: n must be >= 10");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, 1.0);
    std::normal_distribution<double> eps(0.0, 1.0);
    SynthResult res;
    res.data.features = Matrix(n, 1);
    res.data.target.resize(n);
    res.data.names = {"x0"};
    res.data.target_name = "y";
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ux(rng);
        res.data.features(i, 0) = x;
        res.data.target[i] = intercept + slope * x + sigma * eps(rng);
    }
    res.quantile = [intercept, slope, sigma](double tau, double x) {
        return intercept + slope * x + sigma * normal_quantile(tau);
    };
    return res;
}

/// y = amp*sin(freq*x) + sigma*eps on x in (0, 2*pi); strongly nonlinear, so
/// affine predictors cannot track any quantile curve.
inline SynthResult synth_trig(std::size_t n, double amp, double freq, double sigma,
                              std::uint64_t seed) {
    if (n < 10) throw std::invalid_argument("synth_trig: n must be >= 10");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0.0, 2.0 * M_PI);
    std::normal_distribution<double> eps(0.0, 1.0);
    SynthResult res;
    res.data.features = Matrix(n, 1);
    res.data.target.resize(n);
    res.data.names = {"x0"};
    res.data.target_name = "y";
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ux(rng);
        res.data.features(i, 0) = x;
        res.data.target[i] = amp * std::sin(freq * x) + sigma * eps(rng);
    }
    res.quantile = [amp, freq, sigma](double tau, double x) {
        return amp * std::sin(freq * x) + sigma * normal_quantile(tau);
    };
    return res;
}

} // namespace sqr
