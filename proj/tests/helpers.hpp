#pragma once

// Independent oracles shared by the test suites. These deliberately avoid the
// library's own implementations: parsimony is recounted from scratch, the
// linear quantile optimum is found by exhaustive basis enumeration (the LP
// optimum interpolates p points), and the Pareto front is recomputed by a
// quadratic scan.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "sqr/data.hpp"
#include "sqr/expr.hpp"

namespace oracle {

/// Token-count parsimony oracle: walks the tree with its own weight lookup.
inline int parsimony(const sqr::Expr& e) {
    int w;
    switch (e.kind) {
    case sqr::TokenKind::Feature:
    case sqr::TokenKind::Constant:
        w = 1;
        break;
    default:
        switch (e.op) {
        case sqr::Op::Add:
        case sqr::Op::Sub:
        case sqr::Op::Mul: w = 1; break;
        case sqr::Op::Div:
        case sqr::Op::Square: w = 2; break;
        case sqr::Op::Sin:
        case sqr::Op::Cos: w = 3; break;
        default: w = 4; break; // exp, log, sqrt
        }
        break;
    }
    for (const auto& c : e.children) w += oracle::parsimony(c); // qualified: avoid ADL to sqr::
    return w;
}

inline int token_count(const sqr::Expr& e) {
    int n = 1;
    for (const auto& c : e.children) n += token_count(c);
    return n;
}

inline double pinball(double tau, double err) {
    return std::max(tau * err, (tau - 1.0) * err);
}

/// Exact affine quantile regression by exhaustive enumeration of interpolating
/// bases: some optimum of the pinball LP passes through p = d+1 sample points.
/// Returns the minimal mean pinball objective.
inline double lp_affine_optimum(const sqr::Matrix& X, const std::vector<double>& y, double tau,
                                std::vector<double>* best_theta = nullptr) {
    const std::size_t n = y.size();
    const std::size_t d = X.cols();
    const std::size_t p = d + 1;
    std::vector<int> idx(p);
    double best = std::numeric_limits<double>::infinity();

    const auto objective = [&](const std::vector<double>& theta) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double pred = theta[d];
            for (std::size_t j = 0; j < d; ++j) pred += theta[j] * X(i, j);
            sum += pinball(tau, y[i] - pred);
        }
        return sum / static_cast<double>(n);
    };

    // Gaussian elimination on the p x p interpolation system
    const auto try_basis = [&](const std::vector<int>& rows) {
        std::vector<std::vector<double>> A(p, std::vector<double>(p + 1));
        for (std::size_t r = 0; r < p; ++r) {
            for (std::size_t j = 0; j < d; ++j) A[r][j] = X(rows[r], j);
            A[r][d] = 1.0;
            A[r][p] = y[rows[r]];
        }
        for (std::size_t col = 0; col < p; ++col) {
            std::size_t piv = col;
            for (std::size_t r = col + 1; r < p; ++r)
                if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
            if (std::abs(A[piv][col]) < 1e-10) return;
            std::swap(A[col], A[piv]);
            for (std::size_t r = 0; r < p; ++r) {
                if (r == col) continue;
                const double f = A[r][col] / A[col][col];
                for (std::size_t c = col; c <= p; ++c) A[r][c] -= f * A[col][c];
            }
        }
        std::vector<double> theta(p);
        for (std::size_t r = 0; r < p; ++r) theta[r] = A[r][p] / A[r][r];
        const double obj = objective(theta);
        if (obj < best) {
            best = obj;
            if (best_theta) *best_theta = theta;
        }
    };

    // enumerate all size-p subsets of {0..n-1}
    std::iota(idx.begin(), idx.end(), 0);
    for (;;) {
        try_basis(idx);
        int i = static_cast<int>(p) - 1;
        while (i >= 0 && idx[i] == static_cast<int>(n - p) + i) --i;
        if (i < 0) break;
        ++idx[i];
        for (std::size_t j = i + 1; j < p; ++j) idx[j] = idx[j - 1] + 1;
    }
    return best;
}

inline double lp_affine_optimum(const sqr::Dataset& ds, double tau,
                                std::vector<double>* best_theta = nullptr) {
    return lp_affine_optimum(ds.features, ds.target, tau, best_theta);
}

/// Quadratic brute-force non-dominated set over (complexity, loss) pairs:
/// keeps the minimum loss per complexity, then drops anything with a
/// simpler-or-equal strictly-better-or-equal competitor at lower complexity.
inline std::map<int, double> brute_force_front(const std::vector<std::pair<int, double>>& pts) {
    std::map<int, double> best_per_c;
    for (const auto& [c, l] : pts) {
        const auto it = best_per_c.find(c);
        if (it == best_per_c.end() || l < it->second) best_per_c[c] = l;
    }
    std::map<int, double> front;
    for (const auto& [c, l] : best_per_c) {
        bool dominated = false;
        for (const auto& [c2, l2] : best_per_c)
            if (c2 < c && l2 <= l) { dominated = true; break; }
        if (!dominated) front[c] = l;
    }
    return front;
}

/// Builds a small random regression dataset (all values finite).
inline sqr::Dataset random_dataset(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    sqr::Dataset ds;
    ds.features = sqr::Matrix(n, d);
    ds.target.resize(n);
    for (std::size_t j = 0; j < d; ++j) ds.names.push_back("x" + std::to_string(j));
    ds.target_name = "y";
    std::uniform_real_distribution<double> ux(-2.0, 2.0);
    std::normal_distribution<double> uy(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = ux(rng);
        ds.target[i] = uy(rng) + 0.5 * ds.features(i, 0);
    }
    return ds;
}

} // namespace oracle
