#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "sqr/data.hpp"
#include "sqr/loss.hpp"

namespace sqr {

// ---------------------------------------------------------------------------
// Linear quantile regression: minimize the mean pinball loss over affine
// predictors. Solved by IRLS with a shrinking smoothing floor, then polished
// by enumerating interpolating bases near the smoothed solution (the exact LP
// optimum interpolates d+1 points).

struct LinearQuantileModel {
    std::vector<double> coefficients; // one per feature
    double intercept = 0.0;
    double tau = 0.5;
    bool rank_deficient = false;

    int parsimony() const { return static_cast<int>(coefficients.size()) + 1; }

    std::vector<double> predict(const Matrix& X) const {
        if (X.cols() != coefficients.size())
            throw std::invalid_argument("LinearQuantileModel::predict: arity mismatch");
        std::vector<double> out(X.rows());
        for (std::size_t i = 0; i < X.rows(); ++i) {
            double v = intercept;
            for (std::size_t j = 0; j < X.cols(); ++j) v += coefficients[j] * X(i, j);
            out[i] = v;
        }
        return out;
    }
};

namespace detail {

inline double affine_pinball_objective(const Eigen::MatrixXd& A, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& theta, double tau) {
    const Eigen::VectorXd err = y - A * theta;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i)
        sum += std::max(tau * err[i], (tau - 1.0) * err[i]);
    return sum / static_cast<double>(err.size());
}

inline void enumerate_subsets(int m, int k, const std::function<void(const std::vector<int>&)>& fn) {
    std::vector<int> idx(k);
    std::iota(idx.begin(), idx.end(), 0);
    for (;;) {
        fn(idx);
        int i = k - 1;
        while (i >= 0 && idx[i] == m - k + i) --i;
        if (i < 0) return;
        ++idx[i];
        for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
    }
}

} // namespace detail

inline LinearQuantileModel fit_linear_quantile(const Dataset& ds, double tau) {
    const std::size_t n = ds.n();
    const std::size_t d = ds.d();
    if (n <= d) throw std::invalid_argument("fit_linear_quantile: need n > d");

    // drop zero-variance columns; their coefficients stay 0
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < d; ++j) {
        double lo = ds.features(0, j), hi = lo;
        for (std::size_t i = 1; i < n; ++i) {
            lo = std::min(lo, ds.features(i, j));
            hi = std::max(hi, ds.features(i, j));
        }
        if (hi > lo) active.push_back(j);
    }

    const std::size_t p = active.size() + 1; // active features plus intercept
    Eigen::MatrixXd A(n, p);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < active.size(); ++j) A(i, j) = ds.features(i, active[j]);
        A(i, p - 1) = 1.0;
        y[i] = ds.target[i];
    }

    LinearQuantileModel model;
    model.tau = tau;
    model.coefficients.assign(d, 0.0);
    model.rank_deficient = active.size() < d;

    // IRLS with smoothing continuation
    Eigen::VectorXd theta = (A.transpose() * A + 1e-9 * Eigen::MatrixXd::Identity(p, p))
                                .ldlt()
                                .solve(A.transpose() * y);
    const double yrange = y.maxCoeff() - y.minCoeff();
    double floor = std::max(1e-3 * yrange, 1e-12);
    for (int iter = 0; iter < 80; ++iter) {
        const Eigen::VectorXd err = y - A * theta;
        Eigen::VectorXd w(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double asym = err[i] >= 0.0 ? tau : 1.0 - tau;
            w[i] = asym / std::max(std::abs(err[i]), floor);
        }
        const Eigen::MatrixXd AtW = A.transpose() * w.asDiagonal();
        const Eigen::VectorXd next =
            (AtW * A + 1e-12 * Eigen::MatrixXd::Identity(p, p)).ldlt().solve(AtW * y);
        const double move = (next - theta).norm();
        theta = next;
        if (iter % 10 == 9) floor = std::max(floor * 0.1, 1e-12);
        if (move < 1e-14 && floor <= 1e-12) break;
    }

    // polish: the LP optimum interpolates p points; enumerate small bases among
    // the rows closest to the smoothed fit
    double best_obj = detail::affine_pinball_objective(A, y, theta, tau);
    Eigen::VectorXd best = theta;
    const std::size_t pool = std::min<std::size_t>(n, 3 * p + 4);
    if (p <= 6) {
        Eigen::VectorXd resid = (y - A * theta).cwiseAbs();
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + pool, order.end(),
                          [&](int a, int b) { return resid[a] < resid[b]; });
        order.resize(pool);
        detail::enumerate_subsets(static_cast<int>(pool), static_cast<int>(p),
                                  [&](const std::vector<int>& sel) {
            Eigen::MatrixXd S(p, p);
            Eigen::VectorXd t(p);
            for (std::size_t r = 0; r < p; ++r) {
                S.row(r) = A.row(order[sel[r]]);
                t[r] = y[order[sel[r]]];
            }
            const Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
            if (!lu.isInvertible()) return;
            const Eigen::VectorXd cand = lu.solve(t);
            const double obj = detail::affine_pinball_objective(A, y, cand, tau);
            // tie-break toward smaller intercept for determinism
            if (obj < best_obj - 1e-15 ||
                (std::abs(obj - best_obj) <= 1e-12 && cand[p - 1] < best[p - 1])) {
                best_obj = obj;
                best = cand;
            }
        });
    }

    for (std::size_t j = 0; j < active.size(); ++j) model.coefficients[active[j]] = best[j];
    model.intercept = best[p - 1];
    return model;
}

// ---------------------------------------------------------------------------
// Quantile decision tree: greedy top-down splits minimizing total child
// pinball loss; leaves predict the lower empirical tau-quantile of their rows.

struct QdtNode {
    bool leaf = true;
    double value = 0.0;   // leaf prediction
    int feature = -1;     // split feature
    double threshold = 0.0;
    int left = -1;
    int right = -1;
};

struct QuantileTreeModel {
    std::vector<QdtNode> nodes; // node 0 is the root
    double tau = 0.5;
    int min_samples_leaf = 1;
    std::size_t arity = 0;

    int parsimony() const { return static_cast<int>(nodes.size()); }

    double predict_row(const double* row) const {
        int i = 0;
        while (!nodes[i].leaf)
            i = row[nodes[i].feature] < nodes[i].threshold ? nodes[i].left : nodes[i].right;
        return nodes[i].value;
    }

    std::vector<double> predict(const Matrix& X) const {
        if (X.cols() != arity)
            throw std::invalid_argument("QuantileTreeModel::predict: arity mismatch");
        std::vector<double> out(X.rows());
        for (std::size_t i = 0; i < X.rows(); ++i) out[i] = predict_row(X.row_ptr(i));
        return out;
    }
};

namespace detail {

/// Lower empirical tau-quantile: the ceil(tau*m)-th order statistic.
inline double lower_quantile(std::vector<double> vals, double tau) {
    const std::size_t m = vals.size();
    std::size_t k = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(m)));
    k = std::clamp<std::size_t>(k, 1, m);
    std::nth_element(vals.begin(), vals.begin() + (k - 1), vals.end());
    return vals[k - 1];
}

inline double leaf_loss(const std::vector<double>& vals, double tau) {
    const double q = lower_quantile(vals, tau);
    double sum = 0.0;
    for (const double v : vals) sum += pinball(tau, v, q);
    return sum;
}

struct QdtBuilder {
    const Dataset& ds;
    double tau;
    std::size_t min_leaf;
    std::vector<QdtNode> nodes;

    int build(std::vector<std::size_t> rows) {
        std::vector<double> vals;
        vals.reserve(rows.size());
        for (const auto r : rows) vals.push_back(ds.target[r]);
        const double node_loss = leaf_loss(vals, tau);
        const double node_value = lower_quantile(vals, tau);

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_loss = node_loss;
        std::size_t best_split_pos = 0;
        std::vector<std::size_t> sorted_best;

        if (rows.size() >= 2 * min_leaf && node_loss > 0.0) {
            for (std::size_t j = 0; j < ds.d(); ++j) {
                std::vector<std::size_t> sorted = rows;
                std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
                    return ds.features(a, j) < ds.features(b, j);
                });
                std::vector<double> left_vals, right_vals;
                for (std::size_t s = min_leaf; s + min_leaf <= sorted.size(); ++s) {
                    const double xa = ds.features(sorted[s - 1], j);
                    const double xb = ds.features(sorted[s], j);
                    if (!(xb > xa)) continue; // no boundary between equal values
                    left_vals.clear();
                    right_vals.clear();
                    for (std::size_t i = 0; i < s; ++i) left_vals.push_back(ds.target[sorted[i]]);
                    for (std::size_t i = s; i < sorted.size(); ++i)
                        right_vals.push_back(ds.target[sorted[i]]);
                    const double loss = leaf_loss(left_vals, tau) + leaf_loss(right_vals, tau);
                    if (loss < best_loss - 1e-15) {
                        best_loss = loss;
                        best_feature = static_cast<int>(j);
                        best_threshold = 0.5 * (xa + xb);
                        best_split_pos = s;
                        sorted_best = sorted;
                    }
                }
            }
        }

        const int id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        if (best_feature < 0) {
            nodes[id].leaf = true;
            nodes[id].value = node_value;
            return id;
        }
        nodes[id].leaf = false;
        nodes[id].feature = best_feature;
        nodes[id].threshold = best_threshold;
        std::vector<std::size_t> left_rows(sorted_best.begin(),
                                           sorted_best.begin() + best_split_pos);
        std::vector<std::size_t> right_rows(sorted_best.begin() + best_split_pos,
                                            sorted_best.end());
        nodes[id].left = build(std::move(left_rows));
        nodes[id].right = build(std::move(right_rows));
        return id;
    }
};

} // namespace detail

inline QuantileTreeModel fit_quantile_tree(const Dataset& ds, double tau, int min_samples_leaf) {
    if (min_samples_leaf < 1)
        throw std::invalid_argument("fit_quantile_tree: min_samples_leaf must be >= 1");
    if (ds.n() < 2 * static_cast<std::size_t>(min_samples_leaf))
        throw std::invalid_argument("fit_quantile_tree: need n >= 2*min_samples_leaf");
    detail::QdtBuilder builder{ds, tau, static_cast<std::size_t>(min_samples_leaf), {}};
    std::vector<std::size_t> rows(ds.n());
    std::iota(rows.begin(), rows.end(), 0);
    builder.build(std::move(rows));
    QuantileTreeModel model;
    model.nodes = std::move(builder.nodes);
    model.tau = tau;
    model.min_samples_leaf = min_samples_leaf;
    model.arity = ds.d();
    return model;
}

} // namespace sqr
