#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sqr/data.hpp"
#include "sqr/expr.hpp"
#include "sqr/loss.hpp"

namespace sqr {

// ---------------------------------------------------------------------------
// Local refinement of the scalar constants of a fixed expression structure
// against the pinball loss. The kink at zero residual is Huber-smoothed with a
// band of 1e-6 times the target range during descent; reported losses always
// use the exact pinball.

namespace detail {

/// Smoothed ReLU: quadratic inside |u| <= delta, exact outside. C1 everywhere.
inline double smooth_relu(double u, double delta) {
    if (u <= -delta) return 0.0;
    if (u >= delta) return u;
    const double t = u + delta;
    return t * t / (4.0 * delta);
}

inline double smoothed_pinball(double tau, double err, double delta) {
    return tau * smooth_relu(err, delta) + (1.0 - tau) * smooth_relu(-err, delta);
}

inline double target_range(const std::vector<double>& y) {
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    return *hi - *lo;
}

} // namespace detail

/// Mean Huber-smoothed pinball loss of `expr` with the given constant vector.
inline double smoothed_pinball_loss(const Expr& expr, const std::vector<double>& constants,
                                    const Dataset& ds, double tau, double delta) {
    Expr e = expr;
    set_constant_values(e, constants);
    bool finite = false;
    const std::vector<double> yhat = evaluate(e, ds.features, &finite);
    if (!finite) return worst_loss;
    double sum = 0.0;
    for (std::size_t i = 0; i < ds.n(); ++i)
        sum += detail::smoothed_pinball(tau, ds.target[i] - yhat[i], delta);
    return sum / static_cast<double>(ds.n());
}

/// Gradient of the smoothed objective with respect to the constants, by
/// central finite differences with step h.
inline std::vector<double> smoothed_pinball_gradient(const Expr& expr,
                                                     const std::vector<double>& constants,
                                                     const Dataset& ds, double tau, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("smoothed_pinball_gradient: h must be > 0");
    const double delta = 1e-6 * std::max(detail::target_range(ds.target), 1e-12);
    std::vector<double> grad(constants.size());
    std::vector<double> probe = constants;
    for (std::size_t i = 0; i < constants.size(); ++i) {
        probe[i] = constants[i] + h;
        const double fp = smoothed_pinball_loss(expr, probe, ds, tau, delta);
        probe[i] = constants[i] - h;
        const double fm = smoothed_pinball_loss(expr, probe, ds, tau, delta);
        probe[i] = constants[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

namespace detail {

/// Dense BFGS with Armijo backtracking. Stops on gradient norm < 1e-8 or the
/// iteration cap. Returns the best point seen.
template <typename F, typename G>
inline Eigen::VectorXd bfgs_minimize(F&& f, G&& grad, Eigen::VectorXd x, int max_iters) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    double fx = f(x);
    Eigen::VectorXd g = grad(x);
    Eigen::VectorXd best_x = x;
    double best_f = fx;
    for (int iter = 0; iter < max_iters; ++iter) {
        if (!std::isfinite(fx) || !g.allFinite()) break;
        if (g.norm() < 1e-8) break;
        Eigen::VectorXd dir = -(H * g);
        double slope = g.dot(dir);
        if (slope >= 0.0) { // reset on loss of descent direction
            H.setIdentity();
            dir = -g;
            slope = -g.squaredNorm();
        }
        double step = 1.0;
        double fnew = fx;
        Eigen::VectorXd xnew = x;
        bool advanced = false;
        for (int ls = 0; ls < 30; ++ls) {
            xnew = x + step * dir;
            fnew = f(xnew);
            if (std::isfinite(fnew) && fnew <= fx + 1e-4 * step * slope) {
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if (!advanced) break;
        Eigen::VectorXd gnew = grad(xnew);
        const Eigen::VectorXd s = xnew - x;
        const Eigen::VectorXd yv = gnew - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            H = (I - rho * s * yv.transpose()) * H * (I - rho * yv * s.transpose()) +
                rho * s * s.transpose();
        }
        x = std::move(xnew);
        fx = fnew;
        g = std::move(gnew);
        if (fx < best_f) {
            best_f = fx;
            best_x = x;
        }
    }
    return best_x;
}

} // namespace detail

/// Exact mean pinball loss of an expression on a dataset.
inline double exact_pinball_loss(const Expr& expr, const Dataset& ds, double tau) {
    bool finite = false;
    const std::vector<double> yhat = evaluate(expr, ds.features, &finite);
    if (!finite) return worst_loss;
    return mean_pinball(tau, ds.target, yhat);
}

/// Refines the constants of `expr` by quasi-Newton descent on the smoothed
/// pinball loss, trying the original point plus `nrestarts` multiplicatively
/// perturbed points. Structure is untouched and the returned expression never
/// has a worse exact training loss than the input.
inline Expr optimize_constants(const Expr& expr, const Dataset& ds, double tau, int iterations,
                               int nrestarts, std::mt19937_64& rng,
                               double perturbation_factor = 0.076) {
    std::vector<double> initial = constant_values(expr);
    if (initial.empty()) return expr;
    if (ds.n() == 0) throw std::invalid_argument("optimize_constants: empty dataset");

    const double delta = 1e-6 * std::max(detail::target_range(ds.target), 1e-12);
    const auto objective = [&](const Eigen::VectorXd& x) {
        std::vector<double> c(x.data(), x.data() + x.size());
        return smoothed_pinball_loss(expr, c, ds, tau, delta);
    };
    const auto gradient = [&](const Eigen::VectorXd& x) {
        std::vector<double> c(x.data(), x.data() + x.size());
        Eigen::VectorXd g(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double h = 1e-6 * (1.0 + std::abs(x[i]));
            const double keep = c[i];
            c[i] = keep + h;
            const double fp = smoothed_pinball_loss(expr, c, ds, tau, delta);
            c[i] = keep - h;
            const double fm = smoothed_pinball_loss(expr, c, ds, tau, delta);
            c[i] = keep;
            g[i] = (fp - fm) / (2.0 * h);
        }
        return g;
    };

    const double input_loss = exact_pinball_loss(expr, ds, tau);
    std::vector<double> best = initial;
    double best_loss = input_loss;

    std::normal_distribution<double> noise(0.0, perturbation_factor);
    for (int attempt = 0; attempt <= nrestarts; ++attempt) {
        Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(initial.data(),
                                                               static_cast<Eigen::Index>(initial.size()));
        if (attempt > 0)
            for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] *= 1.0 + noise(rng);
        const Eigen::VectorXd sol = detail::bfgs_minimize(objective, gradient, x0, iterations);
        std::vector<double> cand(sol.data(), sol.data() + sol.size());
        Expr e = expr;
        set_constant_values(e, cand);
        const double loss = exact_pinball_loss(e, ds, tau);
        if (loss < best_loss) {
            best_loss = loss;
            best = std::move(cand);
        }
    }

    Expr out = expr;
    set_constant_values(out, best);
    return out;
}

} // namespace sqr
