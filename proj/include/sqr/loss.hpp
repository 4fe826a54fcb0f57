#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

namespace sqr {

/// Quantile level in the open interval (0,1).
struct QuantileLevel {
    double tau;
    explicit QuantileLevel(double t) : tau(t) {
        if (!(t > 0.0 && t < 1.0))
            throw std::invalid_argument("quantile level must lie in (0,1)");
    }
    operator double() const { return tau; }
};

inline constexpr double worst_loss = std::numeric_limits<double>::infinity();

/// Pinball loss max(tau*(y-yhat), (tau-1)*(y-yhat)). Nonnegative, zero iff
/// y == yhat. Non-finite inputs map to the worst-case sentinel.
inline double pinball(double tau, double y, double yhat) {
    if (!std::isfinite(y) || !std::isfinite(yhat)) return worst_loss;
    const double err = y - yhat;
    return std::max(tau * err, (tau - 1.0) * err);
}

inline double mean_pinball(double tau, std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw std::invalid_argument("mean_pinball: length mismatch");
    if (y.empty()) throw std::invalid_argument("mean_pinball: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += pinball(tau, y[i], yhat[i]);
    return sum / static_cast<double>(y.size());
}

struct DegenerateRangeError : std::runtime_error {
    DegenerateRangeError() : std::runtime_error("target vector has zero range") {}
};

/// Mean pinball loss normalized by the target range of the evaluation set.
inline double normalized_quantile_loss(double tau, std::span<const double> y,
                                       std::span<const double> yhat) {
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) throw DegenerateRangeError();
    return mean_pinball(tau, y, yhat) / range;
}

/// Fraction of targets at or below the prediction; ties count as covered.
inline double empirical_coverage(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw std::invalid_argument("empirical_coverage: length mismatch");
    if (y.empty()) throw std::invalid_argument("empirical_coverage: empty input");
    std::size_t covered = 0;
    for (std::size_t i = 0; i < y.size(); ++i) covered += y[i] <= yhat[i];
    return static_cast<double>(covered) / static_cast<double>(y.size());
}

inline double absolute_coverage_error(double tau, double coverage) {
    return std::abs(coverage - tau);
}

/// Per-(model, fold) evaluation record.
struct MetricRecord {
    double nql = 0.0;
    double coverage = 0.0;
    double ace = 0.0;
    double mean_pinball = 0.0;
    int parsimony = -1; // -1 when the model has no parsimony (black box)
};

} // namespace sqr
