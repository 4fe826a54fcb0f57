#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "sqr/expr.hpp"
#include "sqr/parser.hpp"

namespace sqr {

enum class SelectMode { BestLoss, Elbow };

/// Per-complexity-level best expressions. Invariant after every update:
/// entries sorted by complexity have strictly decreasing losses
/// (non-domination).
class ParetoFront {
public:
    struct Entry {
        Expr expr;
        double loss;
    };

    void update(const Expr& expr, int complexity, double loss) {
        if (!std::isfinite(loss)) return;
        const auto it = entries_.find(complexity);
        if (it != entries_.end() && it->second.loss <= loss) return;
        // reject if dominated by a simpler-or-equal entry
        for (auto p = entries_.begin(); p != entries_.end() && p->first <= complexity; ++p)
            if (p->second.loss <= loss && p->first < complexity) return;
        entries_[complexity] = Entry{expr, loss};
        // prune entries now dominated by the insertion
        for (auto p = entries_.upper_bound(complexity); p != entries_.end();) {
            if (p->second.loss >= loss) p = entries_.erase(p);
            else ++p;
        }
    }

    void update(const Expr& expr, double loss, const ComplexityTable& table = {}) {
        update(expr, parsimony(expr, table), loss);
    }

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    const std::map<int, Entry>& entries() const { return entries_; }

    const Entry& at(int complexity) const { return entries_.at(complexity); }

    /// best-loss: minimum loss, ties broken toward lower complexity.
    /// elbow: maximum perpendicular distance to the endpoint chord in
    /// min-max-normalized (complexity, loss) space.
    std::pair<int, const Entry*> select(SelectMode mode) const {
        if (entries_.empty()) throw std::logic_error("select: empty Pareto front");
        if (mode == SelectMode::BestLoss) {
            const Entry* best = nullptr;
            int best_c = 0;
            for (const auto& [c, e] : entries_) {
                if (!best || e.loss < best->loss) {
                    best = &e;
                    best_c = c;
                }
            }
            return {best_c, best};
        }
        if (entries_.size() <= 2) {
            const auto& [c, e] = *entries_.begin();
            return {c, &e};
        }
        const double c_lo = entries_.begin()->first;
        const double c_hi = entries_.rbegin()->first;
        const double l_hi = entries_.begin()->second.loss;   // losses decrease
        const double l_lo = entries_.rbegin()->second.loss;
        const double c_span = std::max(c_hi - c_lo, 1e-300);
        const double l_span = std::max(l_hi - l_lo, 1e-300);
        const Entry* best = nullptr;
        int best_c = 0;
        double best_dist = -1.0;
        for (const auto& [c, e] : entries_) {
            const double x = (c - c_lo) / c_span;
            const double y = (e.loss - l_hi) / l_span; // 0 at first entry, -1 at last
            // distance to the chord from (0,0) to (1,-1)
            const double dist = std::abs(x * -1.0 - y * 1.0) / std::sqrt(2.0);
            if (dist > best_dist) {
                best_dist = dist;
                best = &e;
                best_c = c;
            }
        }
        return {best_c, best};
    }

    /// Structured-text export: one record per complexity level.
    std::string to_text(const std::vector<std::string>* names = nullptr) const {
        std::string out = "complexity,loss,expression\n";
        for (const auto& [c, e] : entries_) {
            out += std::to_string(c);
            out += ',';
            out += detail::format_constant(e.loss);
            out += ',';
            out += format(e.expr, names);
            out += '\n';
        }
        return out;
    }

private:
    std::map<int, Entry> entries_;
};

} // namespace sqr
