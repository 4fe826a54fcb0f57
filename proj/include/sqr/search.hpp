#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sqr/constopt.hpp"
#include "sqr/data.hpp"
#include "sqr/expr.hpp"
#include "sqr/loss.hpp"
#include "sqr/pareto.hpp"

namespace sqr {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Search hyperparameters. Field names mirror the reference engine's
/// parameter table, which the key-value config format uses verbatim.
struct SearchConfig {
    double tau = 0.5;
    int niterations = 40;
    int populations = 15;
    int population_size = 33;
    int ncycles_per_iteration = 550;
    int maxsize = 20;
    double parsimony = 0.0032; // linear parsimony coefficient
    double adaptive_parsimony_scaling = 20.0;

    double weight_add_node = 0.79;
    double weight_insert_node = 5.1;
    double weight_delete_node = 1.7;
    double weight_do_nothing = 0.21;
    double weight_mutate_constant = 0.048;
    double weight_mutate_operator = 0.47;
    double weight_swap_operands = 0.1;
    double weight_randomize = 0.00023;
    double weight_simplify = 0.0020;

    double crossover_probability = 0.066;
    bool annealing = false;
    double alpha = 0.1;
    double perturbation_factor = 0.076;
    int tournament_selection_n = 10;
    double tournament_selection_p = 0.86;
    double fraction_replaced = 0.000364;
    double fraction_replaced_hof = 0.035;
    int topn = 12;
    double optimize_probability = 0.14;
    int optimizer_iterations = 8;
    int optimizer_nrestarts = 2;
    std::uint64_t seed = 0;

    int nthreads = 1; // runtime option, not part of the config file contract

    void validate() const {
        if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
        if (populations < 1) throw ConfigError("populations must be >= 1");
        if (population_size < 2) throw ConfigError("population_size must be >= 2");
        if (niterations < 1) throw ConfigError("niterations must be >= 1");
        if (ncycles_per_iteration < 1) throw ConfigError("ncycles_per_iteration must be >= 1");
        if (maxsize < 1) throw ConfigError("maxsize must be >= 1");
        if (!(tournament_selection_p > 0.0 && tournament_selection_p <= 1.0))
            throw ConfigError("tournament_selection_p must lie in (0,1]");
        if (tournament_selection_n < 1 || tournament_selection_n > population_size)
            throw ConfigError("tournament_selection_n must lie in [1, population_size]");
        const double weights[] = {weight_add_node,    weight_insert_node, weight_delete_node,
                                  weight_do_nothing,  weight_mutate_constant,
                                  weight_mutate_operator, weight_swap_operands,
                                  weight_randomize,   weight_simplify};
        double total = 0.0;
        for (const double w : weights) {
            if (w < 0.0) throw ConfigError("mutation weights must be nonnegative");
            total += w;
        }
        if (!(total > 0.0)) throw ConfigError("at least one mutation weight must be positive");
        if (topn < 1 || topn >= population_size)
            throw ConfigError("topn must lie in [1, population_size)");
    }
};

// ---------------------------------------------------------------------------
// Plain key-value serialization of SearchConfig ("key = value" or "key value",
// '#' comments).

namespace detail {

template <typename Fn>
void for_each_config_field(SearchConfig& cfg, Fn&& fn) {
    fn("tau", cfg.tau);
    fn("niterations", cfg.niterations);
    fn("populations", cfg.populations);
    fn("population_size", cfg.population_size);
    fn("ncycles_per_iteration", cfg.ncycles_per_iteration);
    fn("maxsize", cfg.maxsize);
    fn("parsimony", cfg.parsimony);
    fn("adaptive_parsimony_scaling", cfg.adaptive_parsimony_scaling);
    fn("weight_add_node", cfg.weight_add_node);
    fn("weight_insert_node", cfg.weight_insert_node);
    fn("weight_delete_node", cfg.weight_delete_node);
    fn("weight_do_nothing", cfg.weight_do_nothing);
    fn("weight_mutate_constant", cfg.weight_mutate_constant);
    fn("weight_mutate_operator", cfg.weight_mutate_operator);
    fn("weight_swap_operands", cfg.weight_swap_operands);
    fn("weight_randomize", cfg.weight_randomize);
    fn("weight_simplify", cfg.weight_simplify);
    fn("crossover_probability", cfg.crossover_probability);
    fn("annealing", cfg.annealing);
    fn("alpha", cfg.alpha);
    fn("perturbation_factor", cfg.perturbation_factor);
    fn("tournament_selection_n", cfg.tournament_selection_n);
    fn("tournament_selection_p", cfg.tournament_selection_p);
    fn("fraction_replaced", cfg.fraction_replaced);
    fn("fraction_replaced_hof", cfg.fraction_replaced_hof);
    fn("topn", cfg.topn);
    fn("optimize_probability", cfg.optimize_probability);
    fn("optimizer_iterations", cfg.optimizer_iterations);
    fn("optimizer_nrestarts", cfg.optimizer_nrestarts);
    fn("seed", cfg.seed);
}

inline void assign_config_value(double& field, const std::string& v) { field = std::stod(v); }
inline void assign_config_value(int& field, const std::string& v) { field = std::stoi(v); }
inline void assign_config_value(std::uint64_t& field, const std::string& v) {
    field = std::stoull(v);
}
inline void assign_config_value(bool& field, const std::string& v) {
    if (v == "true" || v == "1" || v == "True") field = true;
    else if (v == "false" || v == "0" || v == "False") field = false;
    else throw ConfigError("invalid boolean value: " + v);
}

inline std::string config_value_to_string(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
inline std::string config_value_to_string(int v) { return std::to_string(v); }
inline std::string config_value_to_string(std::uint64_t v) { return std::to_string(v); }
inline std::string config_value_to_string(bool v) { return v ? "true" : "false"; }

} // namespace detail

inline std::string config_to_text(const SearchConfig& cfg) {
    std::string out;
    detail::for_each_config_field(const_cast<SearchConfig&>(cfg), [&](const char* key, auto& val) {
        out += key;
        out += " = ";
        out += detail::config_value_to_string(val);
        out += '\n';
    });
    return out;
}

inline SearchConfig config_from_text(const std::string& text) {
    SearchConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string key, eq, value;
        std::istringstream ls(line);
        if (!(ls >> key)) continue;
        if (!(ls >> eq)) throw ConfigError("missing value on line " + std::to_string(lineno));
        if (eq == "=") {
            if (!(ls >> value)) throw ConfigError("missing value on line " + std::to_string(lineno));
        } else {
            value = eq;
        }
        bool found = false;
        try {
            detail::for_each_config_field(cfg, [&](const char* name, auto& field) {
                if (key == name) {
                    detail::assign_config_value(field, value);
                    found = true;
                }
            });
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("invalid value for '" + key + "' on line " + std::to_string(lineno));
        }
        if (!found) throw ConfigError("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

inline SearchConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_text(ss.str());
}

// ---------------------------------------------------------------------------
// Individuals and populations.

struct Individual {
    Expr expr;
    int age = 0; // generations (cycles) survived since creation
    double raw_loss = worst_loss;
    double penalized_fitness = worst_loss;
    int complexity = 0;
    std::uint64_t birth = 0; // creation order, for deterministic tie-breaks
};

/// Exponentially decayed per-complexity occurrence counts driving the
/// adaptive parsimony penalty.
class Frecency {
public:
    void decay(double factor) {
        for (auto& [c, v] : counts_) v *= factor;
    }
    void bump(int complexity) { counts_[complexity] += 1.0; }

    double share(int complexity) const {
        double total = 0.0;
        for (const auto& [c, v] : counts_) total += v;
        if (!(total > 0.0)) return 0.0;
        const auto it = counts_.find(complexity);
        return it == counts_.end() ? 0.0 : it->second / total;
    }

private:
    std::map<int, double> counts_;
};

/// Multiplier >= 1 penalizing overrepresented complexity levels:
/// exp(scaling * frecency-share).
inline double adaptive_parsimony_penalty(int complexity, const Frecency& frecency,
                                         double scaling) {
    if (scaling < 0.0) throw std::invalid_argument("adaptive_parsimony_penalty: scaling < 0");
    return std::exp(scaling * frecency.share(complexity));
}

/// Penalized fitness: raw mean pinball times the adaptive penalty, plus the
/// linear parsimony term. Non-finite predictions map to the worst sentinel.
inline double penalized_fitness(double raw_loss, int complexity, const Frecency& frecency,
                                const SearchConfig& cfg) {
    if (!std::isfinite(raw_loss)) return worst_loss;
    return raw_loss * adaptive_parsimony_penalty(complexity, frecency,
                                                 cfg.adaptive_parsimony_scaling) +
           cfg.parsimony * complexity;
}

/// Simulated-annealing acceptance. Improvements and ties are always accepted;
/// with annealing enabled a worse candidate is accepted with probability
/// exp(-(new-old)/(alpha*temperature)).
inline bool anneal_accept(double old_fit, double new_fit, double temperature, double alpha,
                          bool annealing, std::mt19937_64& rng) {
    if (new_fit <= old_fit) return true;
    if (!annealing) return false;
    if (!std::isfinite(new_fit)) return false;
    const double prob = std::exp(-(new_fit - old_fit) / (alpha * std::max(temperature, 1e-12)));
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < prob;
}

// ---------------------------------------------------------------------------
// Mutation and crossover.

namespace detail {

inline int count_nodes(const Expr& e) { return expr_size(e); }

/// Returns a mutable pointer to the k-th node in preorder.
inline Expr* node_at(Expr& e, int& k) {
    if (k == 0) return &e;
    --k;
    for (auto& c : e.children) {
        Expr* r = node_at(c, k);
        if (r) return r;
    }
    return nullptr;
}

inline Expr* random_node(Expr& e, std::mt19937_64& rng) {
    int k = std::uniform_int_distribution<int>(0, count_nodes(e) - 1)(rng);
    return node_at(e, k);
}

inline Expr random_leaf(int d, std::mt19937_64& rng) {
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.7)
        return make_feature(std::uniform_int_distribution<int>(0, d - 1)(rng));
    return make_const(std::normal_distribution<double>(0.0, 2.0)(rng));
}

inline Op random_op_of_arity(int ar, std::mt19937_64& rng) {
    if (ar == 2) {
        static constexpr Op ops[] = {Op::Add, Op::Sub, Op::Mul, Op::Div};
        return ops[std::uniform_int_distribution<int>(0, 3)(rng)];
    }
    static constexpr Op ops[] = {Op::Square, Op::Sin, Op::Cos, Op::Exp, Op::Log, Op::Sqrt};
    return ops[std::uniform_int_distribution<int>(0, 5)(rng)];
}

} // namespace detail

enum class MutationKind {
    AddNode, InsertNode, DeleteNode, DoNothing, MutateConstant,
    MutateOperator, SwapOperands, Randomize, Simplify
};

inline MutationKind pick_mutation(const SearchConfig& cfg, std::mt19937_64& rng) {
    const double weights[] = {cfg.weight_add_node,       cfg.weight_insert_node,
                              cfg.weight_delete_node,    cfg.weight_do_nothing,
                              cfg.weight_mutate_constant, cfg.weight_mutate_operator,
                              cfg.weight_swap_operands,  cfg.weight_randomize,
                              cfg.weight_simplify};
    double total = 0.0;
    for (const double w : weights) total += w;
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    for (int i = 0; i < 9; ++i) {
        u -= weights[i];
        if (u < 0.0) return static_cast<MutationKind>(i);
    }
    return MutationKind::DoNothing;
}

namespace detail {

inline bool apply_mutation(Expr& e, MutationKind kind, int d, const SearchConfig& cfg,
                           std::mt19937_64& rng) {
    switch (kind) {
    case MutationKind::DoNothing:
        return true;
    case MutationKind::AddNode: {
        // replace a random leaf with an op over fresh leaves
        std::vector<Expr*> leaves;
        const std::function<void(Expr&)> walk = [&](Expr& n) {
            if (n.is_leaf()) leaves.push_back(&n);
            for (auto& c : n.children) walk(c);
        };
        walk(e);
        Expr* leaf = leaves[std::uniform_int_distribution<std::size_t>(0, leaves.size() - 1)(rng)];
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5)
            *leaf = make_unary(random_op_of_arity(1, rng), random_leaf(d, rng));
        else
            *leaf = make_binary(random_op_of_arity(2, rng), random_leaf(d, rng),
                                random_leaf(d, rng));
        return true;
    }
    case MutationKind::InsertNode: {
        // wrap a random subtree in a new operator
        Expr* node = random_node(e, rng);
        Expr sub = std::move(*node);
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5) {
            *node = make_unary(random_op_of_arity(1, rng), std::move(sub));
        } else {
            Expr other = random_leaf(d, rng);
            if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5)
                *node = make_binary(random_op_of_arity(2, rng), std::move(sub), std::move(other));
            else
                *node = make_binary(random_op_of_arity(2, rng), std::move(other), std::move(sub));
        }
        return true;
    }
    case MutationKind::DeleteNode: {
        std::vector<Expr*> ops;
        const std::function<void(Expr&)> walk = [&](Expr& n) {
            if (n.is_op()) ops.push_back(&n);
            for (auto& c : n.children) walk(c);
        };
        walk(e);
        if (ops.empty()) return false;
        Expr* node = ops[std::uniform_int_distribution<std::size_t>(0, ops.size() - 1)(rng)];
        const std::size_t pick =
            std::uniform_int_distribution<std::size_t>(0, node->children.size() - 1)(rng);
        Expr child = std::move(node->children[pick]);
        *node = std::move(child);
        return true;
    }
    case MutationKind::MutateConstant: {
        std::vector<Expr*> consts;
        collect_constants(e, consts);
        if (consts.empty()) return false;
        Expr* node =
            consts[std::uniform_int_distribution<std::size_t>(0, consts.size() - 1)(rng)];
        const double factor =
            std::exp(std::normal_distribution<double>(0.0, cfg.perturbation_factor)(rng));
        node->value *= factor;
        return true;
    }
    case MutationKind::MutateOperator: {
        std::vector<Expr*> ops;
        const std::function<void(Expr&)> walk = [&](Expr& n) {
            if (n.is_op()) ops.push_back(&n);
            for (auto& c : n.children) walk(c);
        };
        walk(e);
        if (ops.empty()) return false;
        Expr* node = ops[std::uniform_int_distribution<std::size_t>(0, ops.size() - 1)(rng)];
        node->op = random_op_of_arity(arity(node->op), rng);
        return true;
    }
    case MutationKind::SwapOperands: {
        std::vector<Expr*> bins;
        const std::function<void(Expr&)> walk = [&](Expr& n) {
            if (n.kind == TokenKind::BinaryOp) bins.push_back(&n);
            for (auto& c : n.children) walk(c);
        };
        walk(e);
        if (bins.empty()) return false;
        Expr* node = bins[std::uniform_int_distribution<std::size_t>(0, bins.size() - 1)(rng)];
        std::swap(node->children[0], node->children[1]);
        return true;
    }
    case MutationKind::Randomize:
        e = random_expr(d, cfg.maxsize, rng);
        return true;
    case MutationKind::Simplify:
        e = simplify(e);
        return true;
    }
    return false;
}

} // namespace detail

/// Applies one weighted-random mutation. Oversize or inapplicable results are
/// retried a few times and fall back to an unchanged copy. The result always
/// has age 0.
inline Expr mutate_expr(const Expr& parent, int d, const SearchConfig& cfg,
                        std::mt19937_64& rng) {
    for (int attempt = 0; attempt < 8; ++attempt) {
        Expr child = parent;
        const MutationKind kind = pick_mutation(cfg, rng);
        if (!detail::apply_mutation(child, kind, d, cfg, rng)) continue;
        if (expr_size(child) <= cfg.maxsize) return child;
    }
    return parent; // fall back to do-nothing
}

/// Subtree crossover: one uniformly chosen subtree in each parent is swapped.
/// Oversize children trigger bounded retries, then the parents are returned.
inline std::pair<Expr, Expr> crossover_exprs(const Expr& a, const Expr& b, int maxsize,
                                             std::mt19937_64& rng) {
    for (int attempt = 0; attempt < 8; ++attempt) {
        Expr ca = a, cb = b;
        Expr* na = detail::random_node(ca, rng);
        Expr* nb = detail::random_node(cb, rng);
        std::swap(*na, *nb);
        if (expr_size(ca) <= maxsize && expr_size(cb) <= maxsize)
            return {std::move(ca), std::move(cb)};
    }
    return {a, b};
}

// ---------------------------------------------------------------------------
// Tournament selection: sample n members without replacement, pick rank k
// (best first, by penalized fitness) with probability p*(1-p)^k renormalized.

inline std::size_t tournament_select_index(const std::vector<Individual>& members, int n,
                                           double p, std::mt19937_64& rng) {
    if (members.empty()) throw std::invalid_argument("tournament: empty population");
    n = std::min<int>(n, static_cast<int>(members.size()));
    std::vector<std::size_t> entrants(members.size());
    std::iota(entrants.begin(), entrants.end(), 0);
    for (int i = 0; i < n; ++i) {
        const std::size_t j =
            std::uniform_int_distribution<std::size_t>(i, entrants.size() - 1)(rng);
        std::swap(entrants[i], entrants[j]);
    }
    entrants.resize(n);
    std::sort(entrants.begin(), entrants.end(), [&](std::size_t x, std::size_t y) {
        const auto& a = members[x];
        const auto& b = members[y];
        if (a.penalized_fitness != b.penalized_fitness)
            return a.penalized_fitness < b.penalized_fitness;
        if (a.complexity != b.complexity) return a.complexity < b.complexity;
        return a.birth < b.birth;
    });
    // geometric rank distribution, renormalized over n ranks
    double total = 0.0;
    for (int k = 0; k < n; ++k) total += p * std::pow(1.0 - p, k);
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    for (int k = 0; k < n; ++k) {
        u -= p * std::pow(1.0 - p, k);
        if (u < 0.0) return entrants[k];
    }
    return entrants[n - 1];
}

// ---------------------------------------------------------------------------
// Hall of fame: per-complexity best raw loss.

class HallOfFame {
public:
    struct Entry {
        Expr expr;
        double loss;
    };

    /// Returns true when the entry improved its complexity level. Losses at a
    /// level are monotonically non-increasing over time by construction.
    bool update(const Expr& expr, int complexity, double loss) {
        if (!std::isfinite(loss)) return false;
        const auto it = entries_.find(complexity);
        if (it != entries_.end() && it->second.loss <= loss) return false;
        entries_[complexity] = Entry{expr, loss};
        return true;
    }

    bool empty() const { return entries_.empty(); }
    const std::map<int, Entry>& entries() const { return entries_; }

    ParetoFront to_front(const ComplexityTable& table = {}) const {
        ParetoFront front;
        for (const auto& [c, e] : entries_) front.update(e.expr, c, e.loss);
        return front;
    }

private:
    std::map<int, Entry> entries_;
};

// ---------------------------------------------------------------------------
// The evolve loop.

struct SearchResult {
    ParetoFront front;
    HallOfFame hof;
};

namespace detail {

struct EvalContext {
    const Dataset& train;
    const SearchConfig& cfg;
    const ComplexityTable& table;
};

inline Individual make_individual(Expr expr, const EvalContext& ctx, const Frecency& frec,
                                  std::uint64_t birth) {
    Individual ind;
    ind.expr = std::move(expr);
    ind.complexity = parsimony(ind.expr, ctx.table);
    ind.raw_loss = exact_pinball_loss(ind.expr, ctx.train, ctx.cfg.tau);
    ind.penalized_fitness = penalized_fitness(ind.raw_loss, ind.complexity, frec, ctx.cfg);
    ind.age = 0;
    ind.birth = birth;
    return ind;
}

struct PopulationState {
    std::vector<Individual> members;
    std::mt19937_64 rng;
    Frecency frecency;
    HallOfFame local_hof;
    std::uint64_t next_birth = 0;

    /// Indices of the topn elite by penalized fitness.
    std::vector<std::size_t> elite_indices(int topn) const {
        std::vector<std::size_t> order(members.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (members[a].penalized_fitness != members[b].penalized_fitness)
                return members[a].penalized_fitness < members[b].penalized_fitness;
            if (members[a].complexity != members[b].complexity)
                return members[a].complexity < members[b].complexity;
            return members[a].birth < members[b].birth;
        });
        order.resize(std::min<std::size_t>(topn, order.size()));
        return order;
    }

    /// Age-regularized replacement: the offspring replaces the oldest
    /// non-elite member (ties: worse fitness, then later birth).
    void insert(Individual offspring, int topn) {
        const auto elite = elite_indices(topn);
        std::vector<bool> is_elite(members.size(), false);
        for (const auto i : elite) is_elite[i] = true;
        std::size_t victim = members.size();
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (is_elite[i]) continue;
            if (victim == members.size()) { victim = i; continue; }
            const auto& a = members[i];
            const auto& v = members[victim];
            if (a.age > v.age ||
                (a.age == v.age && (a.penalized_fitness > v.penalized_fitness ||
                                    (a.penalized_fitness == v.penalized_fitness &&
                                     a.birth > v.birth))))
                victim = i;
        }
        if (victim == members.size()) return; // everyone elite: population too small
        frecency.bump(offspring.complexity);
        local_hof.update(offspring.expr, offspring.complexity, offspring.raw_loss);
        members[victim] = std::move(offspring);
    }
};

inline void run_population_iteration(PopulationState& pop, const EvalContext& ctx) {
    const SearchConfig& cfg = ctx.cfg;
    const int d = static_cast<int>(ctx.train.d());
    const int ncycles = cfg.ncycles_per_iteration;
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (int cycle = 0; cycle < ncycles; ++cycle) {
        for (auto& m : pop.members) ++m.age;
        pop.frecency.decay(0.99);
        const double temperature =
            ncycles > 1 ? 1.0 - static_cast<double>(cycle) / static_cast<double>(ncycles - 1)
                        : 1.0;

        if (unit(pop.rng) < cfg.crossover_probability) {
            const std::size_t ia = tournament_select_index(
                pop.members, cfg.tournament_selection_n, cfg.tournament_selection_p, pop.rng);
            const std::size_t ib = tournament_select_index(
                pop.members, cfg.tournament_selection_n, cfg.tournament_selection_p, pop.rng);
            auto [ca, cb] = crossover_exprs(pop.members[ia].expr, pop.members[ib].expr,
                                            cfg.maxsize, pop.rng);
            Individual child_a = make_individual(std::move(ca), ctx, pop.frecency,
                                                 pop.next_birth++);
            pop.insert(std::move(child_a), cfg.topn);
            Individual child_b = make_individual(std::move(cb), ctx, pop.frecency,
                                                 pop.next_birth++);
            pop.insert(std::move(child_b), cfg.topn);
        } else {
            const std::size_t ip = tournament_select_index(
                pop.members, cfg.tournament_selection_n, cfg.tournament_selection_p, pop.rng);
            const double parent_fit = pop.members[ip].penalized_fitness;
            Expr child_expr = mutate_expr(pop.members[ip].expr, d, cfg, pop.rng);
            Individual child = make_individual(std::move(child_expr), ctx, pop.frecency,
                                               pop.next_birth++);
            if (cfg.annealing &&
                !anneal_accept(parent_fit, child.penalized_fitness, temperature, cfg.alpha,
                               true, pop.rng))
                continue;
            pop.insert(std::move(child), cfg.topn);
        }
    }
}

inline void refine_population(PopulationState& pop, const EvalContext& ctx) {
    const SearchConfig& cfg = ctx.cfg;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& m : pop.members) {
        Expr simplified = simplify(m.expr);
        if (!structurally_equal(simplified, m.expr)) {
            const int age = m.age;
            const std::uint64_t birth = m.birth;
            m = make_individual(std::move(simplified), ctx, pop.frecency, birth);
            m.age = age; // simplification is in-place maintenance, not birth
        }
        if (unit(pop.rng) < cfg.optimize_probability && !constant_values(m.expr).empty()) {
            Expr optimized =
                optimize_constants(m.expr, ctx.train, cfg.tau, cfg.optimizer_iterations,
                                   cfg.optimizer_nrestarts, pop.rng, cfg.perturbation_factor);
            const int age = m.age;
            const std::uint64_t birth = m.birth;
            m = make_individual(std::move(optimized), ctx, pop.frecency, birth);
            m.age = age;
        }
        pop.local_hof.update(m.expr, m.complexity, m.raw_loss);
    }
}

} // namespace detail

/// Multi-population evolutionary search. Populations evolve independently
/// between iteration barriers; at each barrier the hall of fame is merged,
/// migration runs in ring order, and the global Pareto front is updated.
/// Deterministic given (seed, populations), independent of thread count.
inline SearchResult evolve(const Dataset& train, const SearchConfig& cfg,
                           const ComplexityTable& table = {}) {
    cfg.validate();
    if (train.n() < 2) throw std::invalid_argument("evolve: need at least 2 rows");
    {
        const auto [lo, hi] = std::minmax_element(train.target.begin(), train.target.end());
        if (!(*hi > *lo)) throw DataError("evolve: degenerate target (all values equal)");
    }

    const detail::EvalContext ctx{train, cfg, table};
    const int d = static_cast<int>(train.d());

    std::mt19937_64 master(cfg.seed);
    std::vector<detail::PopulationState> pops(cfg.populations);
    for (auto& pop : pops) {
        pop.rng.seed(master());
        for (int i = 0; i < cfg.population_size; ++i) {
            Expr e = random_expr(d, cfg.maxsize, pop.rng);
            Individual ind = detail::make_individual(std::move(e), ctx, pop.frecency,
                                                     pop.next_birth++);
            pop.frecency.bump(ind.complexity);
            pop.members.push_back(std::move(ind));
        }
    }
    std::mt19937_64 migration_rng(master());

    HallOfFame hof;
    const int nthreads = std::max(1, cfg.nthreads);

    for (int iter = 0; iter < cfg.niterations; ++iter) {
        const auto run_one = [&](detail::PopulationState& pop) {
            detail::run_population_iteration(pop, ctx);
            detail::refine_population(pop, ctx);
        };
        if (nthreads == 1 || pops.size() == 1) {
            for (auto& pop : pops) run_one(pop);
        } else {
            std::vector<std::thread> workers;
            std::size_t next = 0;
            for (int t = 0; t < nthreads; ++t) workers.emplace_back([&, t] {
                for (std::size_t p = t; p < pops.size(); p += nthreads) run_one(pops[p]);
            });
            for (auto& w : workers) w.join();
        }

        // barrier: merge local HOFs in population-index order
        for (auto& pop : pops)
            for (const auto& [c, e] : pop.local_hof.entries()) hof.update(e.expr, c, e.loss);

        // migration over a ring, plus hall-of-fame immigrants
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<std::vector<Expr>> snapshots(pops.size());
        for (std::size_t p = 0; p < pops.size(); ++p)
            for (const auto& m : pops[p].members) snapshots[p].push_back(m.expr);
        std::vector<HallOfFame::Entry> hof_list;
        for (const auto& [c, e] : hof.entries()) hof_list.push_back(e);
        for (std::size_t p = 0; p < pops.size(); ++p) {
            const std::size_t neighbor = (p + pops.size() - 1) % pops.size();
            for (auto& m : pops[p].members) {
                if (pops.size() > 1 && unit(migration_rng) < cfg.fraction_replaced) {
                    const auto& src = snapshots[neighbor];
                    const Expr& immigrant = src[std::uniform_int_distribution<std::size_t>(
                        0, src.size() - 1)(migration_rng)];
                    m = detail::make_individual(immigrant, ctx, pops[p].frecency,
                                                pops[p].next_birth++);
                    pops[p].frecency.bump(m.complexity);
                } else if (!hof_list.empty() && unit(migration_rng) < cfg.fraction_replaced_hof) {
                    const Expr& immigrant = hof_list[std::uniform_int_distribution<std::size_t>(
                        0, hof_list.size() - 1)(migration_rng)].expr;
                    m = detail::make_individual(immigrant, ctx, pops[p].frecency,
                                                pops[p].next_birth++);
                    pops[p].frecency.bump(m.complexity);
                }
            }
        }
    }

    SearchResult result;
    result.hof = hof;
    result.front = hof.to_front(table);
    return result;
}

} // namespace sqr
