#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqr/matrix.hpp"

namespace sqr {

enum class Op : std::uint8_t {
    Add, Sub, Mul, Div,      // binary
    Square, Sin, Cos, Exp, Log, Sqrt // unary
};

inline constexpr int arity(Op op) { return op <= Op::Div ? 2 : 1; }

inline const char* op_name(Op op) {
    switch (op) {
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Square: return "square";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    }
    return "?";
}

enum class TokenKind : std::uint8_t { BinaryOp, UnaryOp, Feature, Constant };

/// Per-token complexity weights. Defaults follow the standard operator table:
/// add/sub/mul/feature/constant 1, div/square 2, sin/cos 3, exp/log/sqrt 4.
struct ComplexityTable {
    std::array<int, 10> op_weight{1, 1, 1, 2, 2, 3, 3, 4, 4, 4};
    int feature_weight = 1;
    int constant_weight = 1;

    int weight(Op op) const { return op_weight[static_cast<int>(op)]; }
};

/// Immutable-by-convention expression tree. Arity is enforced on construction;
/// mutation operators build fresh trees rather than editing in place.
struct Expr {
    TokenKind kind = TokenKind::Constant;
    Op op = Op::Add;      // valid for op kinds
    int feature = 0;      // valid for Feature
    double value = 0.0;   // valid for Constant
    std::vector<Expr> children;

    bool is_leaf() const { return children.empty(); }
    bool is_const() const { return kind == TokenKind::Constant; }
    bool is_feature() const { return kind == TokenKind::Feature; }
    bool is_op() const { return kind == TokenKind::BinaryOp || kind == TokenKind::UnaryOp; }
};

inline Expr make_const(double v) {
    Expr e;
    e.kind = TokenKind::Constant;
    e.value = v;
    return e;
}

inline Expr make_feature(int index) {
    if (index < 0) throw std::invalid_argument("feature index must be nonnegative");
    Expr e;
    e.kind = TokenKind::Feature;
    e.feature = index;
    return e;
}

inline Expr make_unary(Op op, Expr child) {
    if (arity(op) != 1) throw std::invalid_argument("make_unary: operator is not unary");
    Expr e;
    e.kind = TokenKind::UnaryOp;
    e.op = op;
    e.children.push_back(std::move(child));
    return e;
}

inline Expr make_binary(Op op, Expr lhs, Expr rhs) {
    if (arity(op) != 2) throw std::invalid_argument("make_binary: operator is not binary");
    Expr e;
    e.kind = TokenKind::BinaryOp;
    e.op = op;
    e.children.push_back(std::move(lhs));
    e.children.push_back(std::move(rhs));
    return e;
}

inline int expr_size(const Expr& e) {
    int n = 1;
    for (const auto& c : e.children) n += expr_size(c);
    return n;
}

inline int expr_depth(const Expr& e) {
    int d = 0;
    for (const auto& c : e.children) d = std::max(d, expr_depth(c));
    return d + 1;
}

inline int parsimony(const Expr& e, const ComplexityTable& table = {}) {
    int w = 0;
    switch (e.kind) {
    case TokenKind::Feature: w = table.feature_weight; break;
    case TokenKind::Constant: w = table.constant_weight; break;
    default: w = table.weight(e.op); break;
    }
    for (const auto& c : e.children) w += parsimony(c, table);
    return w;
}

inline int max_feature_index(const Expr& e) {
    int m = e.is_feature() ? e.feature : -1;
    for (const auto& c : e.children) m = std::max(m, max_feature_index(c));
    return m;
}

inline bool structurally_equal(const Expr& a, const Expr& b) {
    if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
    switch (a.kind) {
    case TokenKind::Feature:
        if (a.feature != b.feature) return false;
        break;
    case TokenKind::Constant:
        if (a.value != b.value) return false;
        break;
    default:
        if (a.op != b.op) return false;
        break;
    }
    for (std::size_t i = 0; i < a.children.size(); ++i)
        if (!structurally_equal(a.children[i], b.children[i])) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Batch evaluation via a flattened postfix program. Non-finite intermediates
// (division by zero, log of a negative, overflow) propagate through IEEE
// arithmetic and are reported to the caller via has_nonfinite().

class CompiledExpr {
public:
    explicit CompiledExpr(const Expr& e) { flatten(e); }

    /// Evaluates one row of `d` feature values.
    double eval_row(const double* row, std::size_t d) const {
        double stack[64];
        int top = -1;
        for (const auto& ins : program_) {
            switch (ins.kind) {
            case TokenKind::Constant:
                stack[++top] = ins.value;
                break;
            case TokenKind::Feature:
                if (static_cast<std::size_t>(ins.feature) >= d)
                    throw std::out_of_range("evaluate: feature index out of bounds");
                stack[++top] = row[ins.feature];
                break;
            case TokenKind::UnaryOp:
                stack[top] = apply_unary(ins.op, stack[top]);
                break;
            case TokenKind::BinaryOp: {
                const double rhs = stack[top--];
                stack[top] = apply_binary(ins.op, stack[top], rhs);
                break;
            }
            }
        }
        return stack[0];
    }

    /// Evaluates all rows of X into `out` (resized to X.rows()). Returns true
    /// iff every output is finite.
    bool eval_batch(const Matrix& X, std::vector<double>& out) const {
        const std::size_t n = X.rows();
        const std::size_t d = X.cols();
        if (n == 0) throw std::invalid_argument("evaluate: empty feature matrix");
        out.resize(n);
        bool finite = true;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = eval_row(X.row_ptr(i), d);
            out[i] = v;
            finite &= std::isfinite(v);
        }
        return finite;
    }

    int stack_need() const { return stack_need_; }

private:
    struct Ins {
        TokenKind kind;
        Op op;
        int feature;
        double value;
    };

    static double apply_unary(Op op, double x) {
        switch (op) {
        case Op::Square: return x * x;
        case Op::Sin: return std::sin(x);
        case Op::Cos: return std::cos(x);
        case Op::Exp: return std::exp(x);
        case Op::Log: return std::log(x);
        case Op::Sqrt: return std::sqrt(x);
        default: return std::numeric_limits<double>::quiet_NaN();
        }
    }

    static double apply_binary(Op op, double a, double b) {
        switch (op) {
        case Op::Add: return a + b;
        case Op::Sub: return a - b;
        case Op::Mul: return a * b;
        case Op::Div: return a / b;
        default: return std::numeric_limits<double>::quiet_NaN();
        }
    }

    void flatten(const Expr& e) {
        for (const auto& c : e.children) flatten(c);
        program_.push_back({e.kind, e.op, e.feature, e.value});
        int depth = 0, maxd = 0;
        for (const auto& ins : program_) {
            if (ins.kind == TokenKind::BinaryOp) --depth;
            else if (ins.kind != TokenKind::UnaryOp) ++depth;
            maxd = std::max(maxd, depth);
        }
        stack_need_ = maxd;
        if (stack_need_ > 64)
            throw std::invalid_argument("expression too deep for evaluation stack");
    }

    std::vector<Ins> program_;
    int stack_need_ = 0;
};

/// Batch evaluation entry point. Non-finite outputs are left in place; the
/// caller checks `*all_finite` (when provided) to map them to worst-case
/// fitness.
inline std::vector<double> evaluate(const Expr& e, const Matrix& X, bool* all_finite = nullptr) {
    const int maxidx = max_feature_index(e);
    if (maxidx >= 0 && static_cast<std::size_t>(maxidx) >= X.cols())
        throw std::out_of_range("evaluate: feature index out of bounds");
    std::vector<double> out;
    const bool finite = CompiledExpr(e).eval_batch(X, out);
    if (all_finite) *all_finite = finite;
    return out;
}

// ---------------------------------------------------------------------------
// Algebraic simplification: constant folding, additive/multiplicative identity
// elimination, annihilation by zero, and double-negation collapse. Value
// semantics are preserved on the operators' shared domain and parsimony never
// increases.

namespace detail {

inline bool is_const_val(const Expr& e, double v) {
    return e.is_const() && e.value == v;
}

inline bool simplify_once(Expr& e) {
    bool changed = false;
    for (auto& c : e.children) changed |= simplify_once(c);
    if (!e.is_op()) return changed;

    // fold constant-only subtrees when the result is finite
    bool all_const = true;
    for (const auto& c : e.children) all_const &= c.is_const();
    if (all_const) {
        Matrix dummy(1, 1);
        bool finite = false;
        const double v = evaluate(e, dummy, &finite)[0];
        if (finite) {
            e = make_const(v);
            return true;
        }
    }

    if (e.kind == TokenKind::BinaryOp) {
        Expr& a = e.children[0];
        Expr& b = e.children[1];
        switch (e.op) {
        case Op::Add:
            if (is_const_val(b, 0.0)) { e = std::move(a); return true; }
            if (is_const_val(a, 0.0)) { e = std::move(b); return true; }
            break;
        case Op::Sub:
            if (is_const_val(b, 0.0)) { e = std::move(a); return true; }
            // 0 - (0 - x) -> x
            if (is_const_val(a, 0.0) && b.kind == TokenKind::BinaryOp && b.op == Op::Sub &&
                is_const_val(b.children[0], 0.0)) {
                e = std::move(b.children[1]);
                return true;
            }
            break;
        case Op::Mul:
            if (is_const_val(b, 1.0)) { e = std::move(a); return true; }
            if (is_const_val(a, 1.0)) { e = std::move(b); return true; }
            if (is_const_val(a, 0.0) || is_const_val(b, 0.0)) { e = make_const(0.0); return true; }
            break;
        case Op::Div:
            if (is_const_val(b, 1.0)) { e = std::move(a); return true; }
            break;
        default:
            break;
        }
    }
    return changed;
}

} // namespace detail

inline Expr simplify(Expr e) {
    // iterate to a fixpoint; each pass strictly shrinks the tree or stops
    for (int pass = 0; pass < 64; ++pass) {
        if (!detail::simplify_once(e)) break;
    }
    return e;
}

// ---------------------------------------------------------------------------
// Random expression generation. A target size is drawn uniformly from
// {1..max_size} and a tree of exactly that size is built, so every size has
// nonzero probability and every token class can appear.

namespace detail {

inline Expr random_expr_of_size(int size, int d, std::mt19937_64& rng) {
    if (size <= 1) {
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.7 && d >= 1) {
            return make_feature(std::uniform_int_distribution<int>(0, d - 1)(rng));
        }
        std::normal_distribution<double> val(0.0, 2.0);
        return make_const(val(rng));
    }
    if (size == 2 || (size >= 2 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.35)) {
        static constexpr Op unary_ops[] = {Op::Square, Op::Sin, Op::Cos, Op::Exp, Op::Log, Op::Sqrt};
        const Op op = unary_ops[std::uniform_int_distribution<int>(0, 5)(rng)];
        return make_unary(op, random_expr_of_size(size - 1, d, rng));
    }
    static constexpr Op binary_ops[] = {Op::Add, Op::Sub, Op::Mul, Op::Div};
    const Op op = binary_ops[std::uniform_int_distribution<int>(0, 3)(rng)];
    const int left = std::uniform_int_distribution<int>(1, size - 2)(rng);
    Expr lhs = random_expr_of_size(left, d, rng);
    Expr rhs = random_expr_of_size(size - 1 - left, d, rng);
    return make_binary(op, std::move(lhs), std::move(rhs));
}

} // namespace detail

inline Expr random_expr(int d, int max_size, std::mt19937_64& rng) {
    if (d < 1) throw std::invalid_argument("random_expr: need at least one feature");
    if (max_size < 1) throw std::invalid_argument("random_expr: max_size must be >= 1");
    const int size = std::uniform_int_distribution<int>(1, max_size)(rng);
    return detail::random_expr_of_size(size, d, rng);
}

/// Collects pointers to every constant node in left-to-right tree order.
inline void collect_constants(Expr& e, std::vector<Expr*>& out) {
    if (e.is_const()) out.push_back(&e);
    for (auto& c : e.children) collect_constants(c, out);
}

inline std::vector<double> constant_values(const Expr& e) {
    std::vector<double> vals;
    std::vector<Expr*> nodes;
    collect_constants(const_cast<Expr&>(e), nodes);
    vals.reserve(nodes.size());
    for (const Expr* n : nodes) vals.push_back(n->value);
    return vals;
}

inline void set_constant_values(Expr& e, const std::vector<double>& vals) {
    std::vector<Expr*> nodes;
    collect_constants(e, nodes);
    if (nodes.size() != vals.size())
        throw std::invalid_argument("set_constant_values: length mismatch");
    for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i]->value = vals[i];
}

} // namespace sqr
