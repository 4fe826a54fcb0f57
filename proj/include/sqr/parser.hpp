#pragma once

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "sqr/expr.hpp"

namespace sqr {

struct ParseError : std::runtime_error {
    std::size_t position;
    ParseError(const std::string& msg, std::size_t pos)
        : std::runtime_error(msg + " at position " + std::to_string(pos)), position(pos) {}
};

/// Optional mapping from feature names to column indices. Without a map only
/// the default names x0, x1, ... are accepted.
using NameMap = std::map<std::string, int>;

namespace detail {

// Infix grammar:
//   expr    := term (('+'|'-') term)*
//   term    := power (('*'|'/') power)*
//   power   := primary ('^' '2')*
//   primary := number | '-' primary | name '(' expr ')' | name | '(' expr ')'
class Parser {
public:
    Parser(std::string_view text, const NameMap* names) : text_(text), names_(names) {}

    Expr parse() {
        Expr e = parse_expr();
        skip_ws();
        if (pos_ != text_.size()) throw ParseError("unexpected trailing input", pos_);
        return e;
    }

private:
    Expr parse_expr() {
        Expr lhs = parse_term();
        for (;;) {
            skip_ws();
            if (accept('+')) lhs = make_binary(Op::Add, std::move(lhs), parse_term());
            else if (accept('-')) lhs = make_binary(Op::Sub, std::move(lhs), parse_term());
            else return lhs;
        }
    }

    Expr parse_term() {
        Expr lhs = parse_power();
        for (;;) {
            skip_ws();
            if (accept('*')) lhs = make_binary(Op::Mul, std::move(lhs), parse_power());
            else if (accept('/')) lhs = make_binary(Op::Div, std::move(lhs), parse_power());
            else return lhs;
        }
    }

    Expr parse_power() {
        Expr e = parse_primary();
        for (;;) {
            skip_ws();
            if (pos_ < text_.size() && text_[pos_] == '^') {
                const std::size_t at = pos_;
                ++pos_;
                skip_ws();
                if (!accept('2')) throw ParseError("only '^2' powers are supported", at);
                e = make_unary(Op::Square, std::move(e));
            } else {
                return e;
            }
        }
    }

    Expr parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("unexpected end of input", pos_);
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = parse_expr();
            skip_ws();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return e;
        }
        if (c == '-') {
            ++pos_;
            Expr inner = parse_primary();
            if (inner.is_const()) {
                inner.value = -inner.value;
                return inner;
            }
            return make_binary(Op::Sub, make_const(0.0), std::move(inner));
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }

    Expr parse_number() {
        // copy the candidate region so strtod sees a terminated buffer
        std::size_t len = 0;
        while (pos_ + len < text_.size()) {
            const char ch = text_[pos_ + len];
            if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.' || ch == 'e' ||
                ch == 'E' ||
                ((ch == '+' || ch == '-') && len > 0 &&
                 (text_[pos_ + len - 1] == 'e' || text_[pos_ + len - 1] == 'E')))
                ++len;
            else
                break;
        }
        const std::string buf(text_.substr(pos_, len));
        char* end = nullptr;
        const double v = std::strtod(buf.c_str(), &end);
        if (end == buf.c_str()) throw ParseError("malformed number", pos_);
        pos_ += static_cast<std::size_t>(end - buf.c_str());
        return make_const(v);
    }

    Expr parse_name() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        const std::string name(text_.substr(start, pos_ - start));
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '(') {
            const std::optional<Op> op = unary_by_name(name);
            if (!op) throw ParseError("unknown operator '" + name + "'", start);
            ++pos_;
            Expr arg = parse_expr();
            skip_ws();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return make_unary(*op, std::move(arg));
        }
        return feature_by_name(name, start);
    }

    static std::optional<Op> unary_by_name(const std::string& name) {
        if (name == "sin") return Op::Sin;
        if (name == "cos") return Op::Cos;
        if (name == "exp") return Op::Exp;
        if (name == "log") return Op::Log;
        if (name == "sqrt") return Op::Sqrt;
        if (name == "square") return Op::Square;
        return std::nullopt;
    }

    Expr feature_by_name(const std::string& name, std::size_t at) const {
        if (names_) {
            const auto it = names_->find(name);
            if (it != names_->end()) return make_feature(it->second);
        }
        if (name.size() >= 2 && name[0] == 'x') {
            bool digits = true;
            for (std::size_t i = 1; i < name.size(); ++i)
                digits &= std::isdigit(static_cast<unsigned char>(name[i])) != 0;
            if (digits) return make_feature(std::atoi(name.c_str() + 1));
        }
        throw ParseError("unknown feature name '" + name + "'", at);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string_view text_;
    const NameMap* names_;
    std::size_t pos_ = 0;
};

inline std::string format_constant(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// precedence levels: add/sub 1, mul/div 2, postfix square 3, atoms 4
inline int precedence(const Expr& e) {
    switch (e.kind) {
    case TokenKind::Feature: return 4;
    case TokenKind::Constant: return e.value < 0 ? 1 : 4;
    case TokenKind::UnaryOp: return e.op == Op::Square ? 3 : 4;
    case TokenKind::BinaryOp:
        return (e.op == Op::Add || e.op == Op::Sub) ? 1 : 2;
    }
    return 4;
}

inline void format_rec(const Expr& e, const std::vector<std::string>* names, std::string& out);

inline void format_child(const Expr& child, int parent_prec, bool is_right,
                         const std::vector<std::string>* names, std::string& out) {
    const int cp = precedence(child);
    const bool parens = cp < parent_prec || (cp == parent_prec && is_right);
    if (parens) out += '(';
    format_rec(child, names, out);
    if (parens) out += ')';
}

inline void format_rec(const Expr& e, const std::vector<std::string>* names, std::string& out) {
    switch (e.kind) {
    case TokenKind::Constant:
        out += format_constant(e.value);
        return;
    case TokenKind::Feature:
        if (names && static_cast<std::size_t>(e.feature) < names->size())
            out += (*names)[e.feature];
        else
            out += "x" + std::to_string(e.feature);
        return;
    case TokenKind::UnaryOp:
        if (e.op == Op::Square) {
            format_child(e.children[0], 4, false, names, out);
            out += "^2";
        } else {
            out += op_name(e.op);
            out += '(';
            format_rec(e.children[0], names, out);
            out += ')';
        }
        return;
    case TokenKind::BinaryOp: {
        const int p = precedence(e);
        const char* sym = e.op == Op::Add ? " + " : e.op == Op::Sub ? " - "
                        : e.op == Op::Mul ? "*" : "/";
        format_child(e.children[0], p, false, names, out);
        out += sym;
        format_child(e.children[1], p, true, names, out);
        return;
    }
    }
}

} // namespace detail

inline Expr parse(std::string_view text, const NameMap* names = nullptr) {
    return detail::Parser(text, names).parse();
}

inline std::string format(const Expr& e, const std::vector<std::string>* names = nullptr) {
    std::string out;
    detail::format_rec(e, names, out);
    return out;
}

} // namespace sqr
