#pragma once

// Scalar expressions over a declared variable set: parsing, evaluation and
// exact symbolic partial differentiation.
//
// Grammar, loosest to tightest binding:
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?          right associative
//   primary := number | name | func '(' expr ')' | '(' expr ')'
// Exponents must fold to integer constants; negative ones become divisions.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deltavar/error.hpp"

namespace deltavar {

class VarSet {
public:
    VarSet(std::initializer_list<std::string> names) : VarSet(std::vector<std::string>(names)) {}

    explicit VarSet(std::vector<std::string> names) : names_(std::move(names)) {
        if (names_.empty()) {
            throw Error(ErrorCode::InvalidArgument, "variable set must not be empty");
        }
        std::set<std::string> seen;
        for (const auto& n : names_) {
            if (!seen.insert(n).second) {
                throw Error(ErrorCode::InvalidArgument, "duplicate variable name '" + n + "'");
            }
        }
    }

    /// u1, ..., un
    static VarSet numbered(std::string_view prefix, std::size_t n) {
        std::vector<std::string> names;
        for (std::size_t i = 1; i <= n; ++i) {
            names.push_back(std::string(prefix) + std::to_string(i));
        }
        return VarSet(std::move(names));
    }

    std::size_t size() const { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    std::optional<std::size_t> index_of(std::string_view name) const {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == name) return i;
        }
        return std::nullopt;
    }
    bool operator==(const VarSet&) const = default;

private:
    std::vector<std::string> names_;
};

enum class Func { Sin, Cos, Exp, Log, Sqrt };

inline std::string_view func_name(Func f) {
    switch (f) {
        case Func::Sin: return "sin";
        case Func::Cos: return "cos";
        case Func::Exp: return "exp";
        case Func::Log: return "log";
        case Func::Sqrt: return "sqrt";
    }
    return "?";
}

inline std::optional<Func> func_from_name(std::string_view name) {
    for (Func f : {Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt}) {
        if (func_name(f) == name) return f;
    }
    return std::nullopt;
}

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
    enum class Kind { Constant, Variable, Negate, Add, Sub, Mul, Div, Power, Call };

    Kind kind = Kind::Constant;
    double value = 0.0;     // Constant
    std::size_t var = 0;    // Variable
    int exponent = 0;       // Power, always >= 2 after folding
    Func func = Func::Sin;  // Call
    NodePtr lhs;            // operand of unary nodes, base of Power
    NodePtr rhs;
};

/// Smart constructors. They fold constants and apply the 0/1 identities;
/// nothing else is simplified.
namespace build {

inline NodePtr make(Node n) { return std::make_shared<const Node>(std::move(n)); }

inline NodePtr constant(double v) {
    Node n;
    n.kind = Node::Kind::Constant;
    n.value = v;
    return make(std::move(n));
}

inline NodePtr variable(std::size_t index) {
    Node n;
    n.kind = Node::Kind::Variable;
    n.var = index;
    return make(std::move(n));
}

inline bool is_const(const NodePtr& p) { return p->kind == Node::Kind::Constant; }
inline bool is_const(const NodePtr& p, double v) { return is_const(p) && p->value == v; }

inline NodePtr negate(NodePtr a) {
    if (is_const(a)) return constant(-a->value);
    if (a->kind == Node::Kind::Negate) return a->lhs;
    Node n;
    n.kind = Node::Kind::Negate;
    n.lhs = std::move(a);
    return make(std::move(n));
}

inline NodePtr binary(Node::Kind kind, NodePtr a, NodePtr b) {
    Node n;
    n.kind = kind;
    n.lhs = std::move(a);
    n.rhs = std::move(b);
    return make(std::move(n));
}

inline NodePtr add(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return constant(a->value + b->value);
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    return binary(Node::Kind::Add, std::move(a), std::move(b));
}

inline NodePtr sub(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return constant(a->value - b->value);
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return negate(std::move(b));
    return binary(Node::Kind::Sub, std::move(a), std::move(b));
}

inline NodePtr mul(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b)) return constant(a->value * b->value);
    if (is_const(a, 0.0) || is_const(b, 0.0)) return constant(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    return binary(Node::Kind::Mul, std::move(a), std::move(b));
}

inline NodePtr div(NodePtr a, NodePtr b) {
    if (is_const(a) && is_const(b) && b->value != 0.0) return constant(a->value / b->value);
    if (is_const(b, 1.0)) return a;
    if (is_const(a, 0.0) && !is_const(b, 0.0)) return constant(0.0);
    return binary(Node::Kind::Div, std::move(a), std::move(b));
}

inline NodePtr power(NodePtr base, int exponent) {
    if (exponent < 0) return div(constant(1.0), power(std::move(base), -exponent));
    if (exponent == 0) return constant(1.0);
    if (exponent == 1) return base;
    if (is_const(base)) {
        const double v = std::pow(base->value, exponent);
        if (std::isfinite(v)) return constant(v);
    }
    Node n;
    n.kind = Node::Kind::Power;
    n.lhs = std::move(base);
    n.exponent = exponent;
    return make(std::move(n));
}

inline double apply(Func f, double x) {
    switch (f) {
        case Func::Sin: return std::sin(x);
        case Func::Cos: return std::cos(x);
        case Func::Exp: return std::exp(x);
        case Func::Log: return std::log(x);
        case Func::Sqrt: return std::sqrt(x);
    }
    return x;
}

inline NodePtr call(Func f, NodePtr arg) {
    if (is_const(arg)) {
        const bool in_domain = (f != Func::Log || arg->value > 0.0) && (f != Func::Sqrt || arg->value >= 0.0);
        if (in_domain) {
            const double v = apply(f, arg->value);
            if (std::isfinite(v)) return constant(v);
        }
    }
    Node n;
    n.kind = Node::Kind::Call;
    n.func = f;
    n.lhs = std::move(arg);
    return make(std::move(n));
}

}  // namespace build

struct EvalOptions {
    /// Divisions with |den| < denominator_epsilon * (1 + |num|) fail. Zero
    /// means only an exact zero fails.
    double denominator_epsilon = 0.0;
};

namespace detail {

inline bool structurally_equal(const NodePtr& a, const NodePtr& b) {
    if (a == b) return true;
    if (!a || !b || a->kind != b->kind) return false;
    switch (a->kind) {
        case Node::Kind::Constant: return a->value == b->value;
        case Node::Kind::Variable: return a->var == b->var;
        case Node::Kind::Power:
            return a->exponent == b->exponent && structurally_equal(a->lhs, b->lhs);
        case Node::Kind::Call: return a->func == b->func && structurally_equal(a->lhs, b->lhs);
        case Node::Kind::Negate: return structurally_equal(a->lhs, b->lhs);
        default: return structurally_equal(a->lhs, b->lhs) && structurally_equal(a->rhs, b->rhs);
    }
}

inline std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline int precedence(const NodePtr& n) {
    switch (n->kind) {
        case Node::Kind::Add:
        case Node::Kind::Sub: return 1;
        case Node::Kind::Mul:
        case Node::Kind::Div: return 2;
        case Node::Kind::Negate: return 3;
        case Node::Kind::Power: return 4;
        case Node::Kind::Constant: return n->value < 0.0 || std::signbit(n->value) ? 3 : 5;
        default: return 5;
    }
}

inline void print(const NodePtr& n, const VarSet& vars, int min_prec, std::string& out) {
    const bool parens = precedence(n) < min_prec;
    if (parens) out += '(';
    switch (n->kind) {
        case Node::Kind::Constant: out += format_number(n->value); break;
        case Node::Kind::Variable: out += vars.name(n->var); break;
        case Node::Kind::Negate:
            out += '-';
            print(n->lhs, vars, 3, out);
            break;
        case Node::Kind::Add:
        case Node::Kind::Sub:
            print(n->lhs, vars, 1, out);
            out += n->kind == Node::Kind::Add ? " + " : " - ";
            print(n->rhs, vars, 2, out);
            break;
        case Node::Kind::Mul:
        case Node::Kind::Div:
            print(n->lhs, vars, 2, out);
            out += n->kind == Node::Kind::Mul ? "*" : "/";
            print(n->rhs, vars, 3, out);
            break;
        case Node::Kind::Power:
            print(n->lhs, vars, 5, out);
            out += '^';
            out += std::to_string(n->exponent);
            break;
        case Node::Kind::Call:
            out += func_name(n->func);
            out += '(';
            print(n->lhs, vars, 0, out);
            out += ')';
            break;
    }
    if (parens) out += ')';
}

inline std::string print(const NodePtr& n, const VarSet& vars) {
    std::string out;
    print(n, vars, 0, out);
    return out;
}

inline double eval(const NodePtr& n, std::span<const double> x, const VarSet& vars, const EvalOptions& opt) {
    switch (n->kind) {
        case Node::Kind::Constant: return n->value;
        case Node::Kind::Variable: return x[n->var];
        case Node::Kind::Negate: return -eval(n->lhs, x, vars, opt);
        case Node::Kind::Add: return eval(n->lhs, x, vars, opt) + eval(n->rhs, x, vars, opt);
        case Node::Kind::Sub: return eval(n->lhs, x, vars, opt) - eval(n->rhs, x, vars, opt);
        case Node::Kind::Mul: return eval(n->lhs, x, vars, opt) * eval(n->rhs, x, vars, opt);
        case Node::Kind::Div: {
            const double num = eval(n->lhs, x, vars, opt);
            const double den = eval(n->rhs, x, vars, opt);
            if (den == 0.0 || std::abs(den) < opt.denominator_epsilon * (1.0 + std::abs(num))) {
                throw Error(ErrorCode::DivisionByZero, "denominator " + format_number(den) + " in '" +
                                                           print(n, vars) + "'");
            }
            return num / den;
        }
        case Node::Kind::Power: {
            const double b = eval(n->lhs, x, vars, opt);
            double r = 1.0;
            for (int k = 0; k < n->exponent; ++k) r *= b;
            return r;
        }
        case Node::Kind::Call: {
            const double a = eval(n->lhs, x, vars, opt);
            if ((n->func == Func::Log && !(a > 0.0)) || (n->func == Func::Sqrt && a < 0.0)) {
                throw Error(ErrorCode::DomainError, std::string(func_name(n->func)) + " of " + format_number(a) +
                                                        " in '" + print(n, vars) + "'");
            }
            return build::apply(n->func, a);
        }
    }
    return 0.0;
}

inline NodePtr diff(const NodePtr& n, std::size_t var) {
    using namespace build;
    switch (n->kind) {
        case Node::Kind::Constant: return constant(0.0);
        case Node::Kind::Variable: return constant(n->var == var ? 1.0 : 0.0);
        case Node::Kind::Negate: return negate(diff(n->lhs, var));
        case Node::Kind::Add: return add(diff(n->lhs, var), diff(n->rhs, var));
        case Node::Kind::Sub: return sub(diff(n->lhs, var), diff(n->rhs, var));
        case Node::Kind::Mul:
            return add(mul(diff(n->lhs, var), n->rhs), mul(n->lhs, diff(n->rhs, var)));
        case Node::Kind::Div: {
            auto da = diff(n->lhs, var);
            auto db = diff(n->rhs, var);
            if (is_const(db, 0.0)) return div(da, n->rhs);
            return div(sub(mul(da, n->rhs), mul(n->lhs, db)), power(n->rhs, 2));
        }
        case Node::Kind::Power:
            return mul(mul(constant(n->exponent), power(n->lhs, n->exponent - 1)), diff(n->lhs, var));
        case Node::Kind::Call: {
            auto da = diff(n->lhs, var);
            switch (n->func) {
                case Func::Sin: return mul(call(Func::Cos, n->lhs), da);
                case Func::Cos: return mul(negate(call(Func::Sin, n->lhs)), da);
                case Func::Exp: return mul(call(Func::Exp, n->lhs), da);
                case Func::Log: return div(da, n->lhs);
                case Func::Sqrt: return div(da, mul(constant(2.0), call(Func::Sqrt, n->lhs)));
            }
        }
    }
    return constant(0.0);
}

inline void collect_variables(const NodePtr& n, std::set<std::size_t>& out) {
    if (!n) return;
    if (n->kind == Node::Kind::Variable) out.insert(n->var);
    collect_variables(n->lhs, out);
    collect_variables(n->rhs, out);
}

class Parser {
public:
    Parser(std::string_view text, const VarSet& vars) : text_(text), vars_(vars) {}

    NodePtr parse() {
        auto e = parse_expr();
        skip_space();
        if (pos_ != text_.size()) {
            fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        }
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& what, ErrorCode code = ErrorCode::SyntaxError) const {
        throw Error(code, what + " at position " + std::to_string(pos_) + " in '" + std::string(text_) + "'", pos_);
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr parse_expr() {
        auto lhs = parse_term();
        for (;;) {
            if (accept('+')) {
                lhs = build::add(lhs, parse_term());
            } else if (accept('-')) {
                lhs = build::sub(lhs, parse_term());
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_term() {
        auto lhs = parse_unary();
        for (;;) {
            if (accept('*')) {
                lhs = build::mul(lhs, parse_unary());
            } else if (accept('/')) {
                lhs = build::div(lhs, parse_unary());
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_unary() {
        if (accept('-')) return build::negate(parse_unary());
        if (accept('+')) return parse_unary();
        return parse_power();
    }

    NodePtr parse_power() {
        auto base = parse_primary();
        if (!accept('^')) return base;
        const std::size_t at = pos_;
        auto exponent = parse_unary();
        if (!build::is_const(exponent) || exponent->value != std::floor(exponent->value) ||
            std::abs(exponent->value) > 1e6) {
            pos_ = at;
            fail("exponent must be an integer literal", ErrorCode::NonIntegerExponent);
        }
        return build::power(base, static_cast<int>(exponent->value));
    }

    NodePtr parse_primary() {
        skip_space();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        const char c = text_[pos_];
        if (accept('(')) {
            auto e = parse_expr();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
        fail("unexpected '" + std::string(1, c) + "'");
    }

    NodePtr parse_number() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.')) {
            ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t p = pos_ + 1;
            if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) ++p;
            if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
                pos_ = p;
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            }
        }
        const std::string literal(text_.substr(start, pos_ - start));
        char* end = nullptr;
        const double v = std::strtod(literal.c_str(), &end);
        if (end != literal.c_str() + literal.size()) {
            pos_ = start;
            fail("malformed number '" + literal + "'");
        }
        return build::constant(v);
    }

    NodePtr parse_name() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            ++pos_;
        }
        const std::string name(text_.substr(start, pos_ - start));
        skip_space();
        const bool is_call = pos_ < text_.size() && text_[pos_] == '(';
        if (auto f = func_from_name(name)) {
            if (!accept('(')) fail("expected '(' after " + name);
            auto arg = parse_expr();
            if (!accept(')')) fail("expected ')'");
            return build::call(*f, arg);
        }
        if (is_call) {
            pos_ = start;
            fail("unknown function '" + name + "'", ErrorCode::UnknownFunction);
        }
        if (auto idx = vars_.index_of(name)) return build::variable(*idx);
        pos_ = start;
        fail("unknown variable '" + name + "'", ErrorCode::UnknownVariable);
    }

    std::string_view text_;
    const VarSet& vars_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Immutable expression bound to its variable set. Cheap to copy.
class Expr {
public:
    Expr(NodePtr root, std::shared_ptr<const VarSet> vars) : root_(std::move(root)), vars_(std::move(vars)) {}

    static Expr parse(std::string_view text, const VarSet& vars) {
        auto shared = std::make_shared<const VarSet>(vars);
        detail::Parser p(text, *shared);
        return Expr(p.parse(), std::move(shared));
    }

    static Expr constant(double v, const VarSet& vars) {
        return Expr(build::constant(v), std::make_shared<const VarSet>(vars));
    }

    /// `values[i]` binds variable i of `vars()`.
    double eval(std::span<const double> values, const EvalOptions& opt = {}) const {
        if (values.size() < vars_->size()) {
            throw Error(ErrorCode::InvalidArgument, "missing variable bindings");
        }
        return detail::eval(root_, values, *vars_, opt);
    }

    double eval(const std::map<std::string, double>& bindings, const EvalOptions& opt = {}) const {
        std::vector<double> values(vars_->size(), 0.0);
        std::set<std::size_t> used;
        detail::collect_variables(root_, used);
        for (std::size_t i : used) {
            auto it = bindings.find(vars_->name(i));
            if (it == bindings.end()) {
                throw Error(ErrorCode::InvalidArgument, "no binding for '" + vars_->name(i) + "'");
            }
            values[i] = it->second;
        }
        return detail::eval(root_, values, *vars_, opt);
    }

    Expr diff(std::string_view var) const {
        auto idx = vars_->index_of(var);
        if (!idx) {
            throw Error(ErrorCode::UnknownVariable, "'" + std::string(var) + "' is not declared");
        }
        return diff(*idx);
    }

    Expr diff(std::size_t var) const { return Expr(detail::diff(root_, var), vars_); }

    std::string to_string() const { return detail::print(root_, *vars_); }

    bool structurally_equal(const Expr& other) const { return detail::structurally_equal(root_, other.root_); }

    std::optional<double> constant_value() const {
        if (root_->kind == Node::Kind::Constant) return root_->value;
        return std::nullopt;
    }
    bool is_zero() const { return build::is_const(root_, 0.0); }

    /// Indices of variables the expression actually references.
    std::set<std::size_t> used_variables() const {
        std::set<std::size_t> out;
        detail::collect_variables(root_, out);
        return out;
    }

    const NodePtr& root() const { return root_; }
    const VarSet& vars() const { return *vars_; }

private:
    NodePtr root_;
    std::shared_ptr<const VarSet> vars_;
};

inline Expr parse(std::string_view text, const VarSet& vars) { return Expr::parse(text, vars); }

/// Variables of inner integrands f(t, y, v): y stands for x^sigma, v for x^Delta.
inline const VarSet& integrand_vars() {
    static const VarSet vars{"t", "y", "v"};
    return vars;
}

}  // namespace deltavar
