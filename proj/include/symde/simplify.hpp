#pragma once

#include <cmath>
#include <unordered_map>
#include <vector>

#include "symde/expression.hpp"

namespace symde {

namespace detail {

class BasicSimplifier {
public:
    Expr run(const Expr& e) {
        if (e.is_leaf()) return e;
        if (auto it = memo_.find(e.identity()); it != memo_.end()) return it->second;
        Expr out = simplify_node(e);
        memo_.emplace(e.identity(), out);
        keep_.push_back(e); // keeps the memo key alive
        return out;
    }

private:
    Expr simplify_node(const Expr& e) {
        std::vector<Expr> args;
        args.reserve(e.args().size());
        for (const auto& a : e.args()) args.push_back(run(a));

        switch (e.kind()) {
        case Kind::sum: return make_sum(std::move(args));
        case Kind::product: return make_product(std::move(args));
        case Kind::power: return make_power(args[0], args[1]);
        case Kind::call:
            if (args[0].is_constant()) return Expr::constant(apply_fn(e.fn(), args[0].value()));
            return Expr::call(e.fn(), std::move(args[0]));
        default: return rebuild(e, std::move(args));
        }
    }

    static Expr make_sum(std::vector<Expr> args) {
        std::vector<Expr> terms;
        double c = 0.0;
        bool has_constant = false;
        auto add = [&](const Expr& a) {
            if (a.is_constant()) {
                c += a.value();
                has_constant = true;
            } else {
                terms.push_back(a);
            }
        };
        for (const auto& a : args) {
            if (a.kind() == Kind::sum) {
                for (const auto& inner : a.args()) add(inner);
            } else {
                add(a);
            }
        }
        if (has_constant && c != 0.0) terms.push_back(Expr::constant(c));
        if (terms.empty()) return Expr::constant(0.0);
        return Expr::sum(std::move(terms));
    }

    static Expr make_product(std::vector<Expr> args) {
        std::vector<Expr> factors;
        double c = 1.0;
        auto add = [&](const Expr& a) {
            if (a.is_constant()) {
                c *= a.value();
            } else {
                factors.push_back(a);
            }
        };
        for (const auto& a : args) {
            if (a.kind() == Kind::product) {
                for (const auto& inner : a.args()) add(inner);
            } else {
                add(a);
            }
        }
        if (c == 0.0) return Expr::constant(0.0);
        if (c != 1.0) factors.push_back(Expr::constant(c));
        if (factors.empty()) return Expr::constant(1.0);
        return Expr::product(std::move(factors));
    }

    static Expr make_power(const Expr& base, const Expr& exponent) {
        if (exponent.is_constant(1.0)) return base;
        if (exponent.is_constant(0.0)) return Expr::constant(1.0);
        if (base.is_constant() && exponent.is_constant())
            return Expr::constant(std::pow(base.value(), exponent.value()));
        if (base.is_constant(1.0)) return Expr::constant(1.0);
        if (base.is_constant(0.0) && exponent.is_constant() && exponent.value() > 0.0)
            return Expr::constant(0.0);
        return Expr::power(base, exponent);
    }

    std::unordered_map<const void*, Expr> memo_;
    std::vector<Expr> keep_;
};

} // namespace detail

/// Constant folding, removal of zero summands and unit factors, x*0 -> 0,
/// x^1 -> x, x^0 -> 1 and flattening of nested sums and products. No
/// algebraic rewriting beyond that.
inline Expr simplify_basic(const Expr& e) {
    detail::BasicSimplifier s;
    return s.run(e);
}

inline std::vector<Expr> simplify_basic(const std::vector<Expr>& exprs) {
    detail::BasicSimplifier s;
    std::vector<Expr> out;
    out.reserve(exprs.size());
    for (const auto& e : exprs) out.push_back(s.run(e));
    return out;
}

} // namespace symde
