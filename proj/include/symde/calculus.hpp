#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "symde/expression.hpp"
#include "symde/simplify.hpp"

namespace symde {

using Substitution = std::unordered_map<Expr, Expr, ExprHash, ExprEqual>;

/// Simultaneous replacement of every node structurally equal to a key. The
/// replacement values are not searched again.
inline Expr substitute(const Expr& e, const Substitution& map) {
    std::unordered_map<const void*, Expr> memo;
    auto go = [&](auto& self, const Expr& node) -> Expr {
        if (auto it = map.find(node); it != map.end()) return it->second;
        if (node.args().empty()) return node;
        if (auto it = memo.find(node.identity()); it != memo.end()) return it->second;
        std::vector<Expr> args;
        args.reserve(node.args().size());
        bool changed = false;
        for (const auto& a : node.args()) {
            args.push_back(self(self, a));
            changed = changed || args.back().identity() != a.identity();
        }
        Expr out = changed ? rebuild(node, std::move(args)) : node;
        memo.emplace(node.identity(), out);
        return out;
    };
    return go(go, e);
}

/// Expands helper references using `helpers` (in definition order) until
/// none of the listed helpers remain.
inline Expr expand_helpers(const Expr& e, const std::vector<HelperDefinition>& helpers) {
    if (helpers.empty()) return e;
    Substitution expanded;
    for (const auto& h : helpers) {
        expanded[Expr::helper(h.name)] = substitute(h.value, expanded);
    }
    return substitute(e, expanded);
}

namespace detail {

class Differentiator {
public:
    Differentiator(Expr wrt, const std::vector<HelperDefinition>* helpers) : wrt_(std::move(wrt)), helpers_(helpers) {
        switch (wrt_.kind()) {
        case Kind::state:
        case Kind::past_state:
        case Kind::parameter: break;
        case Kind::time: throw UsageError("differentiation with respect to time is not supported");
        default: throw UsageError("can only differentiate with respect to a state, delayed state or parameter");
        }
    }

    Expr run(const Expr& e) {
        if (auto it = memo_.find(e.identity()); it != memo_.end()) return it->second;
        Expr d = derive(e);
        memo_.emplace(e.identity(), d);
        keep_.push_back(e);
        return d;
    }

private:
    Expr derive(const Expr& e) {
        switch (e.kind()) {
        case Kind::constant:
        case Kind::time: return Expr::constant(0.0);
        case Kind::state:
        case Kind::past_state:
        case Kind::parameter:
            // A delayed state is atomic here, also when its time argument depends on states.
            return Expr::constant(e == wrt_ ? 1.0 : 0.0);
        case Kind::helper: return derive_helper(e.name());
        case Kind::sum: {
            std::vector<Expr> terms;
            for (const auto& a : e.args()) {
                Expr d = run(a);
                if (!d.is_zero()) terms.push_back(std::move(d));
            }
            return simplify_basic(Expr::sum(std::move(terms)));
        }
        case Kind::product: {
            const auto& f = e.args();
            std::vector<Expr> terms;
            for (std::size_t i = 0; i < f.size(); ++i) {
                Expr d = run(f[i]);
                if (d.is_zero()) continue;
                std::vector<Expr> factors{d};
                for (std::size_t j = 0; j < f.size(); ++j) {
                    if (j != i) factors.push_back(f[j]);
                }
                terms.push_back(Expr::product(std::move(factors)));
            }
            return simplify_basic(Expr::sum(std::move(terms)));
        }
        case Kind::power: {
            const Expr& base = e.args()[0];
            const Expr& exponent = e.args()[1];
            Expr db = run(base);
            Expr de = run(exponent);
            if (de.is_zero()) {
                if (db.is_zero()) return Expr::constant(0.0);
                Expr lowered = simplify_basic(Expr::sum({exponent, Expr::constant(-1.0)}));
                return simplify_basic(Expr::product({exponent, Expr::power(base, lowered), db}));
            }
            // d(b^e) = b^e * (e' log b + e b'/b)
            Expr inner = Expr::sum({Expr::product({de, log(base)}),
                                    Expr::product({exponent, db, Expr::power(base, Expr::constant(-1.0))})});
            return simplify_basic(Expr::product({e, inner}));
        }
        case Kind::call: {
            const Expr& x = e.args()[0];
            Expr dx = run(x);
            if (dx.is_zero()) return Expr::constant(0.0);
            return simplify_basic(Expr::product({outer_derivative(e.fn(), e, x), dx}));
        }
        }
        return Expr::constant(0.0);
    }

    static Expr outer_derivative(Fn fn, const Expr& call, const Expr& x) {
        switch (fn) {
        case Fn::sin: return cos(x);
        case Fn::cos: return -sin(x);
        case Fn::tan: return Expr::sum({Expr::constant(1.0), Expr::power(call, Expr::constant(2.0))});
        case Fn::exp: return call;
        case Fn::log: return Expr::power(x, Expr::constant(-1.0));
        case Fn::sqrt: return Expr::product({Expr::constant(0.5), Expr::power(call, Expr::constant(-1.0))});
        case Fn::sinh: return cosh(x);
        case Fn::cosh: return sinh(x);
        case Fn::tanh: return Expr::sum({Expr::constant(1.0), -Expr::power(call, Expr::constant(2.0))});
        case Fn::abs: return Expr::call(Fn::sign, x); // sign(0) := 0
        case Fn::sign: return Expr::constant(0.0);
        }
        return Expr::constant(0.0);
    }

    Expr derive_helper(const std::string& name) {
        if (auto it = helper_memo_.find(name); it != helper_memo_.end()) return it->second;
        if (helpers_ != nullptr) {
            for (const auto& h : *helpers_) {
                if (h.name == name) {
                    Expr d = run(h.value);
                    helper_memo_.emplace(name, d);
                    return d;
                }
            }
        }
        throw UsageError("cannot differentiate through unknown helper '" + name + "'");
    }

    Expr wrt_;
    const std::vector<HelperDefinition>* helpers_;
    std::unordered_map<const void*, Expr> memo_;
    std::unordered_map<std::string, Expr> helper_memo_;
    std::vector<Expr> keep_;
};

} // namespace detail

/// Partial derivative of `e` with respect to a State, PastState (matched
/// structurally) or Parameter node. Helper references are differentiated
/// through their definitions when `helpers` is given. The result is simplified.
inline Expr differentiate(const Expr& e, const Expr& wrt, const std::vector<HelperDefinition>* helpers = nullptr) {
    detail::Differentiator d(wrt, helpers);
    return simplify_basic(d.run(e));
}

using ExprMatrix = std::vector<std::vector<Expr>>;

/// Entry (k, j) is the derivative of f[k] with respect to state j.
inline ExprMatrix jacobian(const std::vector<Expr>& f, std::size_t n, const std::vector<HelperDefinition>* helpers = nullptr) {
    if (f.size() != n) throw ContractViolation("jacobian: expression count does not match the dimension");
    ExprMatrix jac(n, std::vector<Expr>(n));
    for (std::size_t j = 0; j < n; ++j) {
        detail::Differentiator d(Expr::state(j), helpers);
        for (std::size_t k = 0; k < n; ++k) jac[k][j] = simplify_basic(d.run(f[k]));
    }
    return jac;
}

} // namespace symde
