#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "symde/expression.hpp"

namespace symde {

/// Bindings for evaluating an expression directly from its symbolic form.
/// This is the slow reference path used by tests and by the symbolic layer;
/// integrators run lowered programs instead.
struct EvalContext {
    double t = 0.0;
    std::span<const double> y;
    std::function<double(std::size_t index, double time)> past;
    std::unordered_map<std::string, double> parameters;
    std::unordered_map<std::string, double> helpers;
};

inline double evaluate(const Expr& e, const EvalContext& ctx) {
    switch (e.kind()) {
    case Kind::constant: return e.value();
    case Kind::time: return ctx.t;
    case Kind::state:
        if (e.index() >= ctx.y.size()) throw ContractViolation("state index out of range in evaluate");
        return ctx.y[e.index()];
    case Kind::past_state: {
        if (!ctx.past) throw ContractViolation("expression uses a delayed state but no past was supplied");
        return ctx.past(e.index(), evaluate(e.at(), ctx));
    }
    case Kind::parameter: {
        auto it = ctx.parameters.find(e.name());
        if (it == ctx.parameters.end()) throw ContractViolation("unbound parameter '" + e.name() + "'");
        return it->second;
    }
    case Kind::helper: {
        auto it = ctx.helpers.find(e.name());
        if (it == ctx.helpers.end()) throw ContractViolation("unbound helper '" + e.name() + "'");
        return it->second;
    }
    case Kind::sum: {
        double acc = 0.0;
        for (const auto& a : e.args()) acc += evaluate(a, ctx);
        return acc;
    }
    case Kind::product: {
        double acc = 1.0;
        for (const auto& a : e.args()) acc *= evaluate(a, ctx);
        return acc;
    }
    case Kind::power: return std::pow(evaluate(e.args()[0], ctx), evaluate(e.args()[1], ctx));
    case Kind::call: return apply_fn(e.fn(), evaluate(e.args()[0], ctx));
    }
    return 0.0;
}

/// Evaluates helper definitions in order into `ctx.helpers`.
inline void bind_helpers(const std::vector<HelperDefinition>& helpers, EvalContext& ctx) {
    for (const auto& h : helpers) ctx.helpers[h.name] = evaluate(h.value, ctx);
}

} // namespace symde
