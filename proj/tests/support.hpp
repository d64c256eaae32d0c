#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "symde/symde.hpp"

namespace testing_support {

using namespace symde;

// Random expressions over states y0..y(n-1) and parameter a, built only from
// operations that are smooth everywhere (log and sqrt get a positive argument).
inline Expr random_expr(Rng& rng, std::size_t n, int depth) {
    if (depth <= 0 || rng.uniform() < 0.2) {
        double u = rng.uniform();
        if (u < 0.6) return Expr::state(rng.below(n));
        if (u < 0.8) return Expr::constant(std::round(rng.uniform(-3, 3) * 4) / 4);
        return Expr::parameter("a");
    }
    switch (rng.below(9)) {
    case 0:
    case 1: return random_expr(rng, n, depth - 1) + random_expr(rng, n, depth - 1);
    case 2: return random_expr(rng, n, depth - 1) - random_expr(rng, n, depth - 1);
    case 3:
    case 4: return random_expr(rng, n, depth - 1) * random_expr(rng, n, depth - 1);
    case 5: return sin(random_expr(rng, n, depth - 1));
    case 6: return tanh(random_expr(rng, n, depth - 1));
    case 7: {
        Expr x = random_expr(rng, n, depth - 1);
        return log(1.0 + x * x);
    }
    default: {
        Expr x = random_expr(rng, n, depth - 1);
        return pow(x, Expr::constant(static_cast<double>(1 + rng.below(3))));
    }
    }
}

inline std::vector<double> random_point(Rng& rng, std::size_t n, double lo = -1.5, double hi = 1.5) {
    std::vector<double> y(n);
    for (auto& v : y) v = rng.uniform(lo, hi);
    return y;
}

inline double eval_at(const Expr& e, const std::vector<double>& y, double a = 0.7) {
    EvalContext ctx;
    ctx.y = y;
    ctx.parameters["a"] = a;
    return evaluate(e, ctx);
}

inline std::string models_dir() { return SYMDE_MODELS_DIR; }

} // namespace testing_support
