#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "symde/expression.hpp"

namespace symde {

struct CseResult {
    std::vector<HelperDefinition> defs;
    std::vector<Expr> rewritten;
};

/// Hoists every non-leaf subexpression that occurs at least twice (by
/// structural equality) into a fresh helper named `<prefix><k>`. Definitions
/// come out in dependency order. Occurrences nested inside an already
/// repeated subexpression are counted once, so no helper is created for a
/// node whose only repeats come from its parent being repeated. A constant
/// times a single leaf (a negation, typically) is never hoisted: it costs
/// one instruction wherever it is used.
inline bool cse_candidate(const Expr& e) {
    if (e.is_leaf()) return false;
    if (e.kind() == Kind::product && e.args().size() == 2 && e.args()[0].kind() == Kind::constant &&
        e.args()[1].is_leaf())
        return false;
    return true;
}

inline CseResult eliminate_common_subexpressions(const std::vector<Expr>& exprs, const std::string& prefix = "_cse") {
    std::unordered_map<Expr, std::size_t, ExprHash, ExprEqual> count;
    auto tally = [&](auto& self, const Expr& e) -> void {
        if (e.is_leaf()) return;
        if (cse_candidate(e) && ++count[e] > 1) return;
        for (const auto& a : e.args()) self(self, a);
    };
    for (const auto& e : exprs) tally(tally, e);

    CseResult result;
    std::unordered_map<Expr, Expr, ExprHash, ExprEqual> hoisted;
    std::unordered_map<const void*, Expr> memo;
    std::vector<Expr> keep;

    auto rewrite = [&](auto& self, const Expr& e) -> Expr {
        if (e.is_leaf()) return e;
        if (auto it = hoisted.find(e); it != hoisted.end()) return it->second;
        if (auto it = memo.find(e.identity()); it != memo.end()) return it->second;

        std::vector<Expr> args;
        args.reserve(e.args().size());
        for (const auto& a : e.args()) args.push_back(self(self, a));
        Expr body = rebuild(e, std::move(args));

        auto c = count.find(e);
        if (c != count.end() && c->second >= 2 && cse_candidate(e)) {
            std::string name = prefix + std::to_string(result.defs.size());
            Expr ref = Expr::helper(name);
            result.defs.push_back({std::move(name), std::move(body)});
            hoisted.emplace(e, ref);
            return ref;
        }
        memo.emplace(e.identity(), body);
        keep.push_back(e);
        return body;
    };
    result.rewritten.reserve(exprs.size());
    for (const auto& e : exprs) result.rewritten.push_back(rewrite(rewrite, e));
    return result;
}

} // namespace symde
