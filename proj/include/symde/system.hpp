#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "symde/errors.hpp"
#include "symde/expression.hpp"

namespace symde {

enum class Calculus { none, ito, stratonovich };

/// A complete problem statement: dy = f(t, y, y(t - tau)...) dt [+ g(t, y) (.) dW].
struct SystemSpec {
    std::size_t dimension = 0;
    std::vector<Expr> drift;
    /// Diagonal noise intensities; empty unless `calculus` is ito or stratonovich.
    std::vector<Expr> diffusion;
    std::vector<HelperDefinition> helpers;
    /// Names of parameters left symbolic; each becomes a runtime slot.
    std::vector<std::string> parameters;
    Calculus calculus = Calculus::none;

    bool has_diffusion() const noexcept { return !diffusion.empty(); }

    bool uses_past() const {
        auto past = [](const std::vector<Expr>& v) {
            return std::any_of(v.begin(), v.end(), [](const Expr& e) { return contains_past(e); });
        };
        return past(drift) || past(diffusion) ||
               std::any_of(helpers.begin(), helpers.end(), [](const HelperDefinition& h) { return contains_past(h.value); });
    }

    /// Throws ContractViolation unless every invariant holds.
    void validate() const;
};

/// Smallest dimension consistent with the state indices referenced.
inline std::size_t infer_dimension(const std::vector<Expr>& exprs) {
    std::size_t n = 0;
    for (const auto& e : exprs) n = std::max(n, state_extent(e));
    return n;
}

/// Builds a spec from drift expressions. `dimension`, when given, must agree
/// with the number of expressions; it wins over inference.
inline SystemSpec make_ode(std::vector<Expr> drift, std::optional<std::size_t> dimension = std::nullopt,
                           std::vector<HelperDefinition> helpers = {}, std::vector<std::string> parameters = {}) {
    SystemSpec s;
    s.dimension = dimension.value_or(drift.size());
    if (s.dimension != drift.size()) {
        throw ContractViolation("explicit dimension " + std::to_string(s.dimension) + " does not match " +
                                std::to_string(drift.size()) + " drift expressions");
    }
    s.drift = std::move(drift);
    s.helpers = std::move(helpers);
    s.parameters = std::move(parameters);
    s.validate();
    return s;
}

inline SystemSpec make_sde(std::vector<Expr> drift, std::vector<Expr> diffusion, Calculus calculus,
                           std::vector<HelperDefinition> helpers = {}, std::vector<std::string> parameters = {}) {
    SystemSpec s;
    s.dimension = drift.size();
    s.drift = std::move(drift);
    s.diffusion = std::move(diffusion);
    s.helpers = std::move(helpers);
    s.parameters = std::move(parameters);
    s.calculus = calculus;
    s.validate();
    return s;
}

inline void SystemSpec::validate() const {
    if (dimension == 0) throw ContractViolation("system dimension must be positive");
    if (drift.size() != dimension) throw ContractViolation("drift length does not match the dimension");
    if (has_diffusion() != (calculus != Calculus::none))
        throw ContractViolation("diffusion must be present exactly when a noise calculus is set");
    if (has_diffusion() && diffusion.size() != dimension)
        throw ContractViolation("diffusion length does not match the dimension");

    std::set<std::string> known_helpers;
    std::set<std::string> params(parameters.begin(), parameters.end());
    auto check = [&](const Expr& e, const std::string& where) {
        any_node(e, [&](const Expr& node) {
            if ((node.kind() == Kind::state || node.kind() == Kind::past_state) && node.index() >= dimension)
                throw ContractViolation(where + ": state index " + std::to_string(node.index()) +
                                        " out of range for dimension " + std::to_string(dimension));
            if (node.kind() == Kind::parameter && params.count(node.name()) == 0)
                throw ContractViolation(where + ": parameter '" + node.name() + "' is not declared");
            if (node.kind() == Kind::helper && known_helpers.count(node.name()) == 0)
                throw ContractViolation(where + ": helper '" + node.name() + "' is not defined before use");
            return false;
        });
    };
    for (const auto& h : helpers) {
        check(h.value, "helper " + h.name);
        if (!known_helpers.insert(h.name).second) throw ContractViolation("helper '" + h.name + "' defined twice");
    }
    for (std::size_t i = 0; i < drift.size(); ++i) check(drift[i], "drift " + std::to_string(i));
    for (std::size_t i = 0; i < diffusion.size(); ++i) check(diffusion[i], "diffusion " + std::to_string(i));
}

} // namespace symde
