#pragma once

// Plain-text model files with INI-like sections:
//
//   [system]      dimension, calculus (none|ito|stratonovich), noise (auto|general|additive), max_delay
//   [parameters]  name = value, or name = ? for a parameter bound at run time
//   [helpers]     name = expr, in dependency order
//   [drift]       i = expr, or bare expressions in index order
//   [diffusion]   same as drift; diagonal noise intensities
//   [delays]      one constant expression per line (or comma separated)
//   [groups]      one group of synchronized indices per line
//   [initial]     state = v0, v1, ...   t0 = value
//   [jumps]       rate = expr, and i = expr amplitudes that may use xi ~ N(0,1) and u ~ U(0,1)
//
// '#' starts a comment.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "symde/calculus.hpp"
#include "symde/errors.hpp"
#include "symde/evaluate.hpp"
#include "symde/expression.hpp"
#include "symde/parser.hpp"
#include "symde/sde.hpp"
#include "symde/simplify.hpp"
#include "symde/system.hpp"

namespace symde {

struct ModelParameter {
    std::string name;
    std::optional<double> value; // empty: bound at run time
};

struct JumpModel {
    Expr rate;
    std::vector<Expr> amplitude; // per component; missing components do not jump
};

struct ModelFile {
    std::string source;
    std::size_t dimension = 0;
    Calculus calculus = Calculus::none;
    std::optional<NoiseKind> noise; // empty: detect
    std::optional<double> max_delay;
    std::vector<ModelParameter> parameters;
    std::vector<HelperDefinition> helpers;
    std::vector<Expr> drift;
    std::vector<Expr> diffusion;
    std::vector<Expr> delays;
    std::vector<std::vector<std::size_t>> groups;
    std::vector<Expr> initial;
    Expr t0 = 0.0;
    std::optional<JumpModel> jumps;

    bool is_stochastic() const { return !diffusion.empty(); }
    bool has_parameter(const std::string& n) const {
        return std::any_of(parameters.begin(), parameters.end(), [&](const ModelParameter& p) { return p.name == n; });
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t depth = 0, start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i < s.size() && s[i] == '(') ++depth;
        if (i < s.size() && s[i] == ')' && depth > 0) --depth;
        if (i == s.size() || (s[i] == ',' && depth == 0)) {
            auto part = trim(s.substr(start, i - start));
            if (!part.empty()) out.push_back(part);
            start = i + 1;
        }
    }
    return out;
}

inline std::optional<std::size_t> parse_index(std::string_view s) {
    s = trim(s);
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size()) return std::nullopt;
    return v;
}

inline bool valid_name(std::string_view s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

} // namespace detail

/// Parses model text. Errors carry the line and column of the offending text.
inline ModelFile parse_model(std::string_view text, std::string source = "<model>") {
    ModelFile m;
    m.source = std::move(source);
    std::string section;
    std::unordered_set<std::string> helper_names;
    std::map<std::size_t, Expr> drift, diffusion, amplitude;
    std::optional<Expr> rate;
    std::size_t drift_next = 0, diffusion_next = 0;
    std::optional<std::size_t> dimension;
    bool have_calculus = false;

    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view raw = text.substr(pos, eol - pos);
        const std::size_t line_start = pos;
        pos = eol + 1;
        ++line_no;
        if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        std::string_view line = detail::trim(raw);
        if (line.empty()) {
            if (eol == text.size()) break;
            continue;
        }
        auto col_of = [&](std::string_view part) {
            return static_cast<std::size_t>(part.data() - text.data()) - line_start + 1;
        };
        auto fail = [&](const std::string& msg, std::string_view at) -> ParseError {
            return ParseError(m.source + ": " + msg, line_no, col_of(at));
        };
        auto expr = [&](std::string_view s) {
            ParseOptions opt;
            opt.helpers = helper_names;
            opt.line = line_no;
            opt.column = col_of(s);
            try {
                return parse_expression(s, opt);
            } catch (const ParseError& e) {
                throw ParseError(m.source + ": " + e.what(), e.line(), e.column());
            }
        };

        if (line.front() == '[') {
            if (line.back() != ']') throw fail("unterminated section header", line);
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            static const std::vector<std::string> known = {"system", "parameters", "helpers", "drift", "diffusion",
                                                           "delays", "groups", "initial", "jumps"};
            if (std::find(known.begin(), known.end(), section) == known.end())
                throw fail("unknown section [" + section + "]", line);
            continue;
        }
        if (section.empty()) throw fail("content before the first section", line);

        const std::size_t eq = line.find('=');
        std::string_view key = eq == std::string_view::npos ? std::string_view{} : detail::trim(line.substr(0, eq));
        std::string_view value = eq == std::string_view::npos ? line : detail::trim(line.substr(eq + 1));

        if (section == "system") {
            if (eq == std::string_view::npos) throw fail("expected key = value", line);
            if (key == "dimension") {
                auto d = detail::parse_index(value);
                if (!d || *d == 0) throw fail("dimension must be a positive integer", value);
                dimension = *d;
            } else if (key == "calculus") {
                have_calculus = true;
                if (value == "ito") m.calculus = Calculus::ito;
                else if (value == "stratonovich") m.calculus = Calculus::stratonovich;
                else if (value == "none") m.calculus = Calculus::none;
                else throw fail("calculus must be none, ito or stratonovich", value);
            } else if (key == "noise") {
                if (value == "general") m.noise = NoiseKind::general;
                else if (value == "additive") m.noise = NoiseKind::additive;
                else if (value != "auto") throw fail("noise must be auto, general or additive", value);
            } else if (key == "max_delay") {
                auto v = detail::parse_number(value);
                if (!v || *v < 0) throw fail("max_delay must be a non-negative number", value);
                m.max_delay = *v;
            } else if (key != "name") {
                throw fail("unknown key '" + std::string(key) + "'", key);
            }
        } else if (section == "parameters") {
            if (eq == std::string_view::npos || !detail::valid_name(key)) throw fail("expected name = value", line);
            if (m.has_parameter(std::string(key))) throw fail("parameter declared twice", key);
            if (key == "t" || key == "y" || key == "xi" || key == "u") throw fail("reserved name", key);
            ModelParameter p{std::string(key), std::nullopt};
            if (value != "?") {
                auto v = detail::parse_number(value);
                if (!v) throw fail("parameter value must be a number or ?", value);
                p.value = *v;
            }
            m.parameters.push_back(std::move(p));
        } else if (section == "helpers") {
            if (eq == std::string_view::npos || !detail::valid_name(key)) throw fail("expected name = expression", line);
            if (helper_names.count(std::string(key)) || m.has_parameter(std::string(key)))
                throw fail("name already in use", key);
            m.helpers.push_back({std::string(key), expr(value)});
            helper_names.insert(std::string(key));
        } else if (section == "drift" || section == "diffusion" || (section == "jumps" && key != "rate")) {
            auto& target = section == "drift" ? drift : section == "diffusion" ? diffusion : amplitude;
            auto& next = section == "drift" ? drift_next : diffusion_next;
            std::size_t index = next;
            if (eq != std::string_view::npos) {
                auto i = detail::parse_index(key);
                if (!i) throw fail("expected a component index before '='", key);
                index = *i;
            } else if (section == "jumps") {
                throw fail("jump amplitudes need an index: i = expression", line);
            }
            if (target.count(index)) throw fail("component " + std::to_string(index) + " given twice", line);
            target.emplace(index, expr(value));
            next = index + 1;
        } else if (section == "jumps") {
            rate = expr(value);
        } else if (section == "delays") {
            for (auto part : detail::split_list(line)) m.delays.push_back(expr(part));
        } else if (section == "groups") {
            std::vector<std::size_t> g;
            std::string_view rest = line;
            while (!rest.empty()) {
                std::size_t cut = rest.find_first_of(" \t,");
                std::string_view tok = rest.substr(0, cut);
                rest = cut == std::string_view::npos ? std::string_view{} : detail::trim(rest.substr(cut + 1));
                if (tok.empty()) continue;
                auto i = detail::parse_index(tok);
                if (!i) throw fail("group members must be indices", tok);
                g.push_back(*i);
            }
            m.groups.push_back(std::move(g));
        } else if (section == "initial") {
            if (key == "state") {
                for (auto part : detail::split_list(value)) m.initial.push_back(expr(part));
            } else if (key == "t0") {
                m.t0 = expr(value);
            } else if (key == "past") {
                if (value != "constant") throw fail("only a constant initial past is supported", value);
            } else {
                throw fail("expected state = ..., t0 = ... or past = constant", line);
            }
        }
        if (eol == text.size()) break;
    }

    auto collect = [&](std::map<std::size_t, Expr>& parts, const char* what, std::size_t n) {
        std::vector<Expr> out(n, Expr(0.0));
        for (auto& [i, e] : parts) {
            if (i >= n)
                throw ParseError(m.source + ": " + what + " component " + std::to_string(i) + " exceeds dimension " +
                                     std::to_string(n),
                                 line_no, 1);
            out[i] = e;
        }
        return out;
    };
    std::size_t n = dimension.value_or(drift.empty() ? 0 : drift.rbegin()->first + 1);
    if (n == 0) throw ParseError(m.source + ": model has no [drift] section", line_no, 1);
    if (drift.size() != n)
        throw ParseError(m.source + ": [drift] must define every component 0.." + std::to_string(n - 1), line_no, 1);
    m.dimension = n;
    m.drift = collect(drift, "drift", n);
    if (!diffusion.empty()) {
        m.diffusion = collect(diffusion, "diffusion", n);
        if (!have_calculus) m.calculus = Calculus::ito;
        if (m.calculus == Calculus::none)
            throw ParseError(m.source + ": a [diffusion] section needs calculus = ito or stratonovich", line_no, 1);
    } else if (m.calculus != Calculus::none) {
        throw ParseError(m.source + ": calculus given but no [diffusion] section", line_no, 1);
    }
    if (rate) m.jumps = JumpModel{*rate, collect(amplitude, "jump", n)};
    else if (!amplitude.empty()) throw ParseError(m.source + ": jump amplitudes given without a rate", line_no, 1);
    if (!m.initial.empty() && m.initial.size() != n)
        throw ParseError(m.source + ": initial state has " + std::to_string(m.initial.size()) + " values, expected " +
                             std::to_string(n),
                         line_no, 1);
    return m;
}

inline ModelFile load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str(), path);
}

/// A model with parameter values fixed: known values are folded in as
/// constants, parameters bound at run time stay symbolic slots.
struct BoundModel {
    SystemSpec spec;
    /// Values for spec.parameters, in order.
    std::vector<double> runtime_values;
    std::vector<double> delays;
    double max_delay = 0.0;
    std::vector<std::vector<std::size_t>> groups;
    std::vector<double> initial;
    double t0 = 0.0;
    std::optional<NoiseKind> noise;
    std::optional<JumpModel> jumps;
    std::unordered_map<std::string, double> values; // every parameter with a value
};

/// Binds parameters. `overrides` replace file values and supply run-time
/// parameters; with `allow_unbound` parameters without any value remain
/// slots with value NaN (for compiling).
inline BoundModel bind_model(const ModelFile& m, const std::map<std::string, double>& overrides = {},
                             bool allow_unbound = false) {
    for (const auto& [name, v] : overrides) {
        (void)v;
        if (!m.has_parameter(name)) throw UsageError("model has no parameter '" + name + "'");
    }
    BoundModel b;
    Substitution fold;
    for (const auto& p : m.parameters) {
        auto it = overrides.find(p.name);
        if (!p.value) {
            // Declared with '?': always a runtime slot.
            b.spec.parameters.push_back(p.name);
            if (it != overrides.end()) {
                b.runtime_values.push_back(it->second);
                b.values[p.name] = it->second;
            } else if (allow_unbound) {
                b.runtime_values.push_back(std::numeric_limits<double>::quiet_NaN());
            } else {
                throw UsageError("parameter '" + p.name + "' has no value; pass --param " + p.name + "=VALUE");
            }
            continue;
        }
        const double v = it != overrides.end() ? it->second : *p.value;
        b.values[p.name] = v;
        fold.emplace(Expr::parameter(p.name), Expr(v));
    }
    auto apply = [&](const Expr& e) { return simplify_basic(substitute(e, fold)); };
    auto constant = [&](const Expr& e, const std::string& what) {
        EvalContext ctx;
        ctx.parameters = b.values;
        if (contains_past(e) || any_node(e, [](const Expr& x) {
                return x.kind() == Kind::state || x.kind() == Kind::time || x.kind() == Kind::helper;
            }))
            throw UsageError(what + " must be a constant expression");
        try {
            return evaluate(e, ctx);
        } catch (const ContractViolation& ex) {
            throw UsageError(what + ": " + ex.what());
        }
    };

    b.spec.dimension = m.dimension;
    b.spec.calculus = m.calculus;
    for (const auto& h : m.helpers) b.spec.helpers.push_back({h.name, apply(h.value)});
    for (const auto& e : m.drift) b.spec.drift.push_back(apply(e));
    for (const auto& e : m.diffusion) b.spec.diffusion.push_back(apply(e));
    try {
        b.spec.validate();
    } catch (const ContractViolation& e) {
        throw UsageError(m.source + ": " + e.what());
    }
    if (b.spec.calculus == Calculus::stratonovich) b.spec = stratonovich_to_ito(b.spec);

    for (const auto& d : m.delays) {
        const double v = constant(d, "delay");
        if (!(v >= 0) || !std::isfinite(v)) throw UsageError("delays must be finite and non-negative");
        b.delays.push_back(v);
    }
    if (b.delays.empty() && b.spec.uses_past()) {
        // Infer constant delays t - tau from the expressions when none are listed.
        std::vector<Expr> all = b.spec.drift;
        for (const auto& h : b.spec.helpers) all.push_back(h.value);
        std::set<double> found;
        bool variable = false;
        for (const auto& e : all) {
            any_node(e, [&](const Expr& x) {
                if (x.kind() == Kind::past_state) {
                    Expr lag = simplify_basic(Expr::time() - x.at());
                    if (lag.kind() == Kind::constant) found.insert(lag.value());
                    else variable = true;
                }
                return false;
            });
        }
        if (variable && !m.max_delay)
            throw UsageError("delays depend on time or state; give max_delay in [system] and run with --blind");
        b.delays.assign(found.begin(), found.end());
    }
    b.max_delay = m.max_delay.value_or(b.delays.empty() ? 0.0 : *std::max_element(b.delays.begin(), b.delays.end()));
    b.groups = m.groups;
    for (const auto& e : m.initial) b.initial.push_back(constant(e, "initial value"));
    if (b.initial.empty()) b.initial.assign(m.dimension, 0.0);
    b.t0 = constant(m.t0, "t0");
    b.noise = m.noise;
    if (m.jumps) {
        JumpModel j;
        j.rate = apply(m.jumps->rate);
        for (const auto& e : m.jumps->amplitude) j.amplitude.push_back(apply(e));
        b.jumps = std::move(j);
    }
    return b;
}

/// Jump sampler for a bound model: the amplitude expressions are evaluated
/// with fresh xi ~ N(0, 1) and u ~ U(0, 1) per jump.
inline JumpSpec jump_spec(const BoundModel& b) {
    if (!b.jumps) return {};
    EvalContext ctx;
    ctx.parameters = b.values;
    JumpSpec spec;
    try {
        spec.rate = evaluate(b.jumps->rate, ctx);
    } catch (const ContractViolation& e) {
        throw UsageError(std::string("jump rate: ") + e.what());
    }
    auto amplitude = b.jumps->amplitude;
    auto values = b.values;
    spec.amplitude = [amplitude, values](double t, const std::vector<double>& y, Rng& rng) {
        EvalContext c;
        c.t = t;
        c.y = y;
        c.parameters = values;
        c.parameters["xi"] = rng.normal();
        c.parameters["u"] = rng.uniform();
        std::vector<double> out;
        out.reserve(amplitude.size());
        for (const auto& e : amplitude) out.push_back(evaluate(e, c));
        return out;
    };
    return spec;
}

} // namespace symde
