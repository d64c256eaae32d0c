#pragma once

// Immutable symbolic expression DAG.
//
// Nodes are reference counted and never mutated after construction, so
// subexpressions are freely shared between expressions and threads. Sum and
// Product children are kept in a canonical order (constants first, then by
// structural hash) which makes structural equality insensitive to the order
// in which terms were written.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "symde/errors.hpp"

namespace symde {

enum class Kind : std::uint8_t {
    constant,
    time,
    state,
    past_state,
    parameter,
    helper,
    sum,
    product,
    power,
    call,
};

/// Elementary functions. `sign` is not user facing in the grammar table below
/// but appears as the derivative of `abs`.
enum class Fn : std::uint8_t { sin, cos, tan, exp, log, sqrt, sinh, cosh, tanh, abs, sign };

inline constexpr std::string_view fn_name(Fn fn) noexcept {
    switch (fn) {
    case Fn::sin: return "sin";
    case Fn::cos: return "cos";
    case Fn::tan: return "tan";
    case Fn::exp: return "exp";
    case Fn::log: return "log";
    case Fn::sqrt: return "sqrt";
    case Fn::sinh: return "sinh";
    case Fn::cosh: return "cosh";
    case Fn::tanh: return "tanh";
    case Fn::abs: return "abs";
    case Fn::sign: return "sign";
    }
    return "?";
}

inline bool fn_from_name(std::string_view name, Fn& out) noexcept {
    for (auto fn : {Fn::sin, Fn::cos, Fn::tan, Fn::exp, Fn::log, Fn::sqrt, Fn::sinh, Fn::cosh,
                    Fn::tanh, Fn::abs, Fn::sign}) {
        if (fn_name(fn) == name) {
            out = fn;
            return true;
        }
    }
    return false;
}

inline double apply_fn(Fn fn, double x) noexcept {
    switch (fn) {
    case Fn::sin: return std::sin(x);
    case Fn::cos: return std::cos(x);
    case Fn::tan: return std::tan(x);
    case Fn::exp: return std::exp(x);
    case Fn::log: return std::log(x);
    case Fn::sqrt: return std::sqrt(x);
    case Fn::sinh: return std::sinh(x);
    case Fn::cosh: return std::cosh(x);
    case Fn::tanh: return std::tanh(x);
    case Fn::abs: return std::fabs(x);
    case Fn::sign: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    }
    return x;
}

class Expr;

namespace detail {

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) noexcept {
    // splitmix64 finaliser applied to a running combination; fixed so that
    // canonical ordering is identical across platforms and runs.
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return h;
}

inline std::uint64_t hash_string(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct Node;

} // namespace detail

class Expr {
public:
    /// The constant zero.
    Expr();
    /// Implicit conversion from numbers keeps builder code readable: `2.0 * y(0)`.
    Expr(double value); // NOLINT(google-explicit-constructor)
    Expr(int value) : Expr(static_cast<double>(value)) {} // NOLINT(google-explicit-constructor)

    static Expr constant(double value);
    static Expr time();
    static Expr state(std::size_t index);
    /// State `index` evaluated at the time given by `at`.
    static Expr past_state(std::size_t index, Expr at);
    static Expr parameter(std::string name);
    static Expr helper(std::string name);
    static Expr sum(std::vector<Expr> terms);
    static Expr product(std::vector<Expr> factors);
    static Expr power(Expr base, Expr exponent);
    static Expr call(Fn fn, Expr arg);

    Kind kind() const noexcept;
    double value() const noexcept;
    std::size_t index() const noexcept;
    const std::string& name() const noexcept;
    Fn fn() const noexcept;
    const std::vector<Expr>& args() const noexcept;
    std::uint64_t hash() const noexcept;

    bool is_constant() const noexcept { return kind() == Kind::constant; }
    bool is_constant(double v) const noexcept { return is_constant() && value() == v; }
    bool is_zero() const noexcept { return is_constant(0.0); }
    /// Leaves carry no operation: constants, time, states, parameters and helper references.
    bool is_leaf() const noexcept {
        switch (kind()) {
        case Kind::constant:
        case Kind::time:
        case Kind::state:
        case Kind::parameter:
        case Kind::helper: return true;
        default: return false;
        }
    }
    /// PastState only: the time expression.
    const Expr& at() const noexcept { return args().front(); }

    const void* identity() const noexcept { return node_.get(); }

    std::string to_string() const;

private:
    explicit Expr(std::shared_ptr<const detail::Node> node) : node_(std::move(node)) {}
    static Expr make(detail::Node node);

    std::shared_ptr<const detail::Node> node_;
};

namespace detail {

struct Node {
    Kind kind = Kind::constant;
    Fn fn = Fn::sin;
    double value = 0.0;
    std::size_t index = 0;
    std::string name;
    std::vector<Expr> args;
    std::uint64_t hash = 0;
};

inline std::uint64_t compute_hash(const Node& n) noexcept {
    std::uint64_t h = mix(0x51ed27aa00000000ULL, static_cast<std::uint64_t>(n.kind));
    switch (n.kind) {
    case Kind::constant: h = mix(h, std::bit_cast<std::uint64_t>(n.value)); break;
    case Kind::state:
    case Kind::past_state: h = mix(h, n.index); break;
    case Kind::parameter:
    case Kind::helper: h = mix(h, hash_string(n.name)); break;
    case Kind::call: h = mix(h, static_cast<std::uint64_t>(n.fn)); break;
    default: break;
    }
    for (const auto& a : n.args) h = mix(h, a.hash());
    return h;
}

} // namespace detail

/// Total structural order. Returns <0, 0, >0. Two expressions compare equal
/// iff they are structurally identical.
inline int compare(const Expr& a, const Expr& b) {
    if (a.identity() == b.identity()) return 0;
    if (a.kind() != b.kind()) return a.kind() < b.kind() ? -1 : 1;
    if (a.hash() != b.hash()) return a.hash() < b.hash() ? -1 : 1;
    switch (a.kind()) {
    case Kind::constant:
        if (a.value() != b.value()) return a.value() < b.value() ? -1 : 1;
        return 0;
    case Kind::time: return 0;
    case Kind::state:
        if (a.index() != b.index()) return a.index() < b.index() ? -1 : 1;
        return 0;
    case Kind::past_state:
        if (a.index() != b.index()) return a.index() < b.index() ? -1 : 1;
        break;
    case Kind::parameter:
    case Kind::helper: return a.name().compare(b.name());
    case Kind::call:
        if (a.fn() != b.fn()) return a.fn() < b.fn() ? -1 : 1;
        break;
    default: break;
    }
    const auto& x = a.args();
    const auto& y = b.args();
    if (x.size() != y.size()) return x.size() < y.size() ? -1 : 1;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (int c = compare(x[i], y[i]); c != 0) return c;
    }
    return 0;
}

inline bool operator==(const Expr& a, const Expr& b) {
    if (a.identity() == b.identity()) return true;
    if (a.hash() != b.hash()) return false;
    return compare(a, b) == 0;
}

inline bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

/// Canonical child order: constants first, then by structural hash.
inline bool canonical_less(const Expr& a, const Expr& b) {
    const bool ca = a.is_constant();
    const bool cb = b.is_constant();
    if (ca != cb) return ca;
    if (ca) return a.value() < b.value();
    if (a.hash() != b.hash()) return a.hash() < b.hash();
    return compare(a, b) < 0;
}

struct ExprHash {
    std::size_t operator()(const Expr& e) const noexcept { return static_cast<std::size_t>(e.hash()); }
};

struct ExprEqual {
    bool operator()(const Expr& a, const Expr& b) const { return a == b; }
};

// ---------------------------------------------------------------------------

inline Expr Expr::make(detail::Node node) {
    node.hash = detail::compute_hash(node);
    return Expr(std::make_shared<const detail::Node>(std::move(node)));
}

inline Expr Expr::constant(double value) {
    detail::Node n;
    n.kind = Kind::constant;
    n.value = value == 0.0 ? 0.0 : value; // fold -0.0
    return make(std::move(n));
}

inline Expr::Expr() : Expr(constant(0.0)) {}
inline Expr::Expr(double value) : Expr(constant(value)) {}

inline Expr Expr::time() {
    detail::Node n;
    n.kind = Kind::time;
    return make(std::move(n));
}

inline Expr Expr::state(std::size_t index) {
    detail::Node n;
    n.kind = Kind::state;
    n.index = index;
    return make(std::move(n));
}

namespace detail {
inline bool subtree_has_past(const Expr& e) {
    if (e.kind() == Kind::past_state) return true;
    return std::any_of(e.args().begin(), e.args().end(), [](const Expr& a) { return subtree_has_past(a); });
}
} // namespace detail

inline Expr Expr::past_state(std::size_t index, Expr at) {
    if (detail::subtree_has_past(at)) {
        throw ContractViolation("delayed state y(" + std::to_string(index) +
                                ", ...) must not contain another delayed state in its time argument");
    }
    detail::Node n;
    n.kind = Kind::past_state;
    n.index = index;
    n.args.push_back(std::move(at));
    return make(std::move(n));
}

inline Expr Expr::parameter(std::string name) {
    detail::Node n;
    n.kind = Kind::parameter;
    n.name = std::move(name);
    return make(std::move(n));
}

inline Expr Expr::helper(std::string name) {
    detail::Node n;
    n.kind = Kind::helper;
    n.name = std::move(name);
    return make(std::move(n));
}

inline Expr Expr::sum(std::vector<Expr> terms) {
    if (terms.empty()) return constant(0.0);
    if (terms.size() == 1) return std::move(terms.front());
    std::sort(terms.begin(), terms.end(), canonical_less);
    detail::Node n;
    n.kind = Kind::sum;
    n.args = std::move(terms);
    return make(std::move(n));
}

inline Expr Expr::product(std::vector<Expr> factors) {
    if (factors.empty()) return constant(1.0);
    if (factors.size() == 1) return std::move(factors.front());
    std::sort(factors.begin(), factors.end(), canonical_less);
    detail::Node n;
    n.kind = Kind::product;
    n.args = std::move(factors);
    return make(std::move(n));
}

inline Expr Expr::power(Expr base, Expr exponent) {
    detail::Node n;
    n.kind = Kind::power;
    n.args.push_back(std::move(base));
    n.args.push_back(std::move(exponent));
    return make(std::move(n));
}

inline Expr Expr::call(Fn fn, Expr arg) {
    detail::Node n;
    n.kind = Kind::call;
    n.fn = fn;
    n.args.push_back(std::move(arg));
    return make(std::move(n));
}

inline Kind Expr::kind() const noexcept { return node_->kind; }
inline double Expr::value() const noexcept { return node_->value; }
inline std::size_t Expr::index() const noexcept { return node_->index; }
inline const std::string& Expr::name() const noexcept { return node_->name; }
inline Fn Expr::fn() const noexcept { return node_->fn; }
inline const std::vector<Expr>& Expr::args() const noexcept { return node_->args; }
inline std::uint64_t Expr::hash() const noexcept { return node_->hash; }

// ---------------------------------------------------------------------------
// Printing. The output is valid input for the text grammar in parser.hpp.

namespace detail {

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline int precedence(const Expr& e) {
    switch (e.kind()) {
    case Kind::sum: return 1;
    case Kind::product: return 2;
    case Kind::power: return 4;
    case Kind::constant: return e.value() < 0 ? 1 : 5;
    default: return 5;
    }
}

inline void print(const Expr& e, std::string& out);

inline void print_wrapped(const Expr& e, int min_prec, std::string& out) {
    if (precedence(e) < min_prec) {
        out += '(';
        print(e, out);
        out += ')';
    } else {
        print(e, out);
    }
}

inline void print(const Expr& e, std::string& out) {
    switch (e.kind()) {
    case Kind::constant: out += format_number(e.value()); break;
    case Kind::time: out += 't'; break;
    case Kind::state: out += "y(" + std::to_string(e.index()) + ")"; break;
    case Kind::past_state:
        out += "y(" + std::to_string(e.index()) + ", ";
        print(e.at(), out);
        out += ')';
        break;
    case Kind::parameter:
    case Kind::helper: out += e.name(); break;
    case Kind::sum:
        for (std::size_t i = 0; i < e.args().size(); ++i) {
            if (i > 0) out += " + ";
            print_wrapped(e.args()[i], 2, out);
        }
        break;
    case Kind::product:
        for (std::size_t i = 0; i < e.args().size(); ++i) {
            if (i > 0) out += '*';
            print_wrapped(e.args()[i], 3, out);
        }
        break;
    case Kind::power:
        print_wrapped(e.args()[0], 5, out);
        out += '^';
        print_wrapped(e.args()[1], 5, out);
        break;
    case Kind::call:
        out += fn_name(e.fn());
        out += '(';
        print(e.args()[0], out);
        out += ')';
        break;
    }
}

} // namespace detail

inline std::string Expr::to_string() const {
    std::string out;
    detail::print(*this, out);
    return out;
}

// ---------------------------------------------------------------------------
// Builder operators. They build raw (unsimplified) nodes; see simplify.hpp.

inline std::ostream& operator<<(std::ostream& os, const Expr& e) { return os << e.to_string(); }

inline Expr operator+(const Expr& a, const Expr& b) { return Expr::sum({a, b}); }
inline Expr operator-(const Expr& a) { return Expr::product({Expr::constant(-1.0), a}); }
inline Expr operator-(const Expr& a, const Expr& b) { return Expr::sum({a, -b}); }
inline Expr operator*(const Expr& a, const Expr& b) { return Expr::product({a, b}); }
inline Expr operator/(const Expr& a, const Expr& b) {
    return Expr::product({a, Expr::power(b, Expr::constant(-1.0))});
}
inline Expr& operator+=(Expr& a, const Expr& b) { return a = a + b; }
inline Expr& operator-=(Expr& a, const Expr& b) { return a = a - b; }
inline Expr& operator*=(Expr& a, const Expr& b) { return a = a * b; }

inline Expr pow(const Expr& base, const Expr& exponent) { return Expr::power(base, exponent); }
inline Expr sin(const Expr& x) { return Expr::call(Fn::sin, x); }
inline Expr cos(const Expr& x) { return Expr::call(Fn::cos, x); }
inline Expr tan(const Expr& x) { return Expr::call(Fn::tan, x); }
inline Expr exp(const Expr& x) { return Expr::call(Fn::exp, x); }
inline Expr log(const Expr& x) { return Expr::call(Fn::log, x); }
inline Expr sqrt(const Expr& x) { return Expr::call(Fn::sqrt, x); }
inline Expr sinh(const Expr& x) { return Expr::call(Fn::sinh, x); }
inline Expr cosh(const Expr& x) { return Expr::call(Fn::cosh, x); }
inline Expr tanh(const Expr& x) { return Expr::call(Fn::tanh, x); }
inline Expr abs(const Expr& x) { return Expr::call(Fn::abs, x); }

/// Short names for building right-hand sides in code.
namespace sym {
inline Expr y(std::size_t i) { return Expr::state(i); }
inline Expr y(std::size_t i, const Expr& at) { return Expr::past_state(i, at); }
inline Expr t() { return Expr::time(); }
inline Expr param(std::string name) { return Expr::parameter(std::move(name)); }
inline Expr helper(std::string name) { return Expr::helper(std::move(name)); }
} // namespace sym

/// A named subexpression computed once per evaluation. Definitions are
/// ordered; a definition may reference only earlier helpers.
struct HelperDefinition {
    std::string name;
    Expr value;
};

// ---------------------------------------------------------------------------
// Traversal utilities.

/// Calls `fn(node)` once per distinct node (by identity), children before parents.
template <class F>
void visit_unique(const Expr& root, F&& fn) {
    std::unordered_set<const void*> seen;
    std::vector<std::pair<Expr, std::size_t>> stack;
    stack.emplace_back(root, 0);
    auto is_seen = [&](const void* p) { return seen.count(p) != 0; };
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node.args().size()) {
            Expr next = node.args()[child++];
            if (!is_seen(next.identity())) stack.emplace_back(std::move(next), 0);
            continue;
        }
        if (!is_seen(node.identity())) {
            seen.insert(node.identity());
            fn(node);
        }
        stack.pop_back();
    }
}

/// True if any node of `e` satisfies `pred`.
template <class Pred>
bool any_node(const Expr& e, Pred&& pred) {
    if (pred(e)) return true;
    for (const auto& a : e.args()) {
        if (any_node(a, pred)) return true;
    }
    return false;
}

/// Same node kind and payload as `e`, with new children.
inline Expr rebuild(const Expr& e, std::vector<Expr> args) {
    switch (e.kind()) {
    case Kind::past_state: return Expr::past_state(e.index(), std::move(args.at(0)));
    case Kind::sum: return Expr::sum(std::move(args));
    case Kind::product: return Expr::product(std::move(args));
    case Kind::power: return Expr::power(std::move(args.at(0)), std::move(args.at(1)));
    case Kind::call: return Expr::call(e.fn(), std::move(args.at(0)));
    default: return e;
    }
}

inline bool contains_past(const Expr& e) { return detail::subtree_has_past(e); }

/// Largest state index referenced (as a current or delayed state) plus one; zero if none.
inline std::size_t state_extent(const Expr& e) {
    std::size_t extent = 0;
    any_node(e, [&](const Expr& n) {
        if (n.kind() == Kind::state || n.kind() == Kind::past_state) extent = std::max(extent, n.index() + 1);
        return false;
    });
    return extent;
}

} // namespace symde
