#pragma once

// Lyapunov exponents by the Benettin procedure: tangent equations derived
// symbolically, integrated next to the main system and orthonormalized at
// regular intervals. DDE tangents are separation functions over the delay
// window, compared through the L2 product of their Hermite interpolants.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "symde/anchors.hpp"
#include "symde/calculus.hpp"
#include "symde/dde.hpp"
#include "symde/errors.hpp"
#include "symde/executable.hpp"
#include "symde/ode.hpp"
#include "symde/rng.hpp"
#include "symde/simplify.hpp"
#include "symde/system.hpp"

namespace symde {

/// A system with m tangent blocks appended: the base occupies [0, base_dimension)
/// and block k occupies [base_dimension + k * tangent_dimension, ... + tangent_dimension).
struct AugmentedSpec {
    SystemSpec spec;
    std::size_t base_dimension = 0;
    std::size_t tangent_dimension = 0;
    std::size_t m = 0;
    std::vector<double> delays;

    std::size_t offset(std::size_t k) const { return base_dimension + k * tangent_dimension; }
};

/// Distinct delayed-state nodes in the expressions, in order of first appearance.
inline std::vector<Expr> collect_past_nodes(const std::vector<Expr>& exprs) {
    std::vector<Expr> out;
    std::unordered_set<Expr, ExprHash, ExprEqual> seen;
    std::unordered_set<const void*> visited;
    auto go = [&](auto& self, const Expr& e) -> void {
        if (!visited.insert(e.identity()).second) return;
        if (e.kind() == Kind::past_state) {
            if (seen.insert(e).second) out.push_back(e);
            return;
        }
        for (const auto& a : e.args()) self(self, a);
    };
    for (const auto& e : exprs) go(go, e);
    return out;
}

/// Rebuilds `e` with every current state y_j replaced by cur(j) and every
/// delayed state y_j(at) by del(j, mapped at).
inline Expr map_states(const Expr& e, const std::function<Expr(std::size_t)>& cur,
                       const std::function<Expr(std::size_t, const Expr&)>& del) {
    std::unordered_map<const void*, Expr> memo;
    auto go = [&](auto& self, const Expr& node) -> Expr {
        if (node.kind() == Kind::state) return cur(node.index());
        if (node.args().empty()) return node;
        if (auto it = memo.find(node.identity()); it != memo.end()) return it->second;
        std::vector<Expr> args;
        args.reserve(node.args().size());
        for (const auto& a : node.args()) args.push_back(self(self, a));
        Expr out = node.kind() == Kind::past_state ? del(node.index(), args[0]) : rebuild(node, std::move(args));
        memo.emplace(node.identity(), out);
        return out;
    };
    return go(go, e);
}

namespace detail {

inline bool is_zero(const Expr& e) { return e.kind() == Kind::constant && e.value() == 0.0; }

/// Directional derivative of f along a tangent: sum_j df/dy_j * z(j) plus,
/// for each delayed node y_j(at), df/dy_j(at) * zpast(j, at). `coefficient`,
/// if given, rewrites each partial derivative before it is multiplied.
inline Expr tangent_expression(const Expr& f, std::size_t n, const std::vector<HelperDefinition>& helpers,
                               const std::function<Expr(std::size_t)>& z,
                               const std::function<Expr(std::size_t, const Expr&)>& zpast,
                               const std::function<Expr(const Expr&)>& coefficient = {}) {
    Expr expanded = expand_helpers(f, helpers);
    std::vector<bool> present(n, false);
    any_node(expanded, [&](const Expr& node) {
        if (node.kind() == Kind::state && node.index() < n) present[node.index()] = true;
        return false;
    });
    std::vector<Expr> terms;
    for (std::size_t j = 0; j < n; ++j) {
        if (!present[j]) continue;
        Expr d = differentiate(f, Expr::state(j), &helpers);
        if (is_zero(d)) continue;
        if (coefficient) d = coefficient(d);
        Expr zj = z(j);
        if (is_zero(zj)) continue;
        terms.push_back(d * zj);
    }
    for (const Expr& p : collect_past_nodes({expanded})) {
        Expr d = differentiate(f, p, &helpers);
        if (is_zero(d)) continue;
        if (coefficient) d = coefficient(d);
        Expr zp = zpast(p.index(), p.args()[0]);
        if (is_zero(zp)) continue;
        terms.push_back(d * zp);
    }
    if (terms.empty()) return Expr(0.0);
    return simplify_basic(Expr::sum(std::move(terms)));
}

} // namespace detail

/// Main system plus m tangent copies. Delayed terms in the drift yield
/// delayed tangent terms at the same delay expressions.
inline AugmentedSpec augment_dde(const SystemSpec& spec, std::vector<double> delays, std::size_t m) {
    spec.validate();
    if (spec.has_diffusion()) throw UsageError("Lyapunov exponents are not available for stochastic systems");
    if (m == 0) throw UsageError("need at least one tangent vector");
    const std::size_t n = spec.dimension;
    AugmentedSpec out;
    out.base_dimension = n;
    out.tangent_dimension = n;
    out.m = m;
    out.delays = std::move(delays);
    out.spec = spec;
    out.spec.dimension = n * (1 + m);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t off = n * (1 + k);
        for (std::size_t i = 0; i < n; ++i) {
            out.spec.drift.push_back(detail::tangent_expression(
                spec.drift[i], n, spec.helpers, [&](std::size_t j) { return Expr::state(off + j); },
                [&](std::size_t j, const Expr& at) { return Expr::past_state(off + j, at); }));
        }
    }
    return out;
}

inline AugmentedSpec augment_ode(const SystemSpec& spec, std::size_t m) {
    if (spec.uses_past()) throw UsageError("system has delayed states; use augment_dde");
    return augment_dde(spec, {}, m);
}

// ---------------------------------------------------------------------------
// Orthonormalization

/// Abstract set of m vectors with a scalar product, for modified Gram-Schmidt.
class TangentSet {
public:
    virtual ~TangentSet() = default;
    virtual std::size_t count() const = 0;
    virtual double dot(std::size_t a, std::size_t b) const = 0;
    /// v_a += c * v_b
    virtual void axpy(std::size_t a, double c, std::size_t b) = 0;
    virtual void scale(std::size_t a, double c) = 0;
    virtual void randomize(std::size_t a, Rng& rng) = 0;
};

/// Modified Gram-Schmidt. Returns r_k, the norm of vector k after removing
/// its projections on the previous ones. A vector with vanishing residual is
/// replaced by a random one orthogonal to its predecessors and reports r = 0.
inline std::vector<double> modified_gram_schmidt(TangentSet& set, Rng& rng,
                                                 std::vector<std::size_t>* replaced = nullptr) {
    const std::size_t m = set.count();
    std::vector<double> r(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        const double before = std::sqrt(std::max(set.dot(k, k), 0.0));
        for (std::size_t l = 0; l < k; ++l) set.axpy(k, -set.dot(k, l), l);
        double norm = std::sqrt(std::max(set.dot(k, k), 0.0));
        if (!std::isfinite(norm) || !std::isfinite(before))
            throw NumericalFailure("tangent norm overflowed; use a shorter sample interval");
        if (norm <= 1e-13 * before || norm == 0.0) {
            if (replaced) replaced->push_back(k);
            for (int attempt = 0; attempt < 10; ++attempt) {
                set.randomize(k, rng);
                for (std::size_t l = 0; l < k; ++l) set.axpy(k, -set.dot(k, l), l);
                double fresh = std::sqrt(std::max(set.dot(k, k), 0.0));
                if (fresh > 1e-8) {
                    set.scale(k, 1.0 / fresh);
                    break;
                }
            }
            r[k] = 0.0;
            continue;
        }
        set.scale(k, 1.0 / norm);
        r[k] = norm;
    }
    return r;
}

class VectorTangents final : public TangentSet {
public:
    explicit VectorTangents(std::vector<std::vector<double>>& v) : v_(&v) {}
    std::size_t count() const override { return v_->size(); }
    double dot(std::size_t a, std::size_t b) const override {
        double s = 0;
        for (std::size_t i = 0; i < (*v_)[a].size(); ++i) s += (*v_)[a][i] * (*v_)[b][i];
        return s;
    }
    void axpy(std::size_t a, double c, std::size_t b) override {
        for (std::size_t i = 0; i < (*v_)[a].size(); ++i) (*v_)[a][i] += c * (*v_)[b][i];
    }
    void scale(std::size_t a, double c) override {
        for (double& x : (*v_)[a]) x *= c;
    }
    void randomize(std::size_t a, Rng& rng) override {
        for (double& x : (*v_)[a]) x = rng.normal();
    }

private:
    std::vector<std::vector<double>>* v_;
};

/// Orthonormalizes the vectors in place with the Euclidean product; returns the r_k.
inline std::vector<double> orthonormalize_vectors(std::vector<std::vector<double>>& vectors, Rng& rng) {
    for (const auto& v : vectors)
        if (v.size() != vectors.front().size()) throw ContractViolation("vectors have different lengths");
    VectorTangents set(vectors);
    return modified_gram_schmidt(set, rng);
}

inline std::vector<double> orthonormalize_vectors(std::vector<std::vector<double>>& vectors) {
    Rng rng(0x5eed);
    return orthonormalize_vectors(vectors, rng);
}

// ---------------------------------------------------------------------------
// Hermite Gram blocks and the window scalar product

using Gram4 = std::array<std::array<double, 4>, 4>;

namespace detail {

// Hermite basis h00, h10, h01, h11 as coefficients of 1, s, s^2, s^3.
inline constexpr double hermite_coeffs[4][4] = {
    {1, 0, -3, 2},
    {0, 1, -2, 1},
    {0, 0, 3, -2},
    {0, 0, -1, 1},
};

} // namespace detail

/// Gram matrix of the Hermite basis over [s0, 1] of the unit interval.
inline Gram4 hermite_gram(double s0 = 0.0) {
    Gram4 g{};
    double tail[7];
    double p = s0;
    for (int k = 0; k < 7; ++k) {
        tail[k] = (1.0 - p) / (k + 1); // integral of s^k over [s0, 1]
        p *= s0;
    }
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            double s = 0;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) s += detail::hermite_coeffs[a][i] * detail::hermite_coeffs[b][j] * tail[i + j];
            g[a][b] = s;
        }
    return g;
}

/// L2 product over [t_start, newest anchor] of the Hermite interpolants of two
/// component blocks of the same length. The interval containing t_start is
/// cut there exactly.
inline double window_scalar_product(const AnchorList& anchors, double t_start, std::span<const std::size_t> v,
                                    std::span<const std::size_t> w) {
    if (v.size() != w.size()) throw ContractViolation("scalar product of blocks with different sizes");
    const std::size_t dim = anchors.dimension();
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] >= dim || w[i] >= dim) throw ContractViolation("scalar product block index out of range");
    if (anchors.size() < 2) throw ContractViolation("window needs at least two anchors");
    if (t_start < anchors.front().t) throw PastUnderflow("window starts before the earliest anchor");
    static const Gram4 full = hermite_gram(0.0);
    double total = 0.0;
    for (auto it = anchors.begin(); std::next(it) != anchors.end(); ++it) {
        const Anchor& a0 = *it;
        const Anchor& a1 = *std::next(it);
        if (a1.t <= t_start) continue;
        const double width = a1.t - a0.t;
        Gram4 partial;
        const Gram4* g = &full;
        if (a0.t < t_start) {
            partial = hermite_gram((t_start - a0.t) / width);
            g = &partial;
        }
        const auto& s0 = left_slope(a0);
        double acc = 0.0;
        for (std::size_t c = 0; c < v.size(); ++c) {
            const double cv[4] = {a0.y[v[c]], width * s0[v[c]], a1.y[v[c]], width * a1.dy[v[c]]};
            const double cw[4] = {a0.y[w[c]], width * s0[w[c]], a1.y[w[c]], width * a1.dy[w[c]]};
            for (int i = 0; i < 4; ++i) {
                double row = 0;
                for (int j = 0; j < 4; ++j) row += (*g)[i][j] * cw[j];
                acc += cv[i] * row;
            }
        }
        total += width * acc;
    }
    return total;
}

/// Tangent blocks stored in an anchor list, as separation functions over
/// the window [t_start, newest anchor]. Linear combinations act on every anchor.
class WindowTangents final : public TangentSet {
public:
    WindowTangents(AnchorList& anchors, double t_start, std::size_t offset, std::size_t block, std::size_t m)
        : anchors_(&anchors), t_start_(t_start), m_(m) {
        idx_.resize(m);
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t i = 0; i < block; ++i) idx_[k].push_back(offset + k * block + i);
    }
    std::size_t count() const override { return m_; }
    double dot(std::size_t a, std::size_t b) const override {
        return window_scalar_product(*anchors_, t_start_, idx_[a], idx_[b]);
    }
    void axpy(std::size_t a, double c, std::size_t b) override {
        for (Anchor& an : *anchors_) {
            for (std::size_t i = 0; i < idx_[a].size(); ++i) {
                an.y[idx_[a][i]] += c * an.y[idx_[b][i]];
                an.dy[idx_[a][i]] += c * an.dy[idx_[b][i]];
                if (!an.dy_right.empty()) an.dy_right[idx_[a][i]] += c * an.dy_right[idx_[b][i]];
            }
        }
    }
    void scale(std::size_t a, double c) override {
        for (Anchor& an : *anchors_) {
            for (std::size_t i : idx_[a]) {
                an.y[i] *= c;
                an.dy[i] *= c;
                if (!an.dy_right.empty()) an.dy_right[i] *= c;
            }
        }
    }
    // Independent random values at every anchor, zero slopes.
    void randomize(std::size_t a, Rng& rng) override {
        for (Anchor& an : *anchors_) {
            for (std::size_t i = 0; i < idx_[a].size(); ++i) {
                an.y[idx_[a][i]] = rng.normal();
                an.dy[idx_[a][i]] = 0.0;
                if (!an.dy_right.empty()) an.dy_right[idx_[a][i]] = 0.0;
            }
        }
    }

private:
    AnchorList* anchors_;
    double t_start_;
    std::size_t m_;
    std::vector<std::vector<std::size_t>> idx_;
};

// ---------------------------------------------------------------------------
// Benettin runs

struct LyapunovSample {
    double t = 0.0;
    std::vector<double> local;
    double weight = 0.0;
};

namespace detail {

inline std::vector<double> local_exponents(const std::vector<double>& r, double delta) {
    if (!(delta > 0.0)) throw ContractViolation("orthonormalization interval must be positive");
    std::vector<double> out;
    for (double v : r) {
        if (!(v > 0.0) || !std::isfinite(v) || v > 1e250 || v < 1e-250)
            throw NumericalFailure("tangent norm over- or underflowed (r = " + std::to_string(v) +
                                   "); use a shorter sample interval");
        out.push_back(std::log(v) / delta);
    }
    return out;
}

} // namespace detail

/// Lyapunov run for an augmented ODE. Tangents start as random orthonormal vectors.
class OdeLyapunov {
public:
    OdeLyapunov(const ExecutableSystem& exec, std::size_t base_dimension, std::size_t tangent_dimension, std::size_t m,
                std::vector<double> y0, double t0, std::uint64_t seed, OdeOptions options = {},
                std::vector<double> params = {})
        : n_(base_dimension), d_(tangent_dimension), m_(m), rng_(seed),
          stepper_(exec, initial(std::move(y0), exec.dimension), t0, options, std::move(params)) {}

    OdeLyapunov(const ExecutableSystem& exec, const AugmentedSpec& aug, std::vector<double> y0, double t0,
                std::uint64_t seed, OdeOptions options = {}, std::vector<double> params = {})
        : OdeLyapunov(exec, aug.base_dimension, aug.tangent_dimension, aug.m, std::move(y0), t0, seed, options,
                      std::move(params)) {}

    double t() const { return stepper_.t(); }
    OdeStepper& stepper() { return stepper_; }

    /// Integrates by `interval`, orthonormalizes and returns the local exponents.
    LyapunovSample step(double interval) {
        const double start = stepper_.t();
        stepper_.integrate_to(start + interval);
        const double delta = stepper_.t() - start;
        auto vecs = vectors_raw();
        auto r = orthonormalize_vectors(vecs, rng_);
        store(vecs);
        return {stepper_.t(), detail::local_exponents(r, delta), delta};
    }

    /// The current orthonormal tangent vectors.
    std::vector<std::vector<double>> vectors() const { return vectors_raw(); }

private:
    std::vector<double> initial(std::vector<double> y0, std::size_t total) {
        if (y0.size() == n_) {
            std::vector<std::vector<double>> v(m_, std::vector<double>(d_));
            for (auto& x : v)
                for (double& c : x) c = rng_.normal();
            orthonormalize_vectors(v, rng_);
            for (auto& x : v) y0.insert(y0.end(), x.begin(), x.end());
        }
        if (y0.size() != total) throw ContractViolation("initial state has the wrong dimension");
        return y0;
    }

    std::vector<std::vector<double>> vectors_raw() const {
        std::vector<std::vector<double>> v(m_);
        for (std::size_t k = 0; k < m_; ++k) {
            auto first = stepper_.y().begin() + static_cast<std::ptrdiff_t>(n_ + k * d_);
            v[k].assign(first, first + static_cast<std::ptrdiff_t>(d_));
        }
        return v;
    }

    void store(const std::vector<std::vector<double>>& v) {
        std::vector<double> y = stepper_.y();
        for (std::size_t k = 0; k < m_; ++k) std::copy(v[k].begin(), v[k].end(), y.begin() + static_cast<std::ptrdiff_t>(n_ + k * d_));
        stepper_.set_state(y);
    }

    std::size_t n_, d_, m_;
    Rng rng_;
    OdeStepper stepper_;
};

/// Lyapunov run for an augmented DDE. `past` covers the base components only;
/// tangent pasts start random, orthonormalized over the window.
class DdeLyapunov {
public:
    DdeLyapunov(const ExecutableSystem& exec, std::size_t base_dimension, std::size_t tangent_dimension,
                std::size_t m, const AnchorList& past, double max_delay, std::uint64_t seed, DdeOptions options = {},
                std::vector<double> params = {})
        : n_(base_dimension), d_(tangent_dimension), m_(m), rng_(seed),
          stepper_(exec, initial(past, exec.dimension, max_delay), max_delay, options, std::move(params)) {
        orthonormalize();
        stepper_.refresh();
    }

    DdeLyapunov(const ExecutableSystem& exec, const AugmentedSpec& aug, const AnchorList& past, double max_delay,
                std::uint64_t seed, DdeOptions options = {}, std::vector<double> params = {})
        : DdeLyapunov(exec, aug.base_dimension, aug.tangent_dimension, aug.m, past, max_delay, seed, options,
                      std::move(params)) {}

    double t() const { return stepper_.t(); }
    DdeStepper& stepper() { return stepper_; }

    /// Advances with natural steps until at least `interval` has passed; the
    /// weight is the exact time covered.
    LyapunovSample step(double interval) {
        const double start = stepper_.t();
        stepper_.advance_past(start + interval);
        const double delta = stepper_.t() - start;
        auto r = orthonormalize();
        stepper_.refresh();
        return {stepper_.t(), detail::local_exponents(r, delta), delta};
    }

    /// Steps without orthonormalizing, for blind or discontinuity-aware starts.
    std::vector<double> orthonormalize() {
        WindowTangents set(stepper_.anchors(), window_start(), n_, d_, m_);
        return modified_gram_schmidt(set, rng_);
    }

    double window_start() const {
        double w = stepper_.t() - stepper_.max_delay();
        // A zero-length window (no delay) degenerates; use the last interval.
        if (stepper_.max_delay() == 0.0) w = std::prev(stepper_.anchors().end(), 2)->t;
        return std::max(w, stepper_.anchors().front().t);
    }

private:
    // Tangent pasts are random values on a grid that refines the base past, so
    // that more tangents than base components can start linearly independent.
    AnchorList initial(const AnchorList& past, std::size_t total, double) {
        if (past.dimension() != n_) throw ContractViolation("initial past must cover the base components only");
        const double lo = past.front().t, hi = past.back().t;
        const std::size_t grid = std::max<std::size_t>(8, 2 * m_);
        std::vector<Anchor> base;
        for (auto it = past.begin(); it != past.end(); ++it) {
            base.push_back(*it);
            auto next = std::next(it);
            if (next == past.end()) break;
            for (std::size_t g = 1; g < grid; ++g) {
                const double t = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid);
                if (t <= it->t || t >= next->t) continue;
                auto v = hermite_interpolate(*it, *next, t);
                base.push_back({t, v.y, v.dy, {}});
            }
        }
        AnchorList out;
        for (Anchor& a : base) {
            Anchor b{a.t, a.y, a.dy, a.dy_right};
            for (std::size_t c = 0; c < m_ * d_; ++c) {
                b.y.push_back(rng_.normal());
                b.dy.push_back(0.0);
                if (!b.dy_right.empty()) b.dy_right.push_back(0.0);
            }
            if (b.y.size() != total) throw ContractViolation("augmented dimension mismatch");
            out.append(std::move(b));
        }
        return out;
    }

    std::size_t n_, d_, m_;
    Rng rng_;
    DdeStepper stepper_;
};

// ---------------------------------------------------------------------------
// Transversal exponents

using Matrix = std::vector<std::vector<double>>;

/// Rows: the sum coordinate, then the chain differences z_{k-1} - z_k.
inline Matrix transversal_matrix(std::size_t s) {
    if (s < 2) throw UsageError("a synchronized group needs at least two members");
    Matrix a(s, std::vector<double>(s, 0.0));
    for (std::size_t j = 0; j < s; ++j) a[0][j] = 1.0;
    for (std::size_t k = 1; k < s; ++k) {
        a[k][k - 1] = 1.0;
        a[k][k] = -1.0;
    }
    return a;
}

/// Inverse of transversal_matrix(s): entry (j, 0) = 1/s, (j, k) = (s-k)/s - [k <= j].
inline Matrix transversal_inverse(std::size_t s) {
    if (s < 2) throw UsageError("a synchronized group needs at least two members");
    Matrix b(s, std::vector<double>(s, 0.0));
    const double ds = static_cast<double>(s);
    for (std::size_t j = 0; j < s; ++j) {
        b[j][0] = 1.0 / ds;
        for (std::size_t k = 1; k < s; ++k)
            b[j][k] = static_cast<double>(s - k) / ds - (k <= j ? 1.0 : 0.0);
    }
    return b;
}

struct TransversalSystem {
    AugmentedSpec augmented;
    std::vector<std::vector<std::size_t>> groups;
    /// Full index -> index of its representative in the reduced main system.
    std::vector<std::size_t> reduced_index;
    /// Reduced index -> full index of the representative.
    std::vector<std::size_t> representatives;

    /// Reduced initial state from a full one (representatives' values).
    std::vector<double> reduce(std::span<const double> full) const {
        std::vector<double> out;
        for (std::size_t r : representatives) out.push_back(full[r]);
        return out;
    }
};

/// Main system restricted to the synchronization manifold (every group member
/// replaced by the group's first member) plus m copies of the tangent dynamics
/// in transversal difference coordinates; the sum coordinate of each group and
/// the tangents of ungrouped variables are pinned to zero.
inline TransversalSystem transversal_setup(const SystemSpec& spec, const std::vector<std::vector<std::size_t>>& groups,
                                           std::size_t m = 1, std::vector<double> delays = {}) {
    spec.validate();
    if (spec.has_diffusion()) throw UsageError("transversal exponents are not available for stochastic systems");
    if (m == 0) throw UsageError("need at least one tangent vector");
    const std::size_t n = spec.dimension;
    std::vector<long> group_of(n, -1), pos_in_group(n, -1);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].size() < 2) throw UsageError("group " + std::to_string(g) + " has fewer than two members");
        for (std::size_t p = 0; p < groups[g].size(); ++p) {
            const std::size_t i = groups[g][p];
            if (i >= n) throw UsageError("group member " + std::to_string(i) + " is out of range");
            if (group_of[i] >= 0) throw UsageError("component " + std::to_string(i) + " belongs to two groups");
            group_of[i] = static_cast<long>(g);
            pos_in_group[i] = static_cast<long>(p);
        }
    }

    TransversalSystem out;
    out.groups = groups;
    out.reduced_index.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (group_of[i] < 0 || pos_in_group[i] == 0) {
            out.reduced_index[i] = out.representatives.size();
            out.representatives.push_back(i);
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (group_of[i] >= 0) out.reduced_index[i] = out.reduced_index[groups[static_cast<std::size_t>(group_of[i])][0]];

    const std::size_t nr = out.representatives.size();
    std::size_t nt = 0;
    std::vector<std::size_t> coord_base(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        coord_base[g] = nt;
        nt += groups[g].size() - 1;
    }
    if (nt == 0) throw UsageError("no transversal directions: give at least one group");

    auto sync_cur = [&](std::size_t j) { return Expr::state(out.reduced_index.at(j)); };
    auto sync_del = [&](std::size_t j, const Expr& at) { return Expr::past_state(out.reduced_index.at(j), at); };
    auto sync = [&](const Expr& e) { return map_states(e, sync_cur, sync_del); };

    AugmentedSpec& aug = out.augmented;
    aug.base_dimension = nr;
    aug.tangent_dimension = nt;
    aug.m = m;
    aug.delays = std::move(delays);
    aug.spec.parameters = spec.parameters;
    aug.spec.calculus = Calculus::none;
    for (const auto& h : spec.helpers) aug.spec.helpers.push_back({h.name, sync(h.value)});
    aug.spec.dimension = nr + m * nt;
    for (std::size_t r : out.representatives) aug.spec.drift.push_back(simplify_basic(sync(spec.drift[r])));

    // z_l in terms of the transversal coordinates of copy c (zero if ungrouped).
    auto z_of = [&](std::size_t c, std::size_t l, const Expr* at) -> Expr {
        if (group_of[l] < 0) return Expr(0.0);
        const auto g = static_cast<std::size_t>(group_of[l]);
        const std::size_t s = groups[g].size();
        const Matrix inv = transversal_inverse(s);
        std::vector<Expr> terms;
        for (std::size_t k = 1; k < s; ++k) {
            const double coef = inv[static_cast<std::size_t>(pos_in_group[l])][k];
            if (coef == 0.0) continue;
            const std::size_t idx = nr + c * nt + coord_base[g] + k - 1;
            terms.push_back(Expr(coef) * (at ? Expr::past_state(idx, *at) : Expr::state(idx)));
        }
        return terms.empty() ? Expr(0.0) : Expr::sum(std::move(terms));
    };

    for (std::size_t c = 0; c < m; ++c) {
        // Tangent derivative of each grouped component, on the manifold.
        std::vector<Expr> zdot(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (group_of[i] < 0) continue;
            zdot[i] = detail::tangent_expression(
                spec.drift[i], n, spec.helpers, [&](std::size_t l) { return z_of(c, l, nullptr); },
                [&](std::size_t l, const Expr& at) {
                    const Expr mapped = sync(at);
                    return z_of(c, l, &mapped);
                },
                sync);
        }
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const Matrix a = transversal_matrix(groups[g].size());
            for (std::size_t k = 1; k < groups[g].size(); ++k) {
                std::vector<Expr> terms;
                for (std::size_t p = 0; p < groups[g].size(); ++p)
                    if (a[k][p] != 0.0) terms.push_back(Expr(a[k][p]) * zdot[groups[g][p]]);
                aug.spec.drift.push_back(simplify_basic(Expr::sum(std::move(terms))));
            }
        }
    }
    aug.spec.validate();
    return out;
}

} // namespace symde
