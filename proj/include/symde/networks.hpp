#pragma once

// Generators for network systems: random Kuramoto oscillators and two-level
// small-world FitzHugh-Nagumo networks.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "symde/errors.hpp"
#include "symde/expression.hpp"
#include "symde/rng.hpp"
#include "symde/system.hpp"

namespace symde {

struct KuramotoNetwork {
    SystemSpec spec;
    std::vector<double> omega;
    /// in_edges[i] lists every j with an edge j -> i, ascending.
    std::vector<std::vector<std::size_t>> in_edges;
    std::size_t edges = 0;
    std::vector<double> initial;
};

/// dy_i/dt = omega_i + c/(n-1) * sum_{j: A_ji = 1} sin(y_j - y_i) with each
/// directed edge j -> i (j != i) present independently with probability q.
/// Eigenfrequencies are drawn first and sorted, then the adjacency row by
/// row, then initial phases uniform on [0, 2 pi).
inline KuramotoNetwork gen_kuramoto(std::size_t n, double c, double q, std::uint64_t seed) {
    if (n < 2) throw UsageError("a Kuramoto network needs at least two oscillators");
    if (!(q >= 0.0 && q <= 1.0)) throw UsageError("edge probability must lie in [0, 1]");
    Rng rng(seed);
    KuramotoNetwork net;
    net.omega.resize(n);
    for (auto& w : net.omega) w = rng.uniform(-0.5, 0.5);
    std::sort(net.omega.begin(), net.omega.end());

    net.in_edges.assign(n, {});
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i == j) continue;
            if (rng.uniform() < q) {
                net.in_edges[i].push_back(j);
                ++net.edges;
            }
        }
    }
    for (auto& row : net.in_edges) std::sort(row.begin(), row.end());

    net.initial.resize(n);
    for (auto& v : net.initial) v = rng.uniform(0.0, 2.0 * std::numbers::pi);

    const double coupling = c / static_cast<double>(n - 1);
    std::vector<Expr> drift;
    drift.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Expr> terms;
        terms.reserve(net.in_edges[i].size());
        for (std::size_t j : net.in_edges[i]) terms.push_back(sin(Expr::state(j) - Expr::state(i)));
        if (terms.empty()) {
            drift.push_back(Expr::constant(net.omega[i]));
        } else {
            drift.push_back(Expr::constant(net.omega[i]) + coupling * Expr::sum(std::move(terms)));
        }
    }
    net.spec = make_ode(std::move(drift), n);
    return net;
}

/// Undirected small-world graph on an L x L torus: every node is linked to its
/// M nearest lattice neighbours, ordered by Chebyshev ring, then Euclidean
/// distance, then lexicographically, taken in +/- offset pairs; afterwards
/// each edge (i, j), i < j, is rewired with probability p to (i, k) for a
/// uniformly chosen k that is neither i nor a current neighbour of i.
inline std::vector<std::vector<std::size_t>> gen_smallworld(std::size_t L, std::size_t M, double p, Rng& rng) {
    const std::size_t N = L * L;
    if (L < 2) throw UsageError("lattice side must be at least 2");
    if (M % 2 != 0 || M == 0) throw UsageError("neighbour count M must be even and positive");
    if (M >= N) throw UsageError("neighbour count M must be below the node count");

    using Offset = std::pair<long, long>;
    std::vector<Offset> offsets;
    const long reach = static_cast<long>(L);
    for (long dx = -reach; dx <= reach; ++dx)
        for (long dy = -reach; dy <= reach; ++dy)
            if (dx != 0 || dy != 0) offsets.emplace_back(dx, dy);
    std::sort(offsets.begin(), offsets.end(), [](const Offset& a, const Offset& b) {
        auto key = [](const Offset& o) {
            long ring = std::max(std::labs(o.first), std::labs(o.second));
            return std::make_tuple(ring, o.first * o.first + o.second * o.second, o.first, o.second);
        };
        return key(a) < key(b);
    });

    std::vector<std::set<std::size_t>> adj(N);
    auto wrap = [&](long v) { return static_cast<std::size_t>(((v % reach) + reach) % reach); };
    std::set<Offset> chosen;
    for (const auto& o : offsets) {
        if (chosen.size() >= M) break;
        if (chosen.count(o)) continue;
        chosen.insert(o);
        chosen.insert({-o.first, -o.second});
    }
    for (std::size_t x = 0; x < L; ++x) {
        for (std::size_t y = 0; y < L; ++y) {
            std::size_t i = x * L + y;
            for (const auto& [dx, dy] : chosen) {
                std::size_t j = wrap(static_cast<long>(x) + dx) * L + wrap(static_cast<long>(y) + dy);
                if (j != i) {
                    adj[i].insert(j);
                    adj[j].insert(i);
                }
            }
        }
    }

    if (p > 0.0) {
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j : adj[i])
                if (i < j) edges.emplace_back(i, j);
        for (const auto& [i, j] : edges) {
            if (rng.uniform() >= p) continue;
            if (adj[i].size() + 1 >= N) continue;
            std::size_t k;
            do {
                k = rng.below(N);
            } while (k == i || adj[i].count(k));
            adj[i].erase(j);
            adj[j].erase(i);
            adj[i].insert(k);
            adj[k].insert(i);
        }
    }

    std::vector<std::vector<std::size_t>> out(N);
    for (std::size_t i = 0; i < N; ++i) out[i].assign(adj[i].begin(), adj[i].end());
    return out;
}

struct SmallWorldFhn {
    SystemSpec spec;
    std::size_t nodes = 0; // per subnetwork
    std::vector<std::vector<std::size_t>> adjacency;
    std::vector<std::vector<double>> b; // b[q][i]
    std::vector<double> initial;

    std::size_t X(std::size_t i, std::size_t q) const { return 2 * q * nodes + i; }
    std::size_t Y(std::size_t i, std::size_t q) const { return (2 * q + 1) * nodes + i; }
};

struct SmallWorldFhnOptions {
    double a = -0.0276;
    double c = 0.02;
    double b_low = 0.006;
    double b_high = 0.014;
    std::size_t subnets = 2;
};

/// Identical small-world subnetworks of FitzHugh-Nagumo units coupled
/// completely through their mean fields S_r (one helper per subnetwork) with
/// strength k_B/N, where k_B is left as a runtime parameter.
/// State layout: X of subnet 0, Y of subnet 0, X of subnet 1, Y of subnet 1, ...
inline SmallWorldFhn gen_smallworld_fhn(std::size_t L, std::size_t M, double p, double k_W, std::uint64_t seed,
                                        const SmallWorldFhnOptions& opt = {}) {
    if (opt.subnets < 1) throw UsageError("need at least one subnetwork");
    Rng rng(seed);
    SmallWorldFhn net;
    net.nodes = L * L;
    const std::size_t N = net.nodes;
    net.adjacency = gen_smallworld(L, M, p, rng);
    net.b.assign(opt.subnets, std::vector<double>(N));
    for (auto& bq : net.b)
        for (auto& v : bq) v = rng.uniform(opt.b_low, opt.b_high);
    net.initial.resize(2 * N * opt.subnets);
    for (auto& v : net.initial) v = rng.uniform(-0.3, 0.3);

    std::vector<HelperDefinition> helpers;
    for (std::size_t r = 0; r < opt.subnets; ++r) {
        std::vector<Expr> xs;
        for (std::size_t j = 0; j < N; ++j) xs.push_back(Expr::state(net.X(j, r)));
        helpers.push_back({"S" + std::to_string(r), Expr::sum(std::move(xs))});
    }

    const Expr kB = Expr::parameter("k_B");
    const Expr a = opt.a;
    const double within = k_W / static_cast<double>(M);
    std::vector<Expr> drift(2 * N * opt.subnets);
    for (std::size_t q = 0; q < opt.subnets; ++q) {
        for (std::size_t i = 0; i < N; ++i) {
            Expr x = Expr::state(net.X(i, q));
            Expr y = Expr::state(net.Y(i, q));
            std::vector<Expr> terms{x * (a - x) * (x - 1.0) - y};
            std::vector<Expr> diffs;
            for (std::size_t j : net.adjacency[i]) diffs.push_back(Expr::state(net.X(j, q)) - x);
            if (!diffs.empty()) terms.push_back(within * Expr::sum(std::move(diffs)));
            for (std::size_t r = 0; r < opt.subnets; ++r) {
                if (r == q) continue;
                terms.push_back(kB / static_cast<double>(N) *
                                (Expr::helper("S" + std::to_string(r)) - static_cast<double>(N) * x));
            }
            drift[net.X(i, q)] = Expr::sum(std::move(terms));
            drift[net.Y(i, q)] = net.b[q][i] * x - opt.c * y;
        }
    }
    net.spec = make_ode(std::move(drift), 2 * N * opt.subnets, std::move(helpers), {"k_B"});
    return net;
}

} // namespace symde
