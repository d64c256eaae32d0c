#pragma once

// Drivers behind the command-line tool: sampled trajectories, Lyapunov and
// transversal Lyapunov runs, SDE ensembles and the Kuramoto benchmark.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iostream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "symde/dde.hpp"
#include "symde/errors.hpp"
#include "symde/lower.hpp"
#include "symde/lyapunov.hpp"
#include "symde/model_file.hpp"
#include "symde/networks.hpp"
#include "symde/ode.hpp"
#include "symde/rng.hpp"
#include "symde/sde.hpp"
#include "symde/stats.hpp"

namespace symde {

struct RunSettings {
    std::optional<double> atol, rtol;
    double max_step = std::numeric_limits<double>::infinity();
    /// Blind integration over this duration instead of stepping on discontinuities.
    std::optional<double> blind;
    std::vector<std::size_t> components; // empty: all
    std::uint64_t seed = 0;
    bool header = false;
};

/// t0, t0 + dt, ... up to t1 (inclusive within a small tolerance).
inline std::vector<double> sample_times(double t0, double t1, double dt) {
    if (!std::isfinite(t0) || !std::isfinite(t1) || !(dt > 0) || !std::isfinite(dt))
        throw UsageError("need finite --t0, --t1 and --dt > 0");
    if (t1 < t0) throw UsageError("--t1 must not be smaller than --t0");
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::floor((t1 - t0) / dt * (1 + 1e-12) + 1e-9));
    for (std::size_t k = 0; k <= count; ++k) out.push_back(t0 + static_cast<double>(k) * dt);
    return out;
}

inline std::string format_number(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(&out) {}
    void header(const std::vector<std::string>& names) {
        for (std::size_t i = 0; i < names.size(); ++i) *out_ << (i ? "," : "") << names[i];
        *out_ << '\n';
    }
    void row(double t, std::span<const double> values) {
        std::string line = format_number(t);
        for (double v : values) {
            line += ',';
            line += format_number(v);
        }
        line += '\n';
        *out_ << line;
    }

private:
    std::ostream* out_;
};

inline std::vector<std::size_t> resolve_components(const std::vector<std::size_t>& requested, std::size_t n) {
    if (requested.empty()) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    for (std::size_t c : requested)
        if (c >= n) throw UsageError("component " + std::to_string(c) + " is out of range (dimension " + std::to_string(n) + ")");
    return requested;
}

namespace detail {

inline double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

inline std::vector<double> pick(std::span<const double> y, const std::vector<std::size_t>& comps) {
    std::vector<double> out;
    out.reserve(comps.size());
    for (std::size_t c : comps) out.push_back(y[c]);
    return out;
}

template <class Options>
Options tolerances(const RunSettings& s, Options o) {
    if (s.atol) o.atol = *s.atol;
    if (s.rtol) o.rtol = *s.rtol;
    if (std::isfinite(s.max_step)) o.h_max = s.max_step;
    return o;
}

inline void check_runtime_values(const ExecutableSystem& ex, const std::vector<double>& values) {
    if (values.size() != ex.parameters.size())
        throw UsageError("program expects " + std::to_string(ex.parameters.size()) + " runtime parameters, got " +
                         std::to_string(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
        if (std::isnan(values[i])) throw UsageError("parameter '" + ex.parameters[i] + "' has no value; pass --param");
}

inline AnchorList initial_past(const BoundModel& m) {
    if (m.max_delay <= 0.0) throw UsageError("the model uses delayed states but has no positive delay");
    return constant_past(m.initial, m.t0, m.max_delay);
}

/// Moves a fresh DDE stepper past its initial discontinuities, or blindly over a fixed duration.
inline void start_dde(DdeStepper& s, const BoundModel& m, const RunSettings& rs, double until) {
    if (rs.blind) {
        if (!std::isfinite(rs.max_step)) throw UsageError("--blind needs --max-step");
        s.integrate_blindly(*rs.blind, rs.max_step);
    } else {
        s.step_on_discontinuities(m.delays, rs.max_step, until);
    }
}

} // namespace detail

/// Runtime parameter vector for a (possibly loaded) program from a bound
/// model: values are matched by name.
inline std::vector<double> runtime_parameters(const ExecutableSystem& ex, const BoundModel& m) {
    std::vector<double> out;
    for (const auto& name : ex.parameters) {
        auto it = m.values.find(name);
        out.push_back(it == m.values.end() ? std::numeric_limits<double>::quiet_NaN() : it->second);
    }
    detail::check_runtime_values(ex, out);
    return out;
}

/// Samples the trajectory at the given times; ODE, DDE or a single SDE path.
inline void run_trajectory(const ExecutableSystem& ex, const BoundModel& m, const RunSettings& rs,
                           const std::vector<double>& times, std::ostream& out) {
    const auto comps = resolve_components(rs.components, ex.dimension);
    const auto params = runtime_parameters(ex, m);
    if (m.initial.size() != ex.dimension) throw UsageError("initial state does not match the program dimension");
    if (!times.empty() && times.front() < m.t0) throw UsageError("sampling starts before the initial time");
    CsvWriter csv(out);
    if (rs.header) {
        std::vector<std::string> names = {"t"};
        for (std::size_t c : comps) names.push_back("y" + std::to_string(c));
        csv.header(names);
    }
    if (ex.has_diffusion) {
        SdeOptions o = detail::tolerances(rs, SdeOptions{});
        o.noise = m.noise ? *m.noise : detect_additive(m.spec);
        SdeStepper s(ex, m.initial, m.t0, rs.seed, o, params);
        JumpDiffusion jd(s, jump_spec(m), rs.seed);
        for (double t : times) csv.row(t, detail::pick(jd.integrate_to(t), comps));
        return;
    }
    if (ex.uses_past) {
        DdeStepper s(ex, detail::initial_past(m), m.max_delay, detail::tolerances(rs, DdeOptions{}), params);
        if (rs.blind) {
            detail::start_dde(s, m, rs, 0);
            if (!times.empty() && times.front() < s.t() - m.max_delay)
                throw UsageError("with --blind, sampling may start at most one maximum delay before the blind phase ends");
        }
        for (double t : times) {
            if (!rs.blind) s.step_on_discontinuities(m.delays, rs.max_step, t);
            csv.row(t, detail::pick(s.integrate_to(t), comps));
        }
        return;
    }
    OdeStepper s(ex, m.initial, m.t0, detail::tolerances(rs, OdeOptions{}), params);
    for (double t : times) csv.row(t, detail::pick(s.integrate_to(t), comps));
}

struct LyapunovSettings {
    std::size_t m = 1;
    double transient = 0;  // samples ending at or before this time are discarded
    double end = 100;
    double interval = 10;
};

struct LyapunovSummary {
    std::vector<double> weighted_mean;
    std::vector<TTest> tests;
    std::size_t samples = 0;
    double preparation_seconds = 0;
    double integration_seconds = 0;
};

namespace detail {

template <class Runner>
LyapunovSummary collect_exponents(Runner& run, const LyapunovSettings& ls, std::ostream* rows, bool header) {
    LyapunovSummary out;
    std::vector<std::vector<double>> local(ls.m);
    std::vector<double> weights;
    CsvWriter csv(rows ? *rows : std::cout);
    if (rows && header) {
        std::vector<std::string> names = {"t", "weight"};
        for (std::size_t k = 0; k < ls.m; ++k) names.push_back("lambda" + std::to_string(k));
        csv.header(names);
    }
    while (run.t() < ls.end) {
        auto s = run.step(ls.interval);
        if (s.t <= ls.transient) continue;
        for (std::size_t k = 0; k < ls.m; ++k) local[k].push_back(s.local[k]);
        weights.push_back(s.weight);
        if (rows) {
            std::vector<double> v = {s.weight};
            v.insert(v.end(), s.local.begin(), s.local.end());
            csv.row(s.t, v);
        }
    }
    out.samples = weights.size();
    if (out.samples < 2) throw UsageError("fewer than two Lyapunov samples after the transient; extend --t1");
    for (std::size_t k = 0; k < ls.m; ++k) {
        out.weighted_mean.push_back(weighted_mean(local[k], weights));
        out.tests.push_back(t_test(local[k]));
    }
    return out;
}

inline LyapunovSummary lyapunov_on(const AugmentedSpec& aug, std::vector<double> base_initial, const BoundModel& m,
                                   const RunSettings& rs, const LyapunovSettings& ls, std::ostream* rows,
                                   const LowerOptions& lo) {
    const double prep0 = cpu_seconds();
    auto ex = lower(aug.spec, lo);
    const double prep1 = cpu_seconds();
    const auto params = runtime_parameters(ex, m);
    LyapunovSummary out;
    if (ex.uses_past) {
        AnchorList past = constant_past(base_initial, m.t0, m.max_delay);
        DdeLyapunov run(ex, aug, past, m.max_delay, rs.seed, tolerances(rs, DdeOptions{}), params);
        start_dde(run.stepper(), m, rs, std::numeric_limits<double>::infinity());
        run.orthonormalize();
        run.stepper().refresh();
        out = collect_exponents(run, ls, rows, rs.header);
    } else {
        OdeLyapunov run(ex, aug, std::move(base_initial), m.t0, rs.seed, tolerances(rs, OdeOptions{}), params);
        out = collect_exponents(run, ls, rows, rs.header);
    }
    out.preparation_seconds = prep1 - prep0;
    out.integration_seconds = cpu_seconds() - prep1;
    return out;
}

} // namespace detail

inline void check_lyapunov_settings(const LyapunovSettings& ls) {
    if (ls.m == 0) throw UsageError("--m must be at least 1");
    if (!(ls.interval > 0) || !std::isfinite(ls.interval)) throw UsageError("sample interval must be positive");
    if (!(ls.end > ls.transient)) throw UsageError("--t1 must exceed the transient end --t0");
}

/// Regular Lyapunov exponents; per-sample rows go to `rows` when given.
inline LyapunovSummary run_lyapunov(const BoundModel& m, const RunSettings& rs, const LyapunovSettings& ls,
                                    std::ostream* rows = nullptr, const LowerOptions& lo = {}) {
    check_lyapunov_settings(ls);
    if (m.spec.has_diffusion()) throw UsageError("Lyapunov exponents are not available for stochastic models");
    if (ls.m > m.spec.dimension && !m.spec.uses_past())
        throw UsageError("an ODE of dimension " + std::to_string(m.spec.dimension) + " has at most that many exponents");
    const double t0 = detail::cpu_seconds();
    AugmentedSpec aug = m.spec.uses_past() ? augment_dde(m.spec, m.delays, ls.m) : augment_ode(m.spec, ls.m);
    const double prep = detail::cpu_seconds() - t0;
    auto out = detail::lyapunov_on(aug, m.initial, m, rs, ls, rows, lo);
    out.preparation_seconds += prep;
    return out;
}

/// Largest exponents transversal to the synchronization manifold of `groups`.
inline LyapunovSummary run_transversal(const BoundModel& m, const std::vector<std::vector<std::size_t>>& groups,
                                       const RunSettings& rs, const LyapunovSettings& ls, std::ostream* rows = nullptr,
                                       const LowerOptions& lo = {}) {
    check_lyapunov_settings(ls);
    const double t0 = detail::cpu_seconds();
    auto ts = transversal_setup(m.spec, groups, ls.m, m.delays);
    const double prep = detail::cpu_seconds() - t0;
    auto out = detail::lyapunov_on(ts.augmented, ts.reduce(m.initial), m, rs, ls, rows, lo);
    out.preparation_seconds += prep;
    return out;
}

struct EnsembleSummary {
    std::vector<double> times;
    /// mean[k][c], sd[k][c] for sample k and selected component c.
    std::vector<std::vector<double>> mean, sd;
};

/// Independent paths with seeds derived from the run seed; rows hold the
/// ensemble mean and standard deviation of each selected component.
inline EnsembleSummary run_ensemble(const ExecutableSystem& ex, const BoundModel& m, const RunSettings& rs,
                                    const std::vector<double>& times, std::size_t paths, std::ostream* rows = nullptr) {
    if (!ex.has_diffusion) throw UsageError("the sde command needs a model with a [diffusion] section");
    if (paths == 0) throw UsageError("--paths must be at least 1");
    if (!times.empty() && times.front() < m.t0) throw UsageError("sampling starts before the initial time");
    const auto comps = resolve_components(rs.components, ex.dimension);
    const auto params = runtime_parameters(ex, m);
    SdeOptions o = detail::tolerances(rs, SdeOptions{});
    o.noise = m.noise ? *m.noise : detect_additive(m.spec);
    const JumpSpec jumps = jump_spec(m);
    const std::size_t K = times.size(), C = comps.size();
    std::vector<std::vector<double>> sum(K, std::vector<double>(C, 0.0)), sum2 = sum;
    for (std::size_t p = 0; p < paths; ++p) {
        const std::uint64_t seed = derive_seed(rs.seed, p);
        SdeStepper s(ex, m.initial, m.t0, seed, o, params);
        JumpDiffusion jd(s, jumps, seed);
        for (std::size_t k = 0; k < K; ++k) {
            const auto& y = jd.integrate_to(times[k]);
            for (std::size_t c = 0; c < C; ++c) {
                sum[k][c] += y[comps[c]];
                sum2[k][c] += y[comps[c]] * y[comps[c]];
            }
        }
    }
    EnsembleSummary out;
    out.times = times;
    const double P = static_cast<double>(paths);
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> mu(C), sd(C);
        for (std::size_t c = 0; c < C; ++c) {
            mu[c] = sum[k][c] / P;
            sd[c] = paths > 1 ? std::sqrt(std::max(0.0, (sum2[k][c] - P * mu[c] * mu[c]) / (P - 1))) : 0.0;
        }
        out.mean.push_back(mu);
        out.sd.push_back(sd);
    }
    if (rows) {
        CsvWriter csv(*rows);
        if (rs.header) {
            std::vector<std::string> names = {"t"};
            for (std::size_t c : comps) {
                names.push_back("mean" + std::to_string(c));
                names.push_back("sd" + std::to_string(c));
            }
            csv.header(names);
        }
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<double> v;
            for (std::size_t c = 0; c < C; ++c) {
                v.push_back(out.mean[k][c]);
                v.push_back(out.sd[k][c]);
            }
            csv.row(times[k], v);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkSettings {
    std::vector<std::size_t> sizes = {20, 50, 100, 200};
    double duration = 100.0;
    std::size_t repetitions = 3;
    double coupling = 3.0;
    double edge_probability = 0.2;
    std::uint64_t seed = 0;
    OdeOptions ode{};
};

struct BenchmarkRow {
    std::size_t n = 0;
    std::size_t edges = 0; // of the last generated network
    Backend backend = Backend::bytecode;
    // Medians over repetitions.
    double preparation_cpu = 0, integration_cpu = 0;
    double preparation_wall = 0, integration_wall = 0;
    double expected_edges = 0;

    double preparation_per_edge() const { return preparation_cpu / expected_edges; }
    double integration_per_edge() const { return integration_cpu / expected_edges; }
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw ContractViolation("median of nothing");
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

/// Kuramoto networks of each size, timed for both backends on identical
/// scenarios; the backend order is randomized per scenario. Times are
/// normalized by the expected edge count q n (n - 1).
inline std::vector<BenchmarkRow> run_benchmark(const BenchmarkSettings& bs) {
    if (bs.repetitions == 0) throw UsageError("--reps must be at least 1");
    if (!(bs.duration > 0)) throw UsageError("benchmark duration must be positive");
    Rng order(derive_seed(bs.seed, 0x6f72646572));
    std::vector<BenchmarkRow> rows;
    for (std::size_t n : bs.sizes) {
        if (n < 2) throw UsageError("network sizes must be at least 2");
        std::vector<double> pc[2], ic[2], pw[2], iw[2];
        std::size_t edges = 0;
        for (std::size_t rep = 0; rep < bs.repetitions; ++rep) {
            const std::uint64_t scenario = derive_seed(bs.seed, n * 1000003 + rep);
            const bool swap = order.below(2) == 1;
            for (int pass = 0; pass < 2; ++pass) {
                const int b = swap ? 1 - pass : pass;
                LowerOptions lo;
                lo.backend = b == 0 ? Backend::bytecode : Backend::treewalk;
                const double c0 = detail::cpu_seconds();
                const auto w0 = std::chrono::steady_clock::now();
                auto net = gen_kuramoto(n, bs.coupling, bs.edge_probability, scenario);
                auto ex = lower(net.spec, lo);
                const double c1 = detail::cpu_seconds();
                const auto w1 = std::chrono::steady_clock::now();
                OdeStepper s(ex, net.initial, 0.0, bs.ode);
                s.integrate_to(bs.duration);
                const double c2 = detail::cpu_seconds();
                const auto w2 = std::chrono::steady_clock::now();
                edges = net.edges;
                pc[b].push_back(c1 - c0);
                ic[b].push_back(c2 - c1);
                pw[b].push_back(std::chrono::duration<double>(w1 - w0).count());
                iw[b].push_back(std::chrono::duration<double>(w2 - w1).count());
            }
        }
        for (int b = 0; b < 2; ++b) {
            BenchmarkRow r;
            r.n = n;
            r.edges = edges;
            r.backend = b == 0 ? Backend::bytecode : Backend::treewalk;
            r.preparation_cpu = median(pc[b]);
            r.integration_cpu = median(ic[b]);
            r.preparation_wall = median(pw[b]);
            r.integration_wall = median(iw[b]);
            r.expected_edges = bs.edge_probability * static_cast<double>(n) * static_cast<double>(n - 1);
            rows.push_back(r);
        }
    }
    return rows;
}

inline void write_benchmark(const std::vector<BenchmarkRow>& rows, std::ostream& out) {
    out << "n,edges,backend,preparation_cpu_s,integration_cpu_s,preparation_per_edge_s,integration_per_edge_s,"
           "preparation_wall_s,integration_wall_s\n";
    for (const auto& r : rows) {
        out << r.n << ',' << r.edges << ',' << backend_name(r.backend) << ',' << format_number(r.preparation_cpu) << ','
            << format_number(r.integration_cpu) << ',' << format_number(r.preparation_per_edge()) << ','
            << format_number(r.integration_per_edge()) << ',' << format_number(r.preparation_wall) << ','
            << format_number(r.integration_wall) << '\n';
    }
}

} // namespace symde
