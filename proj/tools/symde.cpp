#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "symde/symde.hpp"

using namespace symde;

namespace {

struct Common {
    std::string model;
    std::string exec;
    std::uint64_t seed = 0;
    std::optional<double> t0, t1, dt;
    std::optional<double> atol, rtol;
    std::vector<std::size_t> components;
    std::vector<std::string> params;
    std::string backend = "bytecode";
    std::optional<double> max_step;
    std::optional<double> blind;
    bool header = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool sampling = true) {
    cmd->add_option("--model", c.model, "model file");
    cmd->add_option("--seed", c.seed, "random seed");
    if (sampling) {
        cmd->add_option("--t0", c.t0, "first sample time");
        cmd->add_option("--t1", c.t1, "last sample time");
        cmd->add_option("--dt", c.dt, "sample spacing");
    }
    cmd->add_option("--atol", c.atol, "absolute tolerance");
    cmd->add_option("--rtol", c.rtol, "relative tolerance");
    cmd->add_option("--components", c.components, "comma-separated component indices")->delimiter(',');
    cmd->add_option("--param", c.params, "name=value, repeatable");
    cmd->add_option("--backend", c.backend, "bytecode or treewalk")->check(CLI::IsMember({"bytecode", "treewalk"}));
    cmd->add_option("--max-step", c.max_step, "largest step size");
    cmd->add_option("--blind", c.blind, "integrate a DDE blindly over this duration first");
    cmd->add_flag("--header", c.header, "print a CSV header row");
    cmd->add_flag("--quiet", c.quiet, "no timing report on stderr");
}

std::map<std::string, double> parse_params(const std::vector<std::string>& items) {
    std::map<std::string, double> out;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--param expects name=value, got '" + item + "'");
        const std::string name = item.substr(0, eq), text = item.substr(eq + 1);
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (text.empty() || end != text.c_str() + text.size()) throw UsageError("--param " + name + ": not a number");
        out[name] = v;
    }
    return out;
}

LowerOptions lower_options(const Common& c) {
    LowerOptions lo;
    lo.backend = c.backend == "treewalk" ? Backend::treewalk : Backend::bytecode;
    return lo;
}

RunSettings settings(const Common& c) {
    RunSettings rs;
    rs.atol = c.atol;
    rs.rtol = c.rtol;
    if (c.max_step) {
        if (!(*c.max_step > 0)) throw UsageError("--max-step must be positive");
        rs.max_step = *c.max_step;
    }
    rs.blind = c.blind;
    rs.components = c.components;
    rs.seed = c.seed;
    rs.header = c.header;
    return rs;
}

BoundModel load_bound(const Common& c, bool allow_unbound = false) {
    if (c.model.empty()) throw UsageError("--model is required");
    return bind_model(load_model(c.model), parse_params(c.params), allow_unbound);
}

std::vector<double> times_for(const Common& c, const BoundModel& m) {
    const double t0 = c.t0.value_or(m.t0);
    if (!c.t1) throw UsageError("--t1 is required");
    const double dt = c.dt.value_or((*c.t1 - t0) / 100.0);
    return sample_times(t0, *c.t1, dt);
}

void report(const Common& c, double prep, double integ, const char* backend) {
    if (c.quiet) return;
    std::fprintf(stderr, "# preparation %.6f s, integration %.6f s, seed %llu, backend %s\n", prep, integ,
                 static_cast<unsigned long long>(c.seed), backend);
}

void print_summary(const LyapunovSummary& s, const char* label) {
    std::cout << "exponent,weighted_mean,mean,t,p,samples\n";
    for (std::size_t k = 0; k < s.weighted_mean.size(); ++k) {
        std::cout << label << k << ',' << format_number(s.weighted_mean[k]) << ',' << format_number(s.tests[k].mean)
                  << ',' << format_number(s.tests[k].t) << ',' << format_number(s.tests[k].p) << ',' << s.samples
                  << '\n';
    }
}

std::vector<std::vector<std::size_t>> parse_groups(const std::string& text) {
    std::vector<std::vector<std::size_t>> groups;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find(';', start);
        if (end == std::string::npos) end = text.size();
        std::vector<std::size_t> g;
        std::string part = text.substr(start, end - start);
        std::size_t p = 0;
        while (p < part.size()) {
            while (p < part.size() && (part[p] == ',' || part[p] == ' ')) ++p;
            if (p >= part.size()) break;
            std::size_t q = p;
            while (q < part.size() && std::isdigit(static_cast<unsigned char>(part[q]))) ++q;
            if (q == p) throw UsageError("--groups expects index lists like '0,2;1,3'");
            g.push_back(std::stoul(part.substr(p, q - p)));
            p = q;
        }
        if (!g.empty()) groups.push_back(std::move(g));
        start = end + 1;
    }
    if (groups.empty()) throw UsageError("--groups is empty");
    return groups;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"symde: symbolic differential equation integration"};
    app.require_subcommand(1);

    Common run_c, lyap_c, trans_c, sde_c, comp_c, exec_c;
    auto* run = app.add_subcommand("run", "integrate a model and print sampled states as CSV");
    add_common(run, run_c);

    auto* lyap = app.add_subcommand("lyap", "Lyapunov exponents (--t0 ends the transient, --dt is the sample interval)");
    add_common(lyap, lyap_c);
    std::size_t lyap_m = 1;
    std::string lyap_samples;
    lyap->add_option("--m", lyap_m, "number of exponents");
    lyap->add_option("--samples-out", lyap_samples, "write per-sample local exponents to this CSV file");

    auto* trans = app.add_subcommand("transversal", "largest exponents transversal to a synchronization manifold");
    add_common(trans, trans_c);
    std::size_t trans_m = 1;
    std::string trans_groups, trans_samples;
    trans->add_option("--m", trans_m, "number of exponents");
    trans->add_option("--groups", trans_groups, "synchronized groups, e.g. '0,2;1,3' (default: from the model)");
    trans->add_option("--samples-out", trans_samples, "write per-sample local exponents to this CSV file");

    auto* sde = app.add_subcommand("sde", "ensemble mean and standard deviation of an SDE model");
    add_common(sde, sde_c);
    std::size_t paths = 100;
    sde->add_option("--paths", paths, "number of independent paths");

    auto* bench = app.add_subcommand("benchmark", "time both backends on random Kuramoto networks");
    std::vector<std::size_t> sizes = {20, 50, 100, 200};
    BenchmarkSettings bs;
    bench->add_option("--n", sizes, "network sizes")->delimiter(',');
    bench->add_option("--t1", bs.duration, "integration time");
    bench->add_option("--reps", bs.repetitions, "repetitions per size");
    bench->add_option("--seed", bs.seed, "random seed");

    auto* comp = app.add_subcommand("compile", "lower a model and save the program");
    add_common(comp, comp_c, false);
    std::string out_path;
    comp->add_option("--out", out_path, "output file")->required();

    auto* exec = app.add_subcommand("exec", "load a saved program and integrate it (--model supplies initial data)");
    add_common(exec, exec_c);
    exec->add_option("--exec", exec_c.exec, "compiled program")->required();
    std::size_t exec_paths = 0;
    exec->add_option("--paths", exec_paths, "run an SDE ensemble of this many paths");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*run) {
        const double p0 = detail::cpu_seconds();
        auto m = load_bound(run_c);
        auto ex = lower(m.spec, lower_options(run_c));
        const double p1 = detail::cpu_seconds();
        run_trajectory(ex, m, settings(run_c), times_for(run_c, m), std::cout);
        report(run_c, p1 - p0, detail::cpu_seconds() - p1, run_c.backend.c_str());
    } else if (*lyap || *trans) {
        const bool is_trans = static_cast<bool>(*trans);
        Common& c = is_trans ? trans_c : lyap_c;
        auto m = load_bound(c);
        LyapunovSettings ls;
        ls.m = is_trans ? trans_m : lyap_m;
        ls.transient = c.t0.value_or(m.t0);
        if (!c.t1) throw UsageError("--t1 is required");
        ls.end = *c.t1;
        ls.interval = c.dt.value_or(10.0);
        const std::string& samples = is_trans ? trans_samples : lyap_samples;
        std::ofstream rows;
        if (!samples.empty()) {
            rows.open(samples, std::ios::binary);
            if (!rows) throw IoError("cannot write '" + samples + "'");
        }
        LyapunovSummary s;
        if (is_trans) {
            auto groups = trans_groups.empty() ? m.groups : parse_groups(trans_groups);
            if (groups.empty()) throw UsageError("no groups: give --groups or a [groups] section");
            s = run_transversal(m, groups, settings(c), ls, samples.empty() ? nullptr : &rows, lower_options(c));
        } else {
            s = run_lyapunov(m, settings(c), ls, samples.empty() ? nullptr : &rows, lower_options(c));
        }
        print_summary(s, is_trans ? "transversal" : "lambda");
        report(c, s.preparation_seconds, s.integration_seconds, c.backend.c_str());
    } else if (*sde) {
        const double p0 = detail::cpu_seconds();
        auto m = load_bound(sde_c);
        auto ex = lower(m.spec, lower_options(sde_c));
        const double p1 = detail::cpu_seconds();
        run_ensemble(ex, m, settings(sde_c), times_for(sde_c, m), paths, &std::cout);
        report(sde_c, p1 - p0, detail::cpu_seconds() - p1, sde_c.backend.c_str());
    } else if (*bench) {
        bs.sizes = sizes;
        auto rows = run_benchmark(bs);
        write_benchmark(rows, std::cout);
    } else if (*comp) {
        auto m = load_bound(comp_c, true);
        auto ex = lower(m.spec, lower_options(comp_c));
        save(ex, out_path);
    } else if (*exec) {
        const double p0 = detail::cpu_seconds();
        auto ex = load(exec_c.exec);
        auto m = load_bound(exec_c);
        const double p1 = detail::cpu_seconds();
        if (exec_paths > 0)
            run_ensemble(ex, m, settings(exec_c), times_for(exec_c, m), exec_paths, &std::cout);
        else
            run_trajectory(ex, m, settings(exec_c), times_for(exec_c, m), std::cout);
        report(exec_c, p1 - p0, detail::cpu_seconds() - p1, backend_name(ex.backend).c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
