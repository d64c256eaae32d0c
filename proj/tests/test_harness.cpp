#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "symde/symde.hpp"

using namespace symde;

namespace {

std::string model_path(const std::string& name) { return std::string(SYMDE_MODELS_DIR) + "/" + name; }

std::size_t count_sines(const Expr& e) {
    std::size_t n = (e.kind() == Kind::call && e.fn() == Fn::sin) ? 1 : 0;
    for (const auto& a : e.args()) n += count_sines(a);
    return n;
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::size_t columns(const std::string& line) { return 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')); }

} // namespace

// ---- model files -----------------------------------------------------------

TEST(ModelFile, RosslerParses) {
    auto m = load_model(model_path("rossler.ini"));
    EXPECT_EQ(m.dimension, 3u);
    EXPECT_EQ(m.parameters.size(), 3u);
    auto b = bind_model(m);
    EXPECT_EQ(b.initial, (std::vector<double>{0.1, 0.2, 0.3}));
    auto ex = lower(b.spec);
    auto f = evaluate_drift(ex, 0.0, b.initial);
    EXPECT_NEAR(f[0], -0.5, 1e-15);
    EXPECT_NEAR(f[2], 0.2 + 0.3 * (0.1 - 5.7), 1e-15);
}

TEST(ModelFile, SunflowerDelays) {
    auto b = bind_model(load_model(model_path("sunflower.ini")));
    EXPECT_EQ(b.delays, (std::vector<double>{40.0}));
    EXPECT_DOUBLE_EQ(b.max_delay, 40.0);
    EXPECT_TRUE(b.spec.uses_past());
}

TEST(ModelFile, OverrideChangesDelay) {
    auto b = bind_model(load_model(model_path("sunflower.ini")), {{"tau", 20.0}});
    EXPECT_EQ(b.delays, (std::vector<double>{20.0}));
}

TEST(ModelFile, MalformedExpressionReportsLocation) {
    const std::string text = "[drift]\n0 = y(0) * (1 +\n";
    try {
        parse_model(text);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_GT(e.column(), 0u);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(ModelFile, UnknownSectionIsAnError) {
    EXPECT_THROW(parse_model("[nonsense]\nx = 1\n"), ParseError);
}

TEST(ModelFile, MissingFileIsIoError) { EXPECT_THROW(load_model(model_path("does_not_exist.ini")), IoError); }

TEST(ModelFile, DeferredParameterNeedsValue) {
    auto m = load_model(model_path("rossler_deferred.ini"));
    EXPECT_THROW(bind_model(m), UsageError);
    auto slots = bind_model(m, {}, true);
    EXPECT_EQ(slots.spec.parameters.size(), 1u);
    auto b = bind_model(m, {{"c", 5.7}});
    auto ex = lower(b.spec);
    auto f = evaluate_drift(ex, 0.0, b.initial, nullptr, runtime_parameters(ex, b));
    EXPECT_NEAR(f[2], 0.2 + 0.3 * (0.1 - 5.7), 1e-15);
}

TEST(ModelFile, UnknownOverrideIsUsageError) {
    EXPECT_THROW(bind_model(load_model(model_path("rossler.ini")), {{"zz", 1.0}}), UsageError);
}

TEST(ModelFile, HelpersExpandToSameDrift) {
    auto b = bind_model(load_model(model_path("lorenz_helpers.ini")));
    auto ex = lower(b.spec);
    std::vector<double> y = {1.0, 2.0, 3.0};
    auto f = evaluate_drift(ex, 0.0, y);
    EXPECT_NEAR(f[0], 10.0 * (2.0 - 1.0), 1e-14);
    EXPECT_NEAR(f[1], 1.0 * (28.0 - 3.0) - 2.0, 1e-14);
    EXPECT_NEAR(f[2], 1.0 * 2.0 - 2.6666666666666667 * 3.0, 1e-14);
}

TEST(ModelFile, StratonovichIsConvertedToIto) {
    auto b = bind_model(load_model(model_path("gbm_stratonovich.ini")));
    EXPECT_EQ(b.spec.calculus, Calculus::ito);
}

TEST(ModelFile, GroupsAreRead) {
    auto b = bind_model(load_model(model_path("fhn_pair.ini")));
    ASSERT_EQ(b.groups.size(), 2u);
    EXPECT_EQ(b.groups[0], (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(b.groups[1], (std::vector<std::size_t>{1, 3}));
}

// ---- networks --------------------------------------------------------------

TEST(Kuramoto, TwoFullyCoupledHaveOneSineEach) {
    auto net = gen_kuramoto(2, 1.0, 1.0, 7);
    ASSERT_EQ(net.spec.drift.size(), 2u);
    EXPECT_EQ(count_sines(net.spec.drift[0]), 1u);
    EXPECT_EQ(count_sines(net.spec.drift[1]), 1u);
    EXPECT_EQ(net.edges, 2u);
}

TEST(Kuramoto, SineTermsMatchEdgeCount) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto net = gen_kuramoto(30, 2.0, 0.3, seed);
        std::size_t terms = 0;
        for (const auto& d : net.spec.drift) terms += count_sines(d);
        EXPECT_EQ(terms, net.edges);
        std::size_t listed = 0;
        for (const auto& row : net.in_edges) listed += row.size();
        EXPECT_EQ(listed, net.edges);
    }
}

TEST(Kuramoto, ZeroCouplingGivesRotators) {
    auto net = gen_kuramoto(10, 0.0, 0.5, 3);
    auto ex = lower(net.spec);
    OdeStepper s(ex, net.initial, 0.0);
    s.integrate_to(5.0);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(s.y()[i], net.initial[i] + 5.0 * net.omega[i], 1e-8);
}

TEST(Kuramoto, SameSeedSameNetwork) {
    auto a = gen_kuramoto(20, 1.0, 0.2, 11), b = gen_kuramoto(20, 1.0, 0.2, 11);
    EXPECT_EQ(a.in_edges, b.in_edges);
    EXPECT_EQ(a.omega, b.omega);
    EXPECT_EQ(a.initial, b.initial);
}

TEST(SmallWorld, RingLatticeWithoutRewiring) {
    Rng rng(5);
    auto adj = gen_smallworld(4, 4, 0.0, rng);
    ASSERT_EQ(adj.size(), 16u);
    for (std::size_t i = 0; i < adj.size(); ++i) {
        EXPECT_EQ(adj[i].size(), 4u);
        for (std::size_t j : adj[i]) {
            EXPECT_NE(i, j);
            EXPECT_NE(std::find(adj[j].begin(), adj[j].end(), i), adj[j].end()) << "asymmetric edge";
        }
    }
}

TEST(SmallWorld, RewiringKeepsEdgeCountAndSymmetry) {
    Rng rng(9);
    auto adj = gen_smallworld(5, 4, 0.3, rng);
    std::size_t degree_sum = 0;
    for (std::size_t i = 0; i < adj.size(); ++i) {
        degree_sum += adj[i].size();
        for (std::size_t j : adj[i]) EXPECT_NE(std::find(adj[j].begin(), adj[j].end(), i), adj[j].end());
    }
    EXPECT_EQ(degree_sum, 25u * 4u);
}

TEST(SmallWorldFhn, TwoHelpers) {
    auto net = gen_smallworld_fhn(4, 4, 0.0, 0.1, 1);
    EXPECT_EQ(net.spec.helpers.size(), 2u);
    EXPECT_EQ(net.spec.dimension, 64u);
    for (const auto& row : net.adjacency) EXPECT_EQ(row.size(), 4u);
}

TEST(SmallWorldFhn, ZeroInterCouplingDecouples) {
    auto net = gen_smallworld_fhn(4, 4, 0.2, 0.1, 2);
    auto ex = lower(net.spec);
    std::vector<double> kb = {0.0};
    auto y = net.initial;
    auto f0 = evaluate_drift(ex, 0.0, y, nullptr, kb);
    for (std::size_t i = 0; i < net.nodes; ++i) y[net.X(i, 1)] += 0.1;
    auto f1 = evaluate_drift(ex, 0.0, y, nullptr, kb);
    for (std::size_t i = 0; i < net.nodes; ++i) {
        EXPECT_EQ(f0[net.X(i, 0)], f1[net.X(i, 0)]);
        EXPECT_EQ(f0[net.Y(i, 0)], f1[net.Y(i, 0)]);
    }
    std::vector<double> kb1 = {0.5};
    auto g0 = evaluate_drift(ex, 0.0, net.initial, nullptr, kb1);
    auto g1 = evaluate_drift(ex, 0.0, y, nullptr, kb1);
    EXPECT_NE(g0[net.X(0, 0)], g1[net.X(0, 0)]);
}

// ---- statistics ------------------------------------------------------------

TEST(Stats, SymmetricSampleHasZeroT) {
    std::vector<double> v = {-1.0, 1.0};
    auto r = t_test(v);
    EXPECT_EQ(r.t, 0.0);
    EXPECT_DOUBLE_EQ(r.p, 1.0);
}

TEST(Stats, OneToFive) {
    std::vector<double> v = {1, 2, 3, 4, 5};
    auto r = t_test(v);
    EXPECT_NEAR(r.t, 4.242640687119285, 1e-12);
    EXPECT_NEAR(r.p, 0.013236, 1e-5);
    EXPECT_EQ(r.df, 4.0);
}

TEST(Stats, NonzeroNullMean) {
    std::vector<double> v = {1, 2, 3, 4, 5};
    auto r = t_test(v, 3.0);
    EXPECT_EQ(r.t, 0.0);
    EXPECT_DOUBLE_EQ(r.p, 1.0);
}

TEST(Stats, TooFewSamples) {
    std::vector<double> v = {1.0};
    EXPECT_THROW(t_test(v), UsageError);
}

TEST(Stats, ScaleInvariance) {
    Rng rng(4);
    std::vector<double> v(50), w(50);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = rng.normal() + 0.3;
        w[i] = 7.5 * v[i];
    }
    auto a = t_test(v), b = t_test(w);
    EXPECT_NEAR(a.t, b.t, 1e-10);
    EXPECT_NEAR(a.p, b.p, 1e-12);
}

TEST(Stats, EqualWeightsGiveArithmeticMean) {
    std::vector<double> v = {0.5, -2.0, 3.25, 8.0};
    std::vector<double> w(4, 0.7);
    EXPECT_NEAR(weighted_mean(v, w), (0.5 - 2.0 + 3.25 + 8.0) / 4.0, 1e-15);
}

TEST(Stats, WeightedMeanFavorsHeavyValues) {
    std::vector<double> v = {1.0, 3.0};
    std::vector<double> w = {1.0, 3.0};
    EXPECT_DOUBLE_EQ(weighted_mean(v, w), 2.5);
    std::vector<double> bad = {1.0};
    EXPECT_THROW(weighted_mean(v, bad), ContractViolation);
}

// ---- output ------------------------------------------------------------------

TEST(Output, SampleTimesIncludeEndpoint) {
    auto t = sample_times(100.0, 200.0, 1.0);
    ASSERT_EQ(t.size(), 101u);
    EXPECT_EQ(t.front(), 100.0);
    EXPECT_EQ(t.back(), 200.0);
    EXPECT_EQ(sample_times(0.0, 1.0, 0.1).size(), 11u);
    EXPECT_THROW(sample_times(0.0, 1.0, 0.0), UsageError);
}

TEST(Output, NumbersRoundTrip) {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        double v = rng.normal() * std::pow(10.0, rng.uniform(-30, 30));
        EXPECT_EQ(std::stod(format_number(v)), v);
    }
    EXPECT_EQ(format_number(0.5), "0.5");
    EXPECT_EQ(format_number(100.0), "100");
}

TEST(Run, RosslerRowsAndColumns) {
    auto b = bind_model(load_model(model_path("rossler.ini")));
    auto ex = lower(b.spec);
    std::ostringstream out;
    run_trajectory(ex, b, RunSettings{}, sample_times(100, 200, 1), out);
    auto lines = lines_of(out.str());
    ASSERT_EQ(lines.size(), 101u);
    for (const auto& l : lines) EXPECT_EQ(columns(l), 4u);
    EXPECT_EQ(lines.front().substr(0, 4), "100,");
}

TEST(Run, HeaderRow) {
    auto b = bind_model(load_model(model_path("rossler.ini")));
    auto ex = lower(b.spec);
    RunSettings rs;
    rs.header = true;
    std::ostringstream out;
    run_trajectory(ex, b, rs, sample_times(0, 1, 1), out);
    auto lines = lines_of(out.str());
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0], "t,y0,y1,y2");
}

TEST(Run, SunflowerSingleComponent) {
    auto b = bind_model(load_model(model_path("sunflower.ini")));
    auto ex = lower(b.spec);
    RunSettings rs;
    rs.components = {0};
    std::ostringstream out;
    run_trajectory(ex, b, rs, sample_times(0, 200, 10), out);
    auto lines = lines_of(out.str());
    ASSERT_EQ(lines.size(), 21u);
    for (const auto& l : lines) EXPECT_EQ(columns(l), 2u);
    EXPECT_EQ(lines.front(), "0,1");
}

TEST(Run, ComponentOutOfRange) {
    auto b = bind_model(load_model(model_path("rossler.ini")));
    auto ex = lower(b.spec);
    RunSettings rs;
    rs.components = {3};
    std::ostringstream out;
    EXPECT_THROW(run_trajectory(ex, b, rs, sample_times(0, 1, 1), out), UsageError);
}

TEST(Run, LinearDdeKnownValues) {
    auto b = bind_model(load_model(model_path("linear_dde.ini")));
    auto ex = lower(b.spec);
    RunSettings rs;
    rs.atol = 1e-10;
    rs.rtol = 1e-10;
    std::ostringstream out;
    run_trajectory(ex, b, rs, {1.0, 2.0}, out);
    auto lines = lines_of(out.str());
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_NEAR(std::stod(lines[0].substr(2)), 0.0, 1e-8);
    EXPECT_NEAR(std::stod(lines[1].substr(2)), -0.5, 1e-8);
}

TEST(Run, SdeSameSeedSameCsv) {
    auto b = bind_model(load_model(model_path("gbm.ini")));
    auto ex = lower(b.spec);
    RunSettings rs;
    rs.seed = 42;
    std::ostringstream a, c, d;
    run_trajectory(ex, b, rs, sample_times(0, 1, 0.1), a);
    run_trajectory(ex, b, rs, sample_times(0, 1, 0.1), c);
    EXPECT_EQ(a.str(), c.str());
    rs.seed = 43;
    run_trajectory(ex, b, rs, sample_times(0, 1, 0.1), d);
    EXPECT_NE(a.str(), d.str());
}

TEST(Run, BackendsAgreeOnRossler) {
    auto b = bind_model(load_model(model_path("rossler.ini")));
    LowerOptions lb, lt;
    lb.backend = Backend::bytecode;
    lt.backend = Backend::treewalk;
    std::ostringstream x, y;
    run_trajectory(lower(b.spec, lb), b, RunSettings{}, sample_times(0, 10, 1), x);
    run_trajectory(lower(b.spec, lt), b, RunSettings{}, sample_times(0, 10, 1), y);
    auto lx = lines_of(x.str()), ly = lines_of(y.str());
    ASSERT_EQ(lx.size(), ly.size());
    for (std::size_t i = 0; i < lx.size(); ++i) {
        std::istringstream sx(lx[i]), sy(ly[i]);
        for (std::string a, c; std::getline(sx, a, ',') && std::getline(sy, c, ',');)
            EXPECT_NEAR(std::stod(a), std::stod(c), 1e-9 * (1 + std::fabs(std::stod(a))));
    }
}

TEST(Run, SavedProgramGivesIdenticalCsv) {
    auto b = bind_model(load_model(model_path("rossler.ini")));
    auto ex = lower(b.spec);
    auto path = std::filesystem::temp_directory_path() / "symde_harness_roundtrip.bin";
    save(ex, path.string());
    auto back = load(path.string());
    std::filesystem::remove(path);
    std::ostringstream x, y;
    run_trajectory(ex, b, RunSettings{}, sample_times(0, 20, 1), x);
    run_trajectory(back, b, RunSettings{}, sample_times(0, 20, 1), y);
    EXPECT_EQ(x.str(), y.str());
}

TEST(Ensemble, GbmMeanAndRows) {
    auto b = bind_model(load_model(model_path("gbm.ini")));
    auto ex = lower(b.spec);
    RunSettings rs;
    rs.seed = 5;
    std::ostringstream out;
    auto s = run_ensemble(ex, b, rs, sample_times(0, 1, 0.5), 400, &out);
    auto lines = lines_of(out.str());
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(columns(lines[0]), 3u);
    EXPECT_EQ(s.mean[0][0], 0.5);
    EXPECT_EQ(s.sd[0][0], 0.0);
    // E[X_1] = x0 exp(mu); sd of the sample mean is about 0.5 * 2.74 * 1.2 / 20.
    const double expect = 0.5 * std::exp(1.01);
    EXPECT_NEAR(s.mean[2][0], expect, 4 * s.sd[2][0] / std::sqrt(400.0));
}

TEST(Ensemble, RejectsDeterministicModel) {
    auto b = bind_model(load_model(model_path("rossler.ini")));
    auto ex = lower(b.spec);
    EXPECT_THROW(run_ensemble(ex, b, RunSettings{}, sample_times(0, 1, 1), 10), UsageError);
}

TEST(Ensemble, DeterministicInSeed) {
    auto b = bind_model(load_model(model_path("mmm.ini")));
    auto ex = lower(b.spec);
    RunSettings rs;
    rs.seed = 8;
    std::ostringstream x, y;
    run_ensemble(ex, b, rs, sample_times(0, 5, 1), 20, &x);
    run_ensemble(ex, b, rs, sample_times(0, 5, 1), 20, &y);
    EXPECT_EQ(x.str(), y.str());
}

// ---- Lyapunov drivers --------------------------------------------------------

TEST(LyapunovDriver, RosslerLargestExponentPositive) {
    auto b = bind_model(load_model(model_path("rossler.ini")));
    LyapunovSettings ls;
    ls.m = 1;
    ls.transient = 50;
    ls.end = 1050;
    ls.interval = 10;
    std::ostringstream rows;
    auto s = run_lyapunov(b, RunSettings{}, ls, &rows);
    EXPECT_EQ(s.samples, 100u);
    EXPECT_EQ(lines_of(rows.str()).size(), 100u);
    EXPECT_GT(s.weighted_mean[0], 0.04);
    EXPECT_LT(s.weighted_mean[0], 0.11);
}

TEST(LyapunovDriver, InvalidSettings) {
    auto b = bind_model(load_model(model_path("rossler.ini")));
    LyapunovSettings ls;
    ls.m = 4;
    EXPECT_THROW(run_lyapunov(b, RunSettings{}, ls), UsageError);
    ls.m = 1;
    ls.interval = 0;
    EXPECT_THROW(run_lyapunov(b, RunSettings{}, ls), UsageError);
}

TEST(LyapunovDriver, SunflowerShortRun) {
    auto b = bind_model(load_model(model_path("sunflower.ini")));
    LyapunovSettings ls;
    ls.m = 2;
    ls.transient = 200;
    ls.end = 1200;
    ls.interval = 10;
    auto s = run_lyapunov(b, RunSettings{}, ls);
    ASSERT_EQ(s.weighted_mean.size(), 2u);
    EXPECT_LT(std::fabs(s.weighted_mean[0]), 5e-3);
    EXPECT_LT(s.weighted_mean[1], 0.0);
}

// ---- benchmark -----------------------------------------------------------------

TEST(Benchmark, SingleRepetitionRows) {
    BenchmarkSettings bs;
    bs.sizes = {10, 20};
    bs.duration = 2.0;
    bs.repetitions = 1;
    auto rows = run_benchmark(bs);
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) {
        EXPECT_GT(r.edges, 0u);
        EXPECT_GE(r.integration_cpu, 0.0);
        EXPECT_GT(r.integration_wall, 0.0);
        EXPECT_DOUBLE_EQ(r.expected_edges, 0.2 * r.n * (r.n - 1));
    }
    std::ostringstream out;
    write_benchmark(rows, out);
    EXPECT_EQ(lines_of(out.str()).size(), 5u);
}

TEST(Benchmark, ZeroRepetitionsRejected) {
    BenchmarkSettings bs;
    bs.repetitions = 0;
    EXPECT_THROW(run_benchmark(bs), UsageError);
}

TEST(Benchmark, MedianOfOddAndEven) {
    EXPECT_EQ(median({3.0}), 3.0);
    EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(median({4.0, 1.0}), 2.5);
}
