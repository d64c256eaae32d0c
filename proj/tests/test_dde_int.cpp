#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace symde;
using namespace symde::sym;

namespace {

Anchor anchor(double t, double y, double dy) { return {t, {y}, {dy}, {}}; }

DdeOptions tol(double atol, double rtol) {
    DdeOptions o;
    o.atol = atol;
    o.rtol = rtol;
    return o;
}

// y'(t) = -y(t - 1) with constant past 1.
ExecutableSystem linear_dde() { return lower(make_ode({-y(0, t() - 1.0)})); }

ExecutableSystem sunflower() {
    const double tau = 40, a = 4.8, b = 0.186;
    return lower(make_ode({y(1), -a / tau * y(1) - b / tau * sin(y(0, t() - tau))}));
}

// Method-of-steps solution of the linear DDE on [0, 3].
double linear_exact(double t) {
    if (t <= 1) return 1 - t;
    if (t <= 2) return t * t / 2 - 2 * t + 1.5;
    const double u = t - 1;
    return -0.5 - ((u * u * u / 6 - u * u + 1.5 * u) - (1.0 / 6 - 1 + 1.5));
}

// Same solution at any t >= 0 from piecewise polynomials in the local
// coordinate u = t - k on [k, k + 1]: p_k(u) = p_{k-1}(1) - integral_0^u p_{k-1}.
double method_of_steps(double t) {
    std::vector<double> p = {1.0};
    const int k = static_cast<int>(std::floor(t));
    for (int piece = 0; piece <= k; ++piece) {
        double end = 0.0;
        for (double c : p) end += c;
        std::vector<double> next(p.size() + 1, 0.0);
        next[0] = end;
        for (std::size_t j = 0; j < p.size(); ++j) next[j + 1] = -p[j] / static_cast<double>(j + 1);
        p = std::move(next);
    }
    const double u = t - k;
    double v = 0.0;
    for (std::size_t j = p.size(); j-- > 0;) v = v * u + p[j];
    return v;
}

} // namespace

TEST(Hermite, EndpointReproduction) {
    Anchor a0{0.3, {1.0, -2.0}, {0.5, 4.0}, {}}, a1{1.1, {2.0, 3.0}, {-1.0, 0.25}, {}};
    auto left = hermite_interpolate(a0, a1, a0.t);
    auto right = hermite_interpolate(a0, a1, a1.t);
    for (int i = 0; i < 2; ++i) {
        EXPECT_DOUBLE_EQ(left.y[i], a0.y[i]);
        EXPECT_NEAR(left.dy[i], a0.dy[i], 1e-14);
        EXPECT_DOUBLE_EQ(right.y[i], a1.y[i]);
        EXPECT_NEAR(right.dy[i], a1.dy[i], 1e-14);
    }
}

TEST(Hermite, LinearAndCubicExactness) {
    auto lin = [](double t) { return anchor(t, t, 1.0); };
    for (double t : {-0.5, 0.0, 0.37, 1.0, 1.8}) {
        auto v = hermite_interpolate(lin(0), lin(1), t);
        EXPECT_NEAR(v.y[0], t, 1e-15);
        EXPECT_NEAR(v.dy[0], 1.0, 1e-14);
    }
    auto cube = [](double t) { return anchor(t, t * t * t, 3 * t * t); };
    EXPECT_NEAR(hermite_interpolate(cube(0), cube(1), 0.5).y[0], 0.125, 1e-16);

    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        double c[4];
        for (double& x : c) x = rng.uniform(-2, 2);
        auto p = [&](double t) { return anchor(t, ((c[3] * t + c[2]) * t + c[1]) * t + c[0], (3 * c[3] * t + 2 * c[2]) * t + c[1]); };
        double t0 = rng.uniform(-1, 1), t1 = t0 + rng.uniform(0.1, 2);
        double t = rng.uniform(t0, t1);
        auto v = hermite_interpolate(p(t0), p(t1), t);
        EXPECT_NEAR(v.y[0], p(t).y[0], 1e-12);
        EXPECT_NEAR(v.dy[0], p(t).dy[0], 1e-11);
    }
}

TEST(Hermite, DegenerateIntervalRejected) {
    EXPECT_THROW(hermite_interpolate(anchor(1, 0, 0), anchor(1, 1, 0), 1), ContractViolation);
}

TEST(Anchors, LocateTieBreakExtrapolationAndUnderflow) {
    AnchorList list;
    for (int k = 0; k <= 4; ++k) list.append(anchor(k, k, 1));
    EXPECT_EQ(list.locate(0, 2.0)->t, 2.0);
    EXPECT_FALSE(list.last_query_extrapolated());
    EXPECT_EQ(list.locate(0, 4.0)->t, 3.0);
    EXPECT_FALSE(list.last_query_extrapolated());
    EXPECT_EQ(list.locate(0, 0.0)->t, 0.0);
    EXPECT_EQ(list.locate(1, 7.5)->t, 3.0);
    EXPECT_TRUE(list.last_query_extrapolated());
    EXPECT_NEAR(list.sample(1, 0, 7.5).value, 7.5, 1e-14);
    EXPECT_THROW(list.locate(0, -0.1), PastUnderflow);
    EXPECT_THROW(list.append(anchor(4, 0, 0)), ContractViolation);
}

TEST(Anchors, ConstantPastIsFlat) {
    auto list = constant_past({1.0, 0.0}, 0.0, 40.0);
    EXPECT_EQ(list.size(), 2u);
    for (double t : {-41.0, -40.0, -17.3, -0.001, 0.0}) {
        auto v = list.state_at(t);
        EXPECT_EQ(v.y[0], 1.0);
        EXPECT_EQ(v.y[1], 0.0);
        EXPECT_EQ(v.dy[0], 0.0);
        EXPECT_EQ(v.dy[1], 0.0);
    }
    auto wide = constant_past({1.0, 0.0}, 0.0, 40.0, 25.0);
    EXPECT_EQ(wide.state_at(-33.0).y, list.state_at(-33.0).y);
}

TEST(Anchors, PastFromFunction) {
    auto lin = past_from_function([](double t) { return std::vector<double>{2 * t + 1}; }, 0.0, 3.0, 1e-10);
    EXPECT_EQ(lin.size(), 16u);
    EXPECT_EQ(lin.back().t, 0.0);
    EXPECT_EQ(lin.front().t, -3.0);

    const double period = 2 * std::numbers::pi;
    auto sine = past_from_function([](double t) { return std::vector<double>{std::sin(t)}; }, 0.0, period, 1e-8);
    for (auto it = sine.begin(); std::next(it) != sine.end(); ++it) {
        double mid = 0.5 * (it->t + std::next(it)->t);
        EXPECT_LT(std::abs(hermite_interpolate(*it, *std::next(it), mid).y[0] - std::sin(mid)), 1e-8);
    }
    for (int k = 0; k < 1000; ++k) {
        double t = -period + period * k / 999.0;
        EXPECT_LT(std::abs(sine.state_at(t).y[0] - std::sin(t)), 1e-8);
    }

    auto kink = past_from_function([](double t) { return std::vector<double>{std::abs(t + 1.05)}; }, 0.0, 2.0, 1e-6);
    std::size_t near = 0, far = 0;
    for (const auto& a : kink) {
        if (std::abs(a.t + 1.05) < 0.25) ++near;
        if (a.t > -0.5) ++far;
    }
    EXPECT_GT(near, far);

    EXPECT_THROW(past_from_function([](double) { return std::vector<double>{NAN}; }, 0.0, 1.0, 1e-6), UsageError);
}

TEST(Dde, LinearOracleByMethodOfSteps) {
    auto ex = linear_dde();
    DdeStepper s(ex, constant_past({1.0}, 0.0, 1.0), 1.0, tol(1e-10, 1e-10));
    auto landed = s.step_on_discontinuities(std::vector<double>{1.0});
    ASSERT_EQ(landed.size(), 3u);
    EXPECT_EQ(landed[0].t, 1.0);
    EXPECT_NEAR(landed[0].y[0], 0.0, 1e-6);
    EXPECT_EQ(landed[1].t, 2.0);
    EXPECT_NEAR(landed[1].y[0], -0.5, 1e-6);
    EXPECT_EQ(landed[2].t, 3.0);
    EXPECT_NEAR(landed[2].y[0], -1.0 / 6, 1e-6);
}

TEST(Dde, InterpolatedOutputBetweenAnchors) {
    auto ex = linear_dde();
    DdeStepper s(ex, constant_past({1.0}, 0.0, 4.0), 4.0, tol(1e-10, 1e-10));
    s.step_on_discontinuities(std::vector<double>{1.0});
    EXPECT_NEAR(s.integrate_to(1.5)[0], -0.375, 1e-6);
    EXPECT_EQ(s.t(), 3.0);
    for (double t : {0.25, 1.2, 2.7}) EXPECT_NEAR(s.integrate_to(t)[0], linear_exact(t), 1e-6);
    auto beyond = s.integrate_to(3.3);
    EXPECT_GE(s.t(), 3.3);
    EXPECT_TRUE(std::isfinite(beyond[0]));
}

// On [0, 3] the solution is piecewise polynomial of degree <= 3, which the
// method reproduces exactly, so the order is measured where it is not.
TEST(Dde, ThirdOrderConvergence) {
    auto ex = linear_dde();
    const double t_end = 6.0;
    std::vector<double> logh, loge;
    for (double h : {0.1, 0.05, 0.025}) {
        DdeStepper s(ex, constant_past({1.0}, 0.0, 1.0), 1.0);
        const int steps = static_cast<int>(std::lround(t_end / h));
        for (int k = 0; k < steps; ++k) s.fixed_step(h);
        logh.push_back(std::log(h));
        loge.push_back(std::log(std::abs(s.y()[0] - method_of_steps(t_end))));
    }
    double slope = (loge[2] - loge[0]) / (logh[2] - logh[0]);
    EXPECT_NEAR(slope, 3.0, 0.3);
}

TEST(Dde, MethodOfStepsHelperMatchesClosedForm) {
    for (double t : {0.3, 1.0, 1.5, 2.0, 2.6, 3.0}) EXPECT_NEAR(method_of_steps(t), linear_exact(t), 1e-14);
}

TEST(Dde, ZeroDelayMatchesOde) {
    auto dde = lower(make_ode({-y(0, t() - 0.0)}));
    auto ode = lower(make_ode({-y(0)}));
    DdeStepper s(dde, constant_past({1.0}, 0.0, 0.0), 0.0, tol(1e-10, 1e-10));
    OdeOptions o;
    o.atol = o.rtol = 1e-10;
    OdeStepper r(ode, {1.0}, 0.0, o);
    EXPECT_NEAR(s.integrate_to(5.0)[0], r.integrate_to(5.0)[0], 1e-6);
}

TEST(Dde, DiscontinuityTimes) {
    EXPECT_EQ(discontinuity_times(0.0, {40.0}), (std::vector<double>{40, 80, 120}));
    auto d = discontinuity_times(0.0, {80.0, 70.0});
    for (double want : {70, 80, 140, 150, 160, 210, 220, 230, 240})
        EXPECT_NE(std::find(d.begin(), d.end(), want), d.end()) << want;
    EXPECT_EQ(d.size(), 9u);
    EXPECT_TRUE(discontinuity_times(5.0, {}).empty());

    auto ex = sunflower();
    DdeStepper s(ex, constant_past({1.0, 0.0}, 0.0, 40.0), 40.0);
    EXPECT_TRUE(s.step_on_discontinuities({}).empty());
    EXPECT_EQ(s.t(), 0.0);
    auto landed = s.step_on_discontinuities(std::vector<double>{40.0}, 1.0);
    ASSERT_EQ(landed.size(), 3u);
    EXPECT_EQ(landed[0].t, 40.0);
    EXPECT_EQ(landed[2].t, 120.0);
    EXPECT_THROW(constant_delays({Expr(2.0), 1.0 + 0.1 * sin(t())}), UsageError);
}

TEST(Dde, BlindIntegrationUsesEqualSteps) {
    auto ex = sunflower();
    DdeStepper s(ex, constant_past({1.0, 0.0}, 0.0, 40.0), 40.0);
    s.integrate_blindly(0.0, 1.0);
    EXPECT_EQ(s.stats().accepted, 0u);
    s.integrate_blindly(40.0, 1.0);
    EXPECT_EQ(s.stats().accepted, 40u);
    EXPECT_EQ(s.stats().rejected, 0u);
    EXPECT_EQ(s.t(), 40.0);
    double prev = -1e9;
    for (const auto& a : s.anchors()) {
        if (a.t > 0) {
            EXPECT_NEAR(a.t - prev, 1.0, 1e-12);
        }
        prev = a.t;
    }
}

TEST(Dde, TimeDependentDelayIntegrates) {
    auto ex = lower(make_ode({-y(0, t() - (1.0 + 0.1 * sin(t())))}));
    DdeStepper s(ex, constant_past({1.0}, 0.0, 1.1), 1.1);
    s.integrate_blindly(1.1, 0.05);
    auto y = s.integrate_to(30.0);
    EXPECT_TRUE(std::isfinite(y[0]));
    EXPECT_LT(std::abs(y[0]), 1.0);
}

TEST(Dde, SunflowerCursorEfficiencyAndTruncation) {
    auto ex = sunflower();
    DdeStepper s(ex, constant_past({1.0, 0.0}, 0.0, 40.0), 40.0);
    s.step_on_discontinuities(std::vector<double>{40.0}, 1.0);
    double lo = 1e9, hi = -1e9;
    while (s.t() < 2000) {
        s.try_step();
        EXPECT_LE(s.anchors().front().t, s.t() - 40.0);
        EXPECT_GT(std::next(s.anchors().begin())->t, s.t() - 40.0);
        if (s.t() > 1000) {
            lo = std::min(lo, s.y()[0]);
            hi = std::max(hi, s.y()[0]);
        }
    }
    auto st = s.stats();
    ASSERT_GT(st.past_queries, 0u);
    EXPECT_LE(static_cast<double>(st.anchors_traversed) / static_cast<double>(st.past_queries), 1.1);
    // Sustained bounded oscillation after the transient.
    EXPECT_GT(hi - lo, 0.5);
    EXPECT_LT(hi - lo, 20.0);
}

TEST(Dde, HistoricalQueryBeforeWindowUnderflows) {
    auto ex = sunflower();
    DdeStepper s(ex, constant_past({1.0, 0.0}, 0.0, 40.0), 40.0);
    s.advance_past(200.0);
    EXPECT_THROW(s.integrate_to(10.0), PastUnderflow);
}
