#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace symde;
using namespace symde::sym;
using testing_support::random_expr;
using testing_support::random_point;

namespace {

double eval_row(const Expr& e, const std::vector<double>& y, double a = 0.7) {
    EvalContext ctx;
    ctx.y = y;
    ctx.parameters["a"] = a;
    return evaluate(e, ctx);
}

// Five-point Gauss-Legendre on [lo, hi]; exact for polynomials up to degree 9.
template <class F>
double gauss5(F f, double lo, double hi) {
    static const double x[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                0.9061798459386640};
    static const double w[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                                0.2369268850561891};
    double s = 0;
    for (int i = 0; i < 5; ++i) s += w[i] * f(0.5 * (hi - lo) * x[i] + 0.5 * (hi + lo));
    return 0.5 * (hi - lo) * s;
}

// Builds an anchor list sampling fn and its derivative at n + 1 equally spaced points of [lo, hi].
template <class F, class D>
AnchorList sampled(F fn, D dfn, double lo, double hi, std::size_t n) {
    AnchorList list;
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n);
        list.append({t, fn(t), dfn(t), {}});
    }
    return list;
}

SystemSpec rossler(double a, double b, double c) {
    return make_ode({-y(1) - y(2), y(0) + a * y(1), b + y(2) * (y(0) - c)});
}

double mean_exponent(OdeLyapunov& run, double interval, double until, std::size_t k = 0) {
    double s = 0, w = 0;
    while (run.t() < until) {
        auto sample = run.step(interval);
        s += sample.local[k] * sample.weight;
        w += sample.weight;
    }
    return s / w;
}

} // namespace

// ---------------------------------------------------------------------------
// Tangent generation

TEST(Tangent, NegativeIdentity) {
    auto aug = augment_ode(make_ode({-y(0)}), 1);
    ASSERT_EQ(aug.spec.dimension, 2u);
    for (double z : {-2.0, 0.5, 3.0}) EXPECT_DOUBLE_EQ(eval_row(aug.spec.drift[1], {0.3, z}), -z);
}

TEST(Tangent, RosslerThirdComponent) {
    const double c = 5.7;
    auto aug = augment_ode(rossler(0.2, 0.2, c), 1);
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto v = random_point(rng, 6, -3, 3);
        EXPECT_NEAR(eval_row(aug.spec.drift[5], v), v[5] * (v[0] - c) + v[2] * v[3], 1e-12);
    }
    // z1 does not enter the third row: its partial derivative is dropped, not kept as zero.
    EXPECT_FALSE(any_node(aug.spec.drift[5], [](const Expr& e) { return e.kind() == Kind::state && e.index() == 4; }));
}

TEST(Tangent, LinearSystemCopiesItself) {
    auto spec = make_ode({2.0 * y(0) - y(1), 0.5 * y(0) + 3.0 * y(1)});
    auto aug = augment_ode(spec, 2);
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        auto v = random_point(rng, 6);
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t i = 0; i < 2; ++i)
                EXPECT_NEAR(eval_row(aug.spec.drift[aug.offset(k) + i], v),
                            eval_row(spec.drift[i], {v[aug.offset(k)], v[aug.offset(k) + 1]}), 1e-12);
    }
}

TEST(Tangent, LinearInTangentStates) {
    Rng rng(6);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<Expr> f = {random_expr(rng, 3, 4), random_expr(rng, 3, 4), random_expr(rng, 3, 4)};
        auto spec = make_ode(f, 3, {}, {"a"});
        auto aug = augment_ode(spec, 1);
        auto v = random_point(rng, 6);
        auto scaled = v;
        const double c = rng.uniform(-3, 3);
        for (std::size_t i = 3; i < 6; ++i) scaled[i] *= c;
        for (std::size_t i = 3; i < 6; ++i) {
            const double base = eval_row(aug.spec.drift[i], v);
            EXPECT_NEAR(eval_row(aug.spec.drift[i], scaled), c * base, 1e-9 * (1 + std::fabs(c * base)));
        }
    }
}

TEST(Tangent, JacobianVectorProductMatchesFiniteDifferences) {
    Rng rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Expr> f = {random_expr(rng, 2, 4), random_expr(rng, 2, 4)};
        auto spec = make_ode(f, 2, {}, {"a"});
        auto aug = augment_ode(spec, 1);
        auto v = random_point(rng, 4);
        for (std::size_t i = 0; i < 2; ++i) {
            const double eps = 1e-6;
            std::vector<double> p = {v[0] + eps * v[2], v[1] + eps * v[3]}, m = {v[0] - eps * v[2], v[1] - eps * v[3]};
            const double fd = (eval_row(f[i], p) - eval_row(f[i], m)) / (2 * eps);
            EXPECT_NEAR(eval_row(aug.spec.drift[2 + i], v), fd, 1e-5 * (1 + std::fabs(fd)));
        }
    }
}

TEST(Tangent, DelayedTermsLinearDde) {
    auto aug = augment_dde(make_ode({-y(0, t() - 1.0)}), {1.0}, 1);
    EvalContext ctx;
    std::vector<double> v = {0.4, 9.0};
    ctx.y = v;
    ctx.t = 5.0;
    ctx.past = [](std::size_t i, double time) { return i == 1 ? 2.5 + time : 100.0; };
    EXPECT_DOUBLE_EQ(evaluate(aug.spec.drift[1], ctx), -(2.5 + 4.0));
}

TEST(Tangent, SunflowerDelayedTerm) {
    const double tau = 40, a = 4.8, b = 0.186;
    auto spec = make_ode({y(1), -a / tau * y(1) - b / tau * sin(y(0, t() - tau))});
    auto aug = augment_dde(spec, {tau}, 1);
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        const double p0 = rng.uniform(-3, 3), pz = rng.uniform(-2, 2);
        std::vector<double> v = random_point(rng, 4);
        EvalContext ctx;
        ctx.y = v;
        ctx.t = 100;
        ctx.past = [&](std::size_t i, double) { return i == 0 ? p0 : i == 2 ? pz : 0.0; };
        EXPECT_NEAR(evaluate(aug.spec.drift[3], ctx), -a / tau * v[3] - b / tau * std::cos(p0) * pz, 1e-14);
    }
    auto nodes = collect_past_nodes({aug.spec.drift[3]});
    bool found = false;
    for (const auto& n : nodes) found |= n.index() == 2;
    EXPECT_TRUE(found);
}

TEST(Tangent, DelayFreeDdeAugmentationMatchesOde) {
    auto spec = rossler(0.2, 0.2, 5.7);
    auto a = augment_ode(spec, 2), b = augment_dde(spec, {}, 2);
    ASSERT_EQ(a.spec.drift.size(), b.spec.drift.size());
    for (std::size_t i = 0; i < a.spec.drift.size(); ++i) EXPECT_TRUE(ExprEqual{}(a.spec.drift[i], b.spec.drift[i]));
}

TEST(Tangent, RejectsStochasticSystems) {
    auto spec = make_sde({-y(0)}, {Expr(0.1)}, Calculus::ito);
    EXPECT_THROW(augment_ode(spec, 1), UsageError);
}

// ---------------------------------------------------------------------------
// Gram-Schmidt

TEST(GramSchmidt, HandExample) {
    std::vector<std::vector<double>> v = {{1, 0}, {1, 1}};
    auto r = orthonormalize_vectors(v);
    EXPECT_NEAR(r[0], 1, 1e-15);
    EXPECT_NEAR(r[1], 1, 1e-15);
    EXPECT_NEAR(v[1][0], 0, 1e-15);
    EXPECT_NEAR(v[1][1], 1, 1e-15);
}

TEST(GramSchmidt, OrthonormalInputUnchanged) {
    const double s = std::sqrt(0.5);
    std::vector<std::vector<double>> v = {{s, s, 0}, {-s, s, 0}, {0, 0, 1}};
    auto before = v;
    auto r = orthonormalize_vectors(v);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_NEAR(r[k], 1, 1e-15);
        for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(v[k][i], before[k][i], 1e-15);
    }
}

TEST(GramSchmidt, Homogeneity) {
    Rng rng(9);
    std::vector<std::vector<double>> v = {random_point(rng, 4), random_point(rng, 4)};
    auto w = v;
    for (double& x : w[0]) x *= -3.5;
    auto r = orthonormalize_vectors(v), q = orthonormalize_vectors(w);
    EXPECT_NEAR(q[0], 3.5 * r[0], 1e-12);
    EXPECT_NEAR(q[1], r[1], 1e-12);
}

TEST(GramSchmidt, DegenerateResidualReplaced) {
    std::vector<std::vector<double>> v = {{1, 2, 0}, {2, 4, 0}, {0, 0, 0}};
    auto r = orthonormalize_vectors(v);
    EXPECT_EQ(r[1], 0.0);
    EXPECT_EQ(r[2], 0.0);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
            double d = 0;
            for (std::size_t i = 0; i < 3; ++i) d += v[a][i] * v[b][i];
            EXPECT_NEAR(d, a == b ? 1.0 : 0.0, 1e-12);
        }
}

// ---------------------------------------------------------------------------
// Gram blocks and the window scalar product

TEST(Gram, ClosedForm) {
    auto g = hermite_gram();
    const double expected[4][4] = {{13.0 / 35, 11.0 / 210, 9.0 / 70, -13.0 / 420},
                                   {11.0 / 210, 1.0 / 105, 13.0 / 420, -1.0 / 140},
                                   {9.0 / 70, 13.0 / 420, 13.0 / 35, -11.0 / 210},
                                   {-13.0 / 420, -1.0 / 140, -11.0 / 210, 1.0 / 105}};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) EXPECT_NEAR(g[i][j], expected[i][j], 1e-15);
}

TEST(Gram, MatchesQuadrature) {
    for (double s0 : {0.0, 0.1, 0.37, 0.5, 0.9}) {
        auto g = hermite_gram(s0);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                auto phi = [](int k, double s) {
                    HermiteBasis b(s);
                    return k == 0 ? b.h00 : k == 1 ? b.h10 : k == 2 ? b.h01 : b.h11;
                };
                const double q = gauss5([&](double s) { return phi(i, s) * phi(j, s); }, s0, 1.0);
                EXPECT_NEAR(g[i][j], q, 1e-12) << "s0=" << s0 << " i=" << i << " j=" << j;
            }
    }
}

TEST(Window, IdentityProductIsOneThird) {
    AnchorList list;
    list.append({0.0, {0.0, 0.0}, {1.0, 1.0}, {}});
    list.append({1.0, {1.0, 1.0}, {1.0, 1.0}, {}});
    const std::vector<std::size_t> v = {0}, w = {1};
    EXPECT_NEAR(window_scalar_product(list, 0.0, v, w), 1.0 / 3.0, 1e-10);
}

TEST(Window, UnitConstantGivesLength) {
    auto list = sampled([](double) { return std::vector<double>{1.0}; }, [](double) { return std::vector<double>{0.0}; },
                        -3.0, 2.0, 7);
    const std::vector<std::size_t> v = {0};
    EXPECT_NEAR(window_scalar_product(list, -3.0, v, v), 5.0, 1e-12);
    // The window start cuts an interval in its interior.
    EXPECT_NEAR(window_scalar_product(list, -1.3, v, v), 3.3, 1e-12);
}

TEST(Window, PartialIntervalMatchesIntegral) {
    auto list = sampled([](double t) { return std::vector<double>{t * t, 1 - t}; },
                        [](double t) { return std::vector<double>{2 * t, -1.0}; }, 0.0, 3.0, 4);
    const std::vector<std::size_t> v = {0}, w = {1};
    const double t0 = 0.4, exact = (3 * 3 * 3 / 3.0 - 81 / 4.0) - (t0 * t0 * t0 / 3 - t0 * t0 * t0 * t0 / 4);
    EXPECT_NEAR(window_scalar_product(list, t0, v, w), exact, 1e-12);
}

TEST(Window, EvenOddOrthogonal) {
    auto list = sampled([](double t) { return std::vector<double>{t * t + 1, t * t * t - t}; },
                        [](double t) { return std::vector<double>{2 * t, 3 * t * t - 1}; }, -2.0, 2.0, 8);
    const std::vector<std::size_t> v = {0}, w = {1};
    EXPECT_NEAR(window_scalar_product(list, -2.0, v, w), 0.0, 1e-12);
}

TEST(Window, SymmetricPositiveDefinite) {
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        AnchorList list;
        double t = rng.uniform(-5, 5);
        const std::size_t count = 2 + rng.below(6);
        for (std::size_t k = 0; k < count; ++k) {
            list.append({t, random_point(rng, 4, -2, 2), random_point(rng, 4, -2, 2), {}});
            t += rng.uniform(0.05, 2.0);
        }
        const double start = list.front().t + rng.uniform(0, 0.9) * (std::next(list.begin())->t - list.front().t);
        const std::vector<std::size_t> a = {0, 1}, b = {2, 3};
        const double ab = window_scalar_product(list, start, a, b), ba = window_scalar_product(list, start, b, a);
        EXPECT_NEAR(ab, ba, 1e-12 * (1 + std::fabs(ab)));
        EXPECT_GT(window_scalar_product(list, start, a, a), 0.0);
        EXPECT_GT(window_scalar_product(list, start, b, b), 0.0);
    }
}

TEST(Window, MismatchedBlocksRejected) {
    AnchorList list;
    list.append({0.0, {0.0, 0.0}, {1.0, 1.0}, {}});
    list.append({1.0, {1.0, 1.0}, {1.0, 1.0}, {}});
    const std::vector<std::size_t> one = {0}, two = {0, 1}, bad = {5};
    EXPECT_THROW(window_scalar_product(list, 0.0, one, two), ContractViolation);
    EXPECT_THROW(window_scalar_product(list, 0.0, one, bad), ContractViolation);
}

TEST(Window, ConvergesToContinuumProduct) {
    // Sampled values with finite-difference slopes; the error must fall at least quadratically.
    auto f = [](double t) { return std::sin(3 * t); };
    const double exact = 0.5 - std::sin(6.0) / 12.0; // integral of sin^2(3t) over [0, 1]
    std::vector<double> err;
    for (std::size_t n : {4u, 8u, 16u, 32u}) {
        const double h = 1.0 / static_cast<double>(n);
        auto list = sampled([&](double t) { return std::vector<double>{f(t)}; },
                            [&](double t) { return std::vector<double>{(f(t + h) - f(t - h)) / (2 * h)}; }, 0.0, 1.0, n);
        const std::vector<std::size_t> v = {0};
        err.push_back(std::fabs(window_scalar_product(list, 0.0, v, v) - exact));
    }
    for (std::size_t k = 1; k < err.size(); ++k) EXPECT_GE(std::log2(err[k - 1] / err[k]), 2.0);
}

// ---------------------------------------------------------------------------
// Benettin runs

TEST(Benettin, ExponentialGrowthRate) {
    for (double a : {0.3, -0.7}) {
        auto aug = augment_ode(make_ode({a * y(0)}), 1);
        auto ex = lower(aug.spec);
        OdeLyapunov run(ex, aug, {1.0}, 0.0, 1);
        for (int k = 0; k < 50; ++k) {
            auto s = run.step(1.0);
            EXPECT_NEAR(s.local[0], a, 1e-6);
            EXPECT_NEAR(s.weight, 1.0, 1e-12);
        }
    }
}

TEST(Benettin, DiagonalVectorsAlignWithAxes) {
    auto aug = augment_ode(make_ode({y(0), -y(1)}), 2);
    auto ex = lower(aug.spec);
    OdeLyapunov run(ex, aug, {1e-3, 1e-3}, 0.0, 3);
    for (int k = 0; k < 40; ++k) run.step(0.5);
    auto v = run.vectors();
    EXPECT_GT(std::fabs(v[0][0]), 0.999);
    EXPECT_GT(std::fabs(v[1][1]), 0.999);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b)
            EXPECT_NEAR(v[a][0] * v[b][0] + v[a][1] * v[b][1], a == b ? 1.0 : 0.0, 1e-10);
}

TEST(Benettin, SpectrumSumsToTrace) {
    auto spec = make_ode({0.1 * y(0) + y(1), -y(0) - 0.3 * y(1)});
    auto aug = augment_ode(spec, 2);
    auto ex = lower(aug.spec);
    OdeLyapunov run(ex, aug, {1.0, 0.0}, 0.0, 4);
    double s0 = 0, s1 = 0, w = 0;
    while (run.t() < 500) {
        auto s = run.step(1.0);
        s0 += s.local[0] * s.weight;
        s1 += s.local[1] * s.weight;
        w += s.weight;
    }
    EXPECT_NEAR((s0 + s1) / w, -0.2, 1e-4);
}

TEST(Benettin, RosslerLargestExponentPositive) {
    auto aug = augment_ode(rossler(0.2, 0.2, 5.7), 1);
    auto ex = lower(aug.spec);
    OdeLyapunov run(ex, aug, {1.0, 1.0, 1.0}, 0.0, 5);
    while (run.t() < 100) run.step(1.0);
    const double lambda = mean_exponent(run, 1.0, 3000);
    EXPECT_GT(lambda, 0.05);
    EXPECT_LT(lambda, 0.1);
}

TEST(Benettin, LinearDdeRightmostRoots) {
    // Characteristic roots of y' = -y(t - 1): the rightmost pair has real part -0.318132.
    auto aug = augment_dde(make_ode({-y(0, t() - 1.0)}), {1.0}, 2);
    auto ex = lower(aug.spec);
    DdeOptions o;
    o.atol = 1e-10;
    o.rtol = 1e-8;
    DdeLyapunov run(ex, aug, constant_past({1.0}, 0.0, 1.0), 1.0, 6, o);
    double s0 = 0, s1 = 0, w = 0;
    while (run.t() < 20) run.step(1.0);
    while (run.t() < 400) {
        auto s = run.step(1.0);
        s0 += s.local[0] * s.weight;
        s1 += s.local[1] * s.weight;
        w += s.weight;
    }
    EXPECT_NEAR(s0 / w, -0.318132, 0.01);
    EXPECT_NEAR(s1 / w, -0.318132, 0.01);
}

TEST(Benettin, WeightsAreActualIntervals) {
    auto aug = augment_dde(make_ode({-y(0, t() - 1.0)}), {1.0}, 1);
    auto ex = lower(aug.spec);
    DdeLyapunov run(ex, aug, constant_past({1.0}, 0.0, 1.0), 1.0, 7);
    double previous = run.t();
    for (int k = 0; k < 20; ++k) {
        auto s = run.step(0.7);
        EXPECT_GE(s.weight, 0.7);
        EXPECT_NEAR(s.weight, s.t - previous, 1e-12);
        previous = s.t;
    }
}

TEST(Benettin, DdeTangentsOrthonormalInWindow) {
    const double tau = 40, a = 4.8, b = 0.186;
    auto spec = make_ode({y(1), -a / tau * y(1) - b / tau * sin(y(0, t() - tau))});
    auto aug = augment_dde(spec, {tau}, 3);
    auto ex = lower(aug.spec);
    DdeLyapunov run(ex, aug, constant_past({1.0, 0.0}, 0.0, tau), tau, 8);
    for (int k = 0; k < 10; ++k) run.step(10.0);
    auto& anchors = run.stepper().anchors();
    for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t q = 0; q < 3; ++q) {
            const std::vector<std::size_t> v = {aug.offset(p), aug.offset(p) + 1}, w = {aug.offset(q), aug.offset(q) + 1};
            EXPECT_NEAR(window_scalar_product(anchors, run.window_start(), v, w), p == q ? 1.0 : 0.0, 1e-10);
        }
}

TEST(Benettin, NormOverflowReported) {
    auto aug = augment_ode(make_ode({400.0 * y(0)}), 1);
    auto ex = lower(aug.spec);
    OdeLyapunov run(ex, aug, {1.0}, 0.0, 9);
    EXPECT_THROW(run.step(5.0), NumericalFailure);
}

// ---------------------------------------------------------------------------
// Transversal exponents

TEST(Transversal, TransformInverse) {
    for (std::size_t s = 2; s <= 6; ++s) {
        auto a = transversal_matrix(s), b = transversal_inverse(s);
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = 0; j < s; ++j) {
                double d = 0;
                for (std::size_t k = 0; k < s; ++k) d += a[i][k] * b[k][j];
                EXPECT_NEAR(d, i == j ? 1.0 : 0.0, 1e-12) << "s=" << s;
            }
    }
}

TEST(Transversal, GroupSizeFourMatrices) {
    auto a = transversal_matrix(4), b = transversal_inverse(4);
    const double ea[4][4] = {{1, 1, 1, 1}, {1, -1, 0, 0}, {0, 1, -1, 0}, {0, 0, 1, -1}};
    const double eb[4][4] = {{0.25, 0.75, 0.5, 0.25}, {0.25, -0.25, 0.5, 0.25}, {0.25, -0.25, -0.5, 0.25},
                             {0.25, -0.25, -0.5, -0.75}};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_EQ(a[i][j], ea[i][j]);
            EXPECT_DOUBLE_EQ(b[i][j], eb[i][j]);
        }
}

TEST(Transversal, InvalidGroups) {
    auto spec = make_ode({-y(0), -y(1), -y(2)});
    EXPECT_THROW(transversal_setup(spec, {{0, 1}, {1, 2}}), UsageError);
    EXPECT_THROW(transversal_setup(spec, {{0, 3}}), UsageError);
    EXPECT_THROW(transversal_setup(spec, {{0}}), UsageError);
    EXPECT_THROW(transversal_setup(spec, {}), UsageError);
}

TEST(Transversal, TrivialPairGivesGrowthRate) {
    const double a = 0.25;
    auto ts = transversal_setup(make_ode({a * y(0), a * y(1)}), {{0, 1}});
    EXPECT_EQ(ts.augmented.base_dimension, 1u);
    EXPECT_EQ(ts.augmented.tangent_dimension, 1u);
    auto ex = lower(ts.augmented.spec);
    OdeLyapunov run(ex, ts.augmented, {1e-3}, 0.0, 10);
    EXPECT_NEAR(mean_exponent(run, 1.0, 50.0), a, 1e-3);
}

TEST(Transversal, ReducedSystemKeepsUngroupedComponents) {
    auto spec = make_ode({y(2) - y(0), y(2) - y(1), -y(2) + y(0) * y(1)});
    auto ts = transversal_setup(spec, {{0, 1}});
    ASSERT_EQ(ts.representatives, (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(ts.reduced_index[1], 0u);
    EXPECT_EQ(ts.reduced_index[2], 1u);
    // Reduced: y0' = y1 - y0, y1' = -y1 + y0^2.
    std::vector<double> v = {0.7, -0.4, 1.3};
    EXPECT_NEAR(eval_row(ts.augmented.spec.drift[0], v), -0.4 - 0.7, 1e-14);
    EXPECT_NEAR(eval_row(ts.augmented.spec.drift[1], v), 0.4 + 0.49, 1e-14);
    // The difference coordinate obeys z' = -z.
    EXPECT_NEAR(eval_row(ts.augmented.spec.drift[2], v), -1.3, 1e-14);
    EXPECT_EQ(ts.reduce(std::vector<double>{1, 1, 2}), (std::vector<double>{1, 2}));
}

TEST(Transversal, MatchesProjectedFullSystem) {
    // Two diffusively coupled periodic Roessler oscillators.
    const double k = 0.05;
    auto r = [&](std::size_t o, std::size_t other) {
        return std::vector<Expr>{-y(o + 1) - y(o + 2) + k * (y(other) - y(o)), y(o) + 0.2 * y(o + 1),
                                 0.2 + y(o + 2) * (y(o) - 2.5)};
    };
    auto first = r(0, 3), second = r(3, 0);
    first.insert(first.end(), second.begin(), second.end());
    auto spec = make_ode(first);

    auto ts = transversal_setup(spec, {{0, 3}, {1, 4}, {2, 5}});
    auto ex = lower(ts.augmented.spec);
    OdeOptions o;
    o.atol = 1e-10;
    o.rtol = 1e-10;
    OdeLyapunov run(ex, ts.augmented, {1.0, 1.0, 0.1}, 0.0, 11, o);
    while (run.t() < 200) run.step(1.0);
    const double reduced = mean_exponent(run, 1.0, 2200);

    // Full system plus one tangent; the tangent's symmetric part is removed at every renormalization.
    auto aug = augment_ode(spec, 1);
    auto full = lower(aug.spec);
    OdeStepper s(full, {1.0, 1.0, 0.1, 1.0, 1.0, 0.1, 0.3, -0.2, 0.5, -0.1, 0.4, 0.2}, 0.0, o);
    double sum = 0, time = 0;
    for (int step = 1; step <= 2200; ++step) {
        s.integrate_to(step);
        auto y = s.y();
        for (std::size_t c = 0; c < 3; ++c) {
            const double mean = 0.5 * (y[6 + c] + y[9 + c]);
            y[6 + c] -= mean;
            y[9 + c] -= mean;
        }
        double norm = 0;
        for (std::size_t i = 6; i < 12; ++i) norm += y[i] * y[i];
        norm = std::sqrt(norm);
        for (std::size_t i = 6; i < 12; ++i) y[i] /= norm;
        s.set_state(y);
        if (step > 200) {
            sum += std::log(norm);
            time += 1.0;
        }
    }
    const double brute = sum / time;
    EXPECT_NEAR(reduced, brute, 0.05 * std::fabs(brute));
}
