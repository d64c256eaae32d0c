#pragma once

// Diagonal-noise Ito SDEs: adaptive strong order 1.5 stochastic Runge-Kutta
// (SRIW1 for general noise, SRA1 for additive noise) with rejection sampling
// with memory, so rejected steps never distort the realized Wiener path.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "symde/calculus.hpp"
#include "symde/errors.hpp"
#include "symde/executable.hpp"
#include "symde/ode.hpp"
#include "symde/rng.hpp"
#include "symde/simplify.hpp"
#include "symde/system.hpp"

namespace symde {

enum class NoiseKind { general, additive };

inline const char* noise_kind_name(NoiseKind k) { return k == NoiseKind::additive ? "additive" : "general"; }

/// Additive iff no diffusion component depends on any state.
inline NoiseKind detect_additive(const SystemSpec& spec) {
    if (!spec.has_diffusion()) throw UsageError("system has no diffusion term");
    for (const Expr& g : spec.diffusion) {
        Expr full = expand_helpers(g, spec.helpers);
        for (std::size_t j = 0; j < spec.dimension; ++j) {
            Expr d = simplify_basic(differentiate(full, Expr::state(j)));
            if (!(d.kind() == Kind::constant && d.value() == 0.0)) return NoiseKind::general;
        }
    }
    return NoiseKind::additive;
}

/// Ito form of a Stratonovich system: f_i + 1/2 g_i dg_i/dy_i. Other
/// specifications are returned unchanged.
inline SystemSpec stratonovich_to_ito(const SystemSpec& spec) {
    if (spec.calculus != Calculus::stratonovich) return spec;
    SystemSpec out = spec;
    for (std::size_t i = 0; i < spec.dimension; ++i) {
        Expr g = expand_helpers(spec.diffusion[i], spec.helpers);
        Expr dg = simplify_basic(differentiate(g, Expr::state(i)));
        if (dg.kind() == Kind::constant && dg.value() == 0.0) continue;
        out.drift[i] = simplify_basic(spec.drift[i] + Expr(0.5) * spec.diffusion[i] * dg);
    }
    out.calculus = Calculus::ito;
    return out;
}

/// One piece of the Wiener path: W and an independent auxiliary Z, both with
/// variance dt, from which the iterated integral I_(1,0) is formed.
struct BrownianSegment {
    double dt = 0.0;
    std::vector<double> dW;
    std::vector<double> dZ;
};

/// Brownian-bridge value at fraction q of a segment: Normal(q dW, q(1-q) dt).
inline double brownian_bridge_sample(double dt, double dW, double q, Rng& rng) {
    if (!(q > 0.0 && q < 1.0)) throw ContractViolation("bridge fraction must lie in (0, 1)");
    return q * dW + std::sqrt(q * (1.0 - q) * dt) * rng.normal();
}

/// Splits a segment at fraction q; the parts' increments add up to the whole.
inline std::pair<BrownianSegment, BrownianSegment> split_segment(const BrownianSegment& s, double q, Rng& rng) {
    BrownianSegment a{q * s.dt, s.dW, s.dZ}, b{s.dt - q * s.dt, s.dW, s.dZ};
    for (std::size_t i = 0; i < s.dW.size(); ++i) {
        a.dW[i] = brownian_bridge_sample(s.dt, s.dW[i], q, rng);
        b.dW[i] = s.dW[i] - a.dW[i];
        a.dZ[i] = brownian_bridge_sample(s.dt, s.dZ[i], q, rng);
        b.dZ[i] = s.dZ[i] - a.dZ[i];
    }
    return {std::move(a), std::move(b)};
}

struct SdeOptions {
    double atol = 1e-4;
    double rtol = 1e-3;
    double h_min = 1e-12;
    double h_max = std::numeric_limits<double>::infinity();
    double first_step = 0.0;
    NoiseKind noise = NoiseKind::general;
};

struct SdeStats : StepStats {
    std::size_t fresh_samples = 0;
    std::size_t bridge_splits = 0;
};

class SdeStepper {
public:
    SdeStepper(const ExecutableSystem& exec, std::vector<double> y0, double t0, std::uint64_t seed,
               SdeOptions options = {}, std::vector<double> params = {})
        : exec_(&exec), eval_(exec), opt_(options), params_(std::move(params)), rng_(seed), t_(t0),
          y_(std::move(y0)) {
        if (!exec.has_diffusion) throw ContractViolation("SDE stepper needs a diffusion program");
        if (exec.uses_past) throw ContractViolation("delayed states are not supported in SDEs");
        if (y_.size() != exec.dimension) throw ContractViolation("initial state has the wrong dimension");
        detail::check_tolerances(opt_.atol, opt_.rtol, opt_.h_min, opt_.h_max);
        const std::size_t n = y_.size();
        for (auto* v : {&f1_, &f2_, &g1_, &g2_, &g3_, &g4_, &h0_, &h1_, &ynew_, &err_, &gnew_}) v->assign(n, 0.0);
        eval_.drift(t_, y_, params_, nullptr, f1_);
        eval_.diffusion(t_, y_, params_, nullptr, g1_);
        h_ = opt_.first_step > 0.0 ? opt_.first_step
                                   : 0.01 * (1.0 + detail::max_abs(y_)) / (1.0 + detail::max_abs(f1_));
        h_ = std::clamp(h_, opt_.h_min, opt_.h_max);
    }

    double t() const noexcept { return t_; }
    double h() const noexcept { return h_; }
    const std::vector<double>& y() const noexcept { return y_; }
    const SdeStats& stats() const noexcept { return stats_; }
    Rng& rng() noexcept { return rng_; }
    const std::vector<BrownianSegment>& future() const noexcept { return stack_; }
    /// Increment used by the most recent trial step.
    const BrownianSegment& last_increment() const noexcept { return last_; }

    /// Replaces the state (after a jump, for example) without touching the
    /// Wiener path ahead.
    void set_state(std::span<const double> y) {
        if (y.size() != y_.size()) throw ContractViolation("state has the wrong dimension");
        std::copy(y.begin(), y.end(), y_.begin());
        drift(t_, y_, f1_);
        noise(t_, y_, g1_);
    }

    void set_step(double h) { h_ = std::clamp(h, opt_.h_min, opt_.h_max); }

    /// One adaptive trial step of at most `limit`.
    StepResult try_step(double limit = std::numeric_limits<double>::infinity()) {
        const double h = std::min(h_, limit);
        last_ = draw(h);
        double norm = attempt(last_);
        if (!std::isfinite(norm)) {
            reject(h, 0.5);
            return {false, std::numeric_limits<double>::infinity()};
        }
        const double factor = norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.5), 0.2, 5.0);
        if (norm <= 1.0) {
            commit(last_.dt);
            h_ = std::clamp(h * factor, opt_.h_min, opt_.h_max);
            return {true, norm};
        }
        reject(h, factor);
        return {false, norm};
    }

    /// Unconditionally accepted step over the given increment.
    void fixed_step(const BrownianSegment& inc) {
        last_ = inc;
        if (!std::isfinite(attempt(last_))) throw NumericalFailure("non-finite state in a fixed SDE step at t = " + std::to_string(t_));
        commit(inc.dt);
    }

    /// Fixed step of size h with fresh increments from this stepper's generator.
    void fixed_step(double h) { fixed_step(fresh(h)); }

    /// Advances exactly to t_target.
    const std::vector<double>& integrate_to(double t_target) {
        if (t_target < t_) throw UsageError("cannot integrate backwards in time");
        while (t_ < t_target) {
            const double remaining = t_target - t_;
            StepResult r = try_step(remaining);
            if (r.accepted && last_.dt == remaining) t_ = t_target;
        }
        return y_;
    }

    BrownianSegment fresh(double h) {
        BrownianSegment s{h, std::vector<double>(y_.size()), std::vector<double>(y_.size())};
        const double sd = std::sqrt(h);
        for (std::size_t i = 0; i < y_.size(); ++i) {
            s.dW[i] = sd * rng_.normal();
            s.dZ[i] = sd * rng_.normal();
        }
        ++stats_.fresh_samples;
        return s;
    }

private:
    // Increment over [t, t + h]: stack segments first (splitting the last one
    // used by a bridge if it reaches past t + h), fresh samples after.
    BrownianSegment draw(double h) {
        const std::size_t n = y_.size();
        BrownianSegment out{0.0, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
        auto absorb = [&](const BrownianSegment& s) {
            out.dt += s.dt;
            for (std::size_t i = 0; i < n; ++i) {
                out.dW[i] += s.dW[i];
                out.dZ[i] += s.dZ[i];
            }
        };
        const double eps = 1e-12 * h;
        while (!stack_.empty() && out.dt < h - eps) {
            BrownianSegment top = std::move(stack_.back());
            stack_.pop_back();
            const double need = h - out.dt;
            if (top.dt > need + eps) {
                auto [first, rest] = split_segment(top, need / top.dt, rng_);
                ++stats_.bridge_splits;
                stack_.push_back(std::move(rest));
                absorb(first);
            } else {
                absorb(top);
            }
        }
        if (out.dt < h - eps) absorb(fresh(h - out.dt));
        if (std::abs(out.dt - h) <= eps) out.dt = h;
        return out;
    }

    void reject(double h, double factor) {
        ++stats_.rejected;
        stack_.push_back(last_);
        double next = h * factor;
        if (next < opt_.h_min) {
            if (h <= opt_.h_min * (1 + 1e-12))
                throw NumericalFailure("step size fell below h_min = " + std::to_string(opt_.h_min) + " at t = " +
                                       std::to_string(t_));
            next = opt_.h_min;
        }
        h_ = std::min(next, opt_.h_max);
    }

    void commit(double dt) {
        ++stats_.accepted;
        t_ += dt;
        std::swap(y_, ynew_);
        std::swap(g1_, gnew_);
        drift(t_, y_, f1_);
    }

    void drift(double t, const std::vector<double>& y, std::vector<double>& out) {
        eval_.drift(t, y, params_, nullptr, out);
        ++stats_.evaluations;
    }
    void noise(double t, const std::vector<double>& y, std::vector<double>& out) {
        eval_.diffusion(t, y, params_, nullptr, out);
        ++stats_.evaluations;
    }

    // Computes ynew_ and the error estimate for the increment. Returns the
    // scaled RMS norm (non-finite when the trial produced non-finite values).
    double attempt(const BrownianSegment& inc) {
        const std::size_t n = y_.size();
        const double h = inc.dt, sh = std::sqrt(h);
        return opt_.noise == NoiseKind::additive ? sra1(inc, h, n) : sriw1(inc, h, sh, n);
    }

    double sriw1(const BrownianSegment& inc, double h, double sh, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            const double i10 = 0.5 * (inc.dW[i] + inc.dZ[i] / std::sqrt(3.0)); // I_(1,0) / h
            h0_[i] = y_[i] + 0.75 * h * f1_[i] + 1.5 * i10 * g1_[i];
            h1_[i] = y_[i] + 0.25 * h * f1_[i] + 0.5 * sh * g1_[i];
        }
        noise(t_ + 0.25 * h, h1_, g2_);
        for (std::size_t i = 0; i < n; ++i) h1_[i] = y_[i] + h * f1_[i] - sh * g1_[i];
        noise(t_ + h, h1_, g3_);
        for (std::size_t i = 0; i < n; ++i)
            h1_[i] = y_[i] + 0.25 * h * f1_[i] + sh * (-5.0 * g1_[i] + 3.0 * g2_[i] + 0.5 * g3_[i]);
        noise(t_ + 0.25 * h, h1_, g4_);
        drift(t_ + 0.75 * h, h0_, f2_);
        for (std::size_t i = 0; i < n; ++i) {
            const double dw = inc.dW[i];
            const double chi1 = (dw * dw - h) / (2.0 * sh);                  // I_(1,1) / sqrt(h)
            const double chi2 = 0.5 * (dw + inc.dZ[i] / std::sqrt(3.0));     // I_(1,0) / h
            const double chi3 = (dw * dw * dw - 3.0 * dw * h) / (6.0 * h);   // I_(1,1,1) / h
            const double high = chi2 * (2.0 * g1_[i] - 4.0 / 3 * g2_[i] - 2.0 / 3 * g3_[i]) +
                                chi3 * (-2.0 * g1_[i] + 5.0 / 3 * g2_[i] - 2.0 / 3 * g3_[i] + g4_[i]);
            ynew_[i] = y_[i] + h * (f1_[i] + 2.0 * f2_[i]) / 3.0 +
                       dw * (-g1_[i] + 4.0 / 3 * g2_[i] + 2.0 / 3 * g3_[i]) +
                       chi1 * (-g1_[i] + 4.0 / 3 * g2_[i] - 1.0 / 3 * g3_[i]) + high;
            err_[i] = std::abs(h * (f2_[i] - f1_[i])) + std::abs(high);
        }
        return scaled_norm(h);
    }

    double sra1(const BrownianSegment& inc, double h, std::size_t n) {
        noise(t_ + h, y_, g2_);
        for (std::size_t i = 0; i < n; ++i) {
            const double chi2 = 0.5 * (inc.dW[i] + inc.dZ[i] / std::sqrt(3.0));
            h0_[i] = y_[i] + 0.75 * h * f1_[i] + 1.5 * chi2 * g2_[i];
        }
        drift(t_ + 0.75 * h, h0_, f2_);
        for (std::size_t i = 0; i < n; ++i) {
            const double chi2 = 0.5 * (inc.dW[i] + inc.dZ[i] / std::sqrt(3.0));
            const double high = chi2 * (g1_[i] - g2_[i]);
            ynew_[i] = y_[i] + h * (f1_[i] + 2.0 * f2_[i]) / 3.0 + inc.dW[i] * g2_[i] + high;
            err_[i] = std::abs(h * (f2_[i] - f1_[i])) + std::abs(high);
        }
        return scaled_norm(h);
    }

    // The diffusion at the candidate state is needed by the next step anyway;
    // evaluating it here also rejects steps into a region where it is undefined
    // (a square root of a slightly negative state, say).
    double scaled_norm(double h) {
        for (double v : ynew_)
            if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
        noise(t_ + h, ynew_, gnew_);
        for (double v : gnew_)
            if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
        return detail::error_norm(err_, y_, ynew_, opt_.atol, opt_.rtol);
    }

    const ExecutableSystem* exec_;
    Evaluator eval_;
    SdeOptions opt_;
    std::vector<double> params_;
    Rng rng_;
    double t_;
    double h_ = 0.0;
    std::vector<double> y_;
    std::vector<double> f1_, f2_, g1_, g2_, g3_, g4_, h0_, h1_, ynew_, err_, gnew_;
    std::vector<BrownianSegment> stack_;
    BrownianSegment last_;
    SdeStats stats_;
};

/// Compound-Poisson jumps: events at the given rate, each adding amplitude(t, y, rng).
struct JumpSpec {
    double rate = 0.0;
    std::function<std::vector<double>(double, const std::vector<double>&, Rng&)> amplitude;
};

/// Drives an SdeStepper between jump times. Jump times and amplitudes come
/// from a generator separate from the Wiener increments.
class JumpDiffusion {
public:
    JumpDiffusion(SdeStepper& stepper, JumpSpec jumps, std::uint64_t seed)
        : s_(&stepper), jumps_(std::move(jumps)), rng_(derive_seed(seed, 0x6a756d70)) {
        if (!(jumps_.rate >= 0.0) || !std::isfinite(jumps_.rate)) throw UsageError("jump rate must be finite and >= 0");
        if (jumps_.rate > 0.0 && !jumps_.amplitude) throw UsageError("jump amplitude sampler missing");
        next_ = jumps_.rate > 0.0 ? s_->t() + rng_.exponential(jumps_.rate) : std::numeric_limits<double>::infinity();
    }

    /// Integrates to t_target; a jump falling exactly on t_target is applied
    /// before returning.
    const std::vector<double>& integrate_to(double t_target) {
        while (next_ <= t_target) {
            s_->integrate_to(next_);
            auto a = jumps_.amplitude(next_, s_->y(), rng_);
            if (a.size() != s_->y().size()) throw ContractViolation("jump amplitude has the wrong dimension");
            std::vector<double> y = s_->y();
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += a[i];
            s_->set_state(y);
            ++count_;
            next_ += rng_.exponential(jumps_.rate);
        }
        return s_->integrate_to(t_target);
    }

    std::size_t jumps_applied() const noexcept { return count_; }
    double next_jump() const noexcept { return next_; }

private:
    SdeStepper* s_;
    JumpSpec jumps_;
    Rng rng_;
    double next_;
    std::size_t count_ = 0;
};

} // namespace symde
