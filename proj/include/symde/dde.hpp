#pragma once

// Delay differential equations: Bogacki-Shampine 3(2) steps whose stages read
// the past from cubic Hermite interpolants over the anchor list.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <span>
#include <vector>

#include "symde/anchors.hpp"
#include "symde/errors.hpp"
#include "symde/executable.hpp"
#include "symde/expression.hpp"
#include "symde/ode.hpp"

namespace symde {

struct DdeOptions {
    double atol = 1e-8;
    double rtol = 1e-6;
    double h_min = 1e-12;
    double h_max = std::numeric_limits<double>::infinity();
    double first_step = 0.0;
    /// Smallest constant delay, if known. Steps are capped by it during the
    /// first max-delay span, where the past of a stage may still lie inside
    /// the step and is extrapolated.
    double min_delay = 0.0;
};

struct DdeStats : StepStats {
    std::size_t past_queries = 0;
    std::size_t anchors_traversed = 0;
};

/// Propagated non-smoothness times t0 + sum k_j tau_j with 1 <= sum k_j <= 3.
inline std::vector<double> discontinuity_times(double t0, const std::vector<double>& delays, int order = 3) {
    for (double d : delays)
        if (!(d > 0.0) || !std::isfinite(d)) throw UsageError("discontinuity tracking needs positive finite delays");
    std::set<double> out;
    std::vector<double> level = {0.0};
    for (int k = 1; k <= order; ++k) {
        std::set<double> next;
        for (double base : level)
            for (double d : delays) next.insert(base + d);
        level.assign(next.begin(), next.end());
        for (double v : level) out.insert(t0 + v);
    }
    return {out.begin(), out.end()};
}

/// Numeric values of delays that must be constants, for discontinuity tracking.
inline std::vector<double> constant_delays(const std::vector<Expr>& delays) {
    std::vector<double> values;
    for (const Expr& d : delays) {
        if (d.kind() != Kind::constant)
            throw UsageError("delay '" + d.to_string() +
                             "' is not constant; use integrate_blindly for time- or state-dependent delays");
        values.push_back(d.value());
    }
    return values;
}

class DdeStepper {
public:
    DdeStepper(const ExecutableSystem& exec, AnchorList past, double max_delay, DdeOptions options = {},
               std::vector<double> params = {})
        : exec_(&exec), eval_(exec), opt_(options), params_(std::move(params)), anchors_(std::move(past)),
          max_delay_(max_delay), accessor_(this) {
        if (anchors_.size() < 2) throw UsageError("the initial past needs at least two anchors");
        if (anchors_.dimension() != exec.dimension) throw ContractViolation("initial past has the wrong dimension");
        if (!(max_delay >= 0.0) || !std::isfinite(max_delay)) throw UsageError("max_delay must be finite and >= 0");
        detail::check_tolerances(opt_.atol, opt_.rtol, opt_.h_min, opt_.h_max);
        if (anchors_.front().t > anchors_.back().t - max_delay)
            throw PastUnderflow("initial past does not cover the maximum delay");
        t_ = t0_ = anchors_.back().t;
        y_ = anchors_.back().y;
        const std::size_t n = y_.size();
        for (auto& k : k_) k.assign(n, 0.0);
        ynew_.assign(n, 0.0);
        tmp_.assign(n, 0.0);
        err_.assign(n, 0.0);
        refresh();
        h_ = opt_.first_step > 0.0 ? opt_.first_step
                                   : 0.01 * (1.0 + detail::max_abs(y_)) / (1.0 + detail::max_abs(k_[0]));
        h_ = std::clamp(h_, opt_.h_min, opt_.h_max);
    }

    DdeStepper(const DdeStepper&) = delete;
    DdeStepper& operator=(const DdeStepper&) = delete;

    double t() const noexcept { return t_; }
    double t0() const noexcept { return t0_; }
    double h() const noexcept { return h_; }
    double max_delay() const noexcept { return max_delay_; }
    const std::vector<double>& y() const noexcept { return y_; }
    const std::vector<double>& derivative() const noexcept { return k_[0]; }
    AnchorList& anchors() noexcept { return anchors_; }
    const AnchorList& anchors() const noexcept { return anchors_; }
    std::span<const double> params() const noexcept { return params_; }
    const DdeOptions& options() const noexcept { return opt_; }
    void set_step(double h) { h_ = std::clamp(h, opt_.h_min, opt_.h_max); }

    DdeStats stats() const {
        DdeStats s;
        static_cast<StepStats&>(s) = stats_;
        s.past_queries = anchors_.queries();
        s.anchors_traversed = anchors_.anchors_traversed();
        return s;
    }

    /// Re-reads the state from the newest anchor and recomputes the derivative
    /// there. Call after modifying anchors in place. If the derivative differs
    /// from the stored one, the anchor keeps its left derivative and records the
    /// new one as right-sided.
    void refresh() {
        Anchor& last = anchors_.back();
        t_ = last.t;
        y_ = last.y;
        f(t_, y_, k_[0]);
        if (k_[0] != last.dy) {
            last.dy_right = k_[0];
        } else {
            last.dy_right.clear();
        }
    }

    /// One trial step of at most `limit`. With `force` the step is accepted
    /// regardless of the error estimate.
    StepResult try_step(double limit = std::numeric_limits<double>::infinity(), bool force = false) {
        double h = std::min(h_, limit);
        if (!force && opt_.min_delay > 0.0 && t_ < t0_ + max_delay_) h = std::min(h, opt_.min_delay);
        last_h_ = h;
        stages(h);
        const std::size_t n = y_.size();
        for (std::size_t i = 0; i < n; ++i)
            err_[i] = h * (e1 * k_[0][i] + e2 * k_[1][i] + e3 * k_[2][i] + e4 * k_[3][i]);
        double norm = detail::error_norm(err_, y_, ynew_, opt_.atol, opt_.rtol);
        bool finite = std::isfinite(norm);
        for (std::size_t i = 0; finite && i < n; ++i) finite = std::isfinite(ynew_[i]) && std::isfinite(k_[3][i]);
        if (!finite) {
            ++stats_.rejected;
            if (force) throw NumericalFailure("non-finite state in a fixed step at t = " + std::to_string(t_));
            shrink(h, 0.5);
            return {false, std::numeric_limits<double>::infinity()};
        }
        double factor = norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -1.0 / 3.0), 0.2, 5.0);
        if (force || norm <= 1.0) {
            accept(h);
            if (!force) h_ = std::clamp(h * factor, opt_.h_min, opt_.h_max);
            return {true, norm};
        }
        ++stats_.rejected;
        shrink(h, factor);
        return {false, norm};
    }

    /// One force-accepted step of size h.
    void fixed_step(double h) {
        if (!(h > 0.0)) throw UsageError("step must be positive");
        const double saved = h_;
        h_ = h;
        try_step(h, true);
        h_ = saved;
    }

    /// Adaptive steps landing exactly on every discontinuity time; returns the
    /// anchors created at those times. With `until`, only discontinuities up to
    /// that time are handled, so repeated calls can interleave with output.
    std::vector<Anchor> step_on_discontinuities(const std::vector<double>& delays,
                                                double max_step = std::numeric_limits<double>::infinity(),
                                                double until = std::numeric_limits<double>::infinity()) {
        if (!(max_step > 0.0)) throw UsageError("max_step must be positive");
        std::vector<Anchor> landed;
        for (double target : discontinuity_times(t0_, delays)) {
            if (target <= t_) continue;
            if (target > until) break;
            while (t_ < target) {
                const double remaining = target - t_;
                StepResult r = try_step(std::min(remaining, max_step));
                if (r.accepted && last_h_ == remaining) snap_to(target);
            }
            landed.push_back(anchors_.back());
        }
        return landed;
    }

    /// ceil(duration / max_step) equal force-accepted steps.
    const std::vector<double>& integrate_blindly(double duration, double max_step) {
        if (!(duration >= 0.0) || !(max_step > 0.0)) throw UsageError("need duration >= 0 and max_step > 0");
        if (duration == 0.0) return y_;
        const auto steps = static_cast<long>(std::ceil(duration / max_step * (1 - 1e-14)));
        const double h = duration / static_cast<double>(steps);
        const double end = t_ + duration;
        for (long s = 0; s < steps; ++s) fixed_step(h);
        snap_to(end);
        return y_;
    }

    /// State at t_target, advancing with unclipped adaptive steps until the
    /// target is covered and interpolating between the bracketing anchors.
    std::vector<double> integrate_to(double t_target) {
        while (t_ < t_target) try_step();
        if (t_target == t_) return y_;
        return anchors_.state_at(t_target, query_site()).y;
    }

    /// Adaptive steps until t reaches at least t_target.
    void advance_past(double t_target) {
        while (t_ < t_target) try_step();
    }

private:
    class Accessor final : public PastAccessor {
    public:
        explicit Accessor(DdeStepper* s) : s_(s) {}
        PastSample sample(std::size_t index, double time, std::size_t site) override {
            return s_->anchors_.sample(site, index, time);
        }

    private:
        DdeStepper* s_;
    };

    // Bogacki-Shampine 3(2); e = b3 - b2 with the FSAL stage as fourth weight.
    static constexpr double e1 = -5.0 / 72, e2 = 1.0 / 12, e3 = 1.0 / 9, e4 = -1.0 / 8;

    std::size_t query_site() const { return exec_->sites; }

    void f(double t, std::span<const double> y, std::vector<double>& out) {
        eval_.drift(t, y, params_, exec_->uses_past ? &accessor_ : nullptr, out);
        ++stats_.evaluations;
    }

    void stages(double h) {
        const std::size_t n = y_.size();
        auto& k = k_;
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y_[i] + 0.5 * h * k[0][i];
        f(t_ + 0.5 * h, tmp_, k[1]);
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y_[i] + 0.75 * h * k[1][i];
        f(t_ + 0.75 * h, tmp_, k[2]);
        for (std::size_t i = 0; i < n; ++i)
            ynew_[i] = y_[i] + h * (2.0 / 9 * k[0][i] + 1.0 / 3 * k[1][i] + 4.0 / 9 * k[2][i]);
        f(t_ + h, ynew_, k[3]);
    }

    void accept(double h) {
        ++stats_.accepted;
        t_ += h;
        anchors_.append({t_, ynew_, k_[3], {}});
        std::swap(y_, ynew_);
        std::swap(k_[0], k_[3]);
        anchors_.truncate(t_ - max_delay_);
    }

    // Removes rounding drift in t after a step meant to end exactly at `target`.
    void snap_to(double target) {
        if (t_ == target) return;
        Anchor last = anchors_.back();
        last.t = target;
        anchors_.replace_back(std::move(last));
        t_ = target;
    }

    void shrink(double h, double factor) {
        double next = h * factor;
        if (next < opt_.h_min) {
            if (h <= opt_.h_min * (1 + 1e-12))
                throw NumericalFailure("step size fell below h_min = " + std::to_string(opt_.h_min) + " at t = " +
                                       std::to_string(t_));
            next = opt_.h_min;
        }
        h_ = std::min(next, opt_.h_max);
    }

    const ExecutableSystem* exec_;
    Evaluator eval_;
    DdeOptions opt_;
    std::vector<double> params_;
    AnchorList anchors_;
    double max_delay_;
    Accessor accessor_;
    double t_ = 0.0, t0_ = 0.0;
    double h_ = 0.0, last_h_ = 0.0;
    std::vector<double> y_;
    std::vector<double> k_[4];
    std::vector<double> ynew_, tmp_, err_;
    StepStats stats_;
};

} // namespace symde
