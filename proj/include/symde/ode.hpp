#pragma once

// Adaptive Dormand-Prince 5(4) integration of lowered ODE programs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "symde/errors.hpp"
#include "symde/executable.hpp"

namespace symde {

struct StepStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t evaluations = 0;
};

struct StepResult {
    bool accepted = false;
    double error_norm = 0.0;
};

struct OdeOptions {
    double atol = 1e-8;
    double rtol = 1e-6;
    double h_min = 1e-12;
    double h_max = std::numeric_limits<double>::infinity();
    /// Initial step; 0 selects it from the state and derivative.
    double first_step = 0.0;
};

namespace detail {

/// RMS over components of err_k / (atol + rtol * max(|y_k|, |ynew_k|)).
inline double error_norm(std::span<const double> err, std::span<const double> y, std::span<const double> ynew,
                         double atol, double rtol) {
    double acc = 0.0;
    for (std::size_t k = 0; k < err.size(); ++k) {
        double scale = atol + rtol * std::max(std::abs(y[k]), std::abs(ynew[k]));
        double r = err[k] / scale;
        acc += r * r;
    }
    return err.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(err.size()));
}

inline double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline void check_tolerances(double atol, double rtol, double h_min, double h_max) {
    if (!(atol >= 0.0) || !(rtol >= 0.0) || (atol == 0.0 && rtol == 0.0))
        throw UsageError("tolerances must be non-negative and not both zero");
    if (!(h_min > 0.0) || !(h_max >= h_min)) throw UsageError("step bounds must satisfy 0 < h_min <= h_max");
}

} // namespace detail

class OdeStepper {
public:
    OdeStepper(const ExecutableSystem& exec, std::vector<double> y0, double t0, OdeOptions options = {},
               std::vector<double> params = {})
        : exec_(&exec), eval_(exec), opt_(options), params_(std::move(params)), t_(t0), y_(std::move(y0)) {
        if (exec.uses_past) throw ContractViolation("ODE stepper given a program with delayed states");
        if (y_.size() != exec.dimension) throw ContractViolation("initial state has the wrong dimension");
        detail::check_tolerances(opt_.atol, opt_.rtol, opt_.h_min, opt_.h_max);
        const std::size_t n = y_.size();
        for (auto& k : k_) k.assign(n, 0.0);
        ynew_.assign(n, 0.0);
        tmp_.assign(n, 0.0);
        err_.assign(n, 0.0);
        state_changed();
        if (opt_.first_step > 0.0) {
            h_ = opt_.first_step;
        } else {
            h_ = 0.01 * (1.0 + detail::max_abs(y_)) / (1.0 + detail::max_abs(k_[0]));
        }
        h_ = std::clamp(h_, opt_.h_min, opt_.h_max);
    }

    double t() const noexcept { return t_; }
    double h() const noexcept { return h_; }
    const std::vector<double>& y() const noexcept { return y_; }
    const std::vector<double>& derivative() const noexcept { return k_[0]; }
    const StepStats& stats() const noexcept { return stats_; }
    /// Size of the most recent trial step.
    double last_step() const noexcept { return last_h_; }
    const OdeOptions& options() const noexcept { return opt_; }
    std::span<const double> params() const noexcept { return params_; }

    /// Replaces the current state (for example after renormalizing tangent vectors).
    void set_state(std::span<const double> y) {
        if (y.size() != y_.size()) throw ContractViolation("state has the wrong dimension");
        std::copy(y.begin(), y.end(), y_.begin());
        state_changed();
    }

    void set_step(double h) { h_ = std::clamp(h, opt_.h_min, opt_.h_max); }

    /// One adaptive trial step of at most `limit` (the current step size when
    /// omitted).
    StepResult try_step(double limit = std::numeric_limits<double>::infinity()) {
        const double h = std::min(h_, limit);
        last_h_ = h;
        compute_stages(h);
        const std::size_t n = y_.size();
        for (std::size_t i = 0; i < n; ++i) {
            err_[i] = h * (e1 * k_[0][i] + e3 * k_[2][i] + e4 * k_[3][i] + e5 * k_[4][i] + e6 * k_[5][i] +
                           e7 * k_[6][i]);
        }
        double norm = detail::error_norm(err_, y_, ynew_, opt_.atol, opt_.rtol);
        bool finite = std::isfinite(norm);
        for (std::size_t i = 0; finite && i < n; ++i) finite = std::isfinite(ynew_[i]);
        if (!finite) {
            ++stats_.rejected;
            shrink(h, 0.5);
            return {false, std::numeric_limits<double>::infinity()};
        }
        double factor = norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.2), 0.2, 5.0);
        if (norm <= 1.0) {
            ++stats_.accepted;
            t_ += h;
            std::swap(y_, ynew_);
            std::swap(k_[0], k_[6]);
            h_ = std::clamp(h * factor, opt_.h_min, opt_.h_max);
            return {true, norm};
        }
        ++stats_.rejected;
        shrink(h, factor);
        return {false, norm};
    }

    /// Advances exactly to `t_target` and returns the state there.
    const std::vector<double>& integrate_to(double t_target) {
        if (t_target < t_) throw UsageError("cannot integrate backwards in time");
        while (t_ < t_target) {
            double remaining = t_target - t_;
            StepResult r = try_step(remaining);
            // Land exactly on the target despite rounding in t + h.
            if (r.accepted && last_h_ == remaining) t_ = t_target;
        }
        return y_;
    }

    /// One unconditionally accepted fifth-order step of size h.
    void fixed_step(double h) {
        compute_stages(h);
        ++stats_.accepted;
        t_ += h;
        std::swap(y_, ynew_);
        std::swap(k_[0], k_[6]);
    }

private:
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;

    void f(double t, const std::vector<double>& y, std::vector<double>& out) {
        eval_.drift(t, y, params_, nullptr, out);
        ++stats_.evaluations;
    }

    void state_changed() { f(t_, y_, k_[0]); }

    void compute_stages(double h) {
        const std::size_t n = y_.size();
        const auto& y = y_;
        auto& k = k_;
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * a21 * k[0][i];
        f(t_ + c2 * h, tmp_, k[1]);
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * (a31 * k[0][i] + a32 * k[1][i]);
        f(t_ + c3 * h, tmp_, k[2]);
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * (a41 * k[0][i] + a42 * k[1][i] + a43 * k[2][i]);
        f(t_ + c4 * h, tmp_, k[3]);
        for (std::size_t i = 0; i < n; ++i)
            tmp_[i] = y[i] + h * (a51 * k[0][i] + a52 * k[1][i] + a53 * k[2][i] + a54 * k[3][i]);
        f(t_ + c5 * h, tmp_, k[4]);
        for (std::size_t i = 0; i < n; ++i)
            tmp_[i] = y[i] + h * (a61 * k[0][i] + a62 * k[1][i] + a63 * k[2][i] + a64 * k[3][i] + a65 * k[4][i]);
        f(t_ + h, tmp_, k[5]);
        for (std::size_t i = 0; i < n; ++i)
            ynew_[i] = y[i] + h * (b1 * k[0][i] + b3 * k[2][i] + b4 * k[3][i] + b5 * k[4][i] + b6 * k[5][i]);
        f(t_ + h, ynew_, k[6]);
    }

    void shrink(double h, double factor) {
        double next = h * factor;
        if (next < opt_.h_min) {
            if (h <= opt_.h_min * (1 + 1e-12))
                throw NumericalFailure("step size fell below h_min = " + std::to_string(opt_.h_min) + " at t = " +
                                       std::to_string(t_) + " (stiff or singular problem)");
            next = opt_.h_min;
        }
        h_ = std::min(next, opt_.h_max);
    }

    const ExecutableSystem* exec_;
    Evaluator eval_;
    OdeOptions opt_;
    std::vector<double> params_;
    double t_;
    double h_ = 0.0;
    double last_h_ = 0.0;
    std::vector<double> y_;
    std::vector<double> k_[7];
    std::vector<double> ynew_, tmp_, err_;
    StepStats stats_;
};

} // namespace symde
