#pragma once

// Past storage for delay equations: (time, state, derivative) anchors in a
// doubly linked list, with one search cursor per delayed-access site.

#include <cmath>
#include <functional>
#include <iterator>
#include <list>
#include <span>
#include <vector>

#include "symde/errors.hpp"
#include "symde/executable.hpp"

namespace symde {

struct Anchor {
    double t = 0.0;
    std::vector<double> y;
    std::vector<double> dy;
    /// Right-sided derivative where the trajectory has a kink at this anchor
    /// (the start of an integration from a given past). Empty when smooth.
    std::vector<double> dy_right;
};

/// Derivative used when the anchor is the left end of an interval.
inline const std::vector<double>& left_slope(const Anchor& a) { return a.dy_right.empty() ? a.dy : a.dy_right; }

struct HermiteValue {
    std::vector<double> y;
    std::vector<double> dy;
};

/// Cubic Hermite basis in s on [0, 1] and its s-derivative.
struct HermiteBasis {
    double h00, h10, h01, h11;
    double d00, d10, d01, d11;

    explicit HermiteBasis(double s) {
        const double s2 = s * s, s3 = s2 * s;
        h00 = 2 * s3 - 3 * s2 + 1;
        h10 = s3 - 2 * s2 + s;
        h01 = -2 * s3 + 3 * s2;
        h11 = s3 - s2;
        d00 = 6 * s2 - 6 * s;
        d10 = 3 * s2 - 4 * s + 1;
        d01 = -6 * s2 + 6 * s;
        d11 = 3 * s2 - 2 * s;
    }
};

/// Component `i` of the cubic through both anchors, at time t.
inline PastSample hermite_component(const Anchor& a0, const Anchor& a1, std::size_t i, double t) {
    const double w = a1.t - a0.t;
    const double s = (t - a0.t) / w;
    HermiteBasis b(s);
    const double m0 = left_slope(a0)[i];
    double value = b.h00 * a0.y[i] + b.h10 * w * m0 + b.h01 * a1.y[i] + b.h11 * w * a1.dy[i];
    double deriv = (b.d00 * a0.y[i] + b.d01 * a1.y[i]) / w + b.d10 * m0 + b.d11 * a1.dy[i];
    return {value, deriv};
}

inline HermiteValue hermite_interpolate(const Anchor& a0, const Anchor& a1, double t) {
    if (!(a1.t != a0.t)) throw ContractViolation("degenerate Hermite interval: both anchors at t = " + std::to_string(a0.t));
    HermiteValue out;
    const std::size_t n = a0.y.size();
    out.y.resize(n);
    out.dy.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto p = hermite_component(a0, a1, i, t);
        out.y[i] = p.value;
        out.dy[i] = p.derivative;
    }
    return out;
}

class AnchorList {
public:
    using iterator = std::list<Anchor>::iterator;
    using const_iterator = std::list<Anchor>::const_iterator;

    AnchorList() = default;
    AnchorList(const AnchorList&) = delete;
    AnchorList& operator=(const AnchorList&) = delete;
    AnchorList(AnchorList&& other) noexcept { *this = std::move(other); }
    AnchorList& operator=(AnchorList&& other) noexcept {
        anchors_ = std::move(other.anchors_);
        cursors_.clear();
        traversed_ = other.traversed_;
        queries_ = other.queries_;
        extrapolated_ = other.extrapolated_;
        return *this;
    }

    std::size_t size() const noexcept { return anchors_.size(); }
    bool empty() const noexcept { return anchors_.empty(); }
    std::size_t dimension() const { return anchors_.empty() ? 0 : anchors_.front().y.size(); }
    const Anchor& front() const { return anchors_.front(); }
    const Anchor& back() const { return anchors_.back(); }
    Anchor& back() { return anchors_.back(); }
    iterator begin() { return anchors_.begin(); }
    iterator end() { return anchors_.end(); }
    const_iterator begin() const { return anchors_.begin(); }
    const_iterator end() const { return anchors_.end(); }

    void append(Anchor a) {
        if (!anchors_.empty()) {
            if (!(a.t > anchors_.back().t)) throw ContractViolation("anchor times must strictly increase");
            if (a.y.size() != dimension() || a.dy.size() != dimension())
                throw ContractViolation("anchor has the wrong dimension");
        }
        for (double v : a.y)
            if (!std::isfinite(v)) throw NumericalFailure("non-finite state in anchor at t = " + std::to_string(a.t));
        for (double v : a.dy)
            if (!std::isfinite(v))
                throw NumericalFailure("non-finite derivative in anchor at t = " + std::to_string(a.t));
        anchors_.push_back(std::move(a));
    }

    /// Replaces the newest anchor (used when the state at the current time is modified).
    void replace_back(Anchor a) {
        if (anchors_.empty()) throw ContractViolation("no anchor to replace");
        if (anchors_.size() >= 2 && !(a.t > std::prev(anchors_.end(), 2)->t))
            throw ContractViolation("anchor times must strictly increase");
        anchors_.back() = std::move(a);
    }

    /// Drops anchors no longer needed for queries at or after `t_keep`: exactly
    /// one anchor at or before `t_keep` survives.
    void truncate(double t_keep) {
        while (anchors_.size() > 2) {
            auto second = std::next(anchors_.begin());
            if (second->t > t_keep) break;
            for (auto& c : cursors_)
                if (c.valid && c.left == anchors_.begin()) c.left = second;
            anchors_.pop_front();
        }
    }

    /// Left anchor of the pair used for time t. Queries exactly at an anchor
    /// time use that anchor as the left end, except for the newest anchor,
    /// which is served by the last pair. Beyond the newest anchor the last
    /// pair is returned and the extrapolation flag is set.
    const_iterator locate(std::size_t site, double t) {
        if (anchors_.size() < 2) throw ContractViolation("past needs at least two anchors");
        if (t < anchors_.front().t)
            throw PastUnderflow("past access at t = " + std::to_string(t) + " precedes the earliest anchor at " +
                                std::to_string(anchors_.front().t) + "; supply a longer initial past");
        if (site >= cursors_.size()) cursors_.resize(site + 1);
        Cursor& c = cursors_[site];
        if (!c.valid) {
            c.left = anchors_.begin();
            c.valid = true;
        }
        ++queries_;
        auto last_left = std::prev(anchors_.end(), 2);
        extrapolated_ = t > anchors_.back().t;
        // Move backwards while the left end lies after t.
        while (c.left != anchors_.begin() && c.left->t > t) {
            --c.left;
            ++traversed_;
        }
        // Move forwards while the next anchor is at or before t.
        while (c.left != last_left && std::next(c.left)->t <= t) {
            ++c.left;
            ++traversed_;
        }
        return c.left;
    }

    PastSample sample(std::size_t site, std::size_t index, double t) {
        auto left = locate(site, t);
        return hermite_component(*left, *std::next(left), index, t);
    }

    HermiteValue state_at(double t, std::size_t site = 0) {
        auto left = locate(site, t);
        return hermite_interpolate(*left, *std::next(left), t);
    }

    bool last_query_extrapolated() const noexcept { return extrapolated_; }
    std::size_t anchors_traversed() const noexcept { return traversed_; }
    std::size_t queries() const noexcept { return queries_; }
    void reset_counters() noexcept {
        traversed_ = 0;
        queries_ = 0;
    }

private:
    struct Cursor {
        iterator left{};
        bool valid = false;
    };

    std::list<Anchor> anchors_;
    std::vector<Cursor> cursors_;
    std::size_t traversed_ = 0;
    std::size_t queries_ = 0;
    bool extrapolated_ = false;
};

/// Two anchors at t0 - max_delay - margin and t0 carrying the constant y0.
inline AnchorList constant_past(const std::vector<double>& y0, double t0, double max_delay, double margin = 1.0) {
    if (!(max_delay >= 0.0) || !(margin > 0.0)) throw UsageError("max_delay must be >= 0 and margin > 0");
    AnchorList list;
    std::vector<double> zero(y0.size(), 0.0);
    list.append({t0 - max_delay - margin, y0, zero, {}});
    list.append({t0, y0, zero, {}});
    return list;
}

/// Samples fn on 16 equidistant anchors over [t0 - max_delay, t0] with
/// central-difference derivatives, then bisects every interval whose Hermite
/// interpolant deviates from fn by more than tol. Deviations are probed at the
/// midpoint and both quarter points: the midpoint alone is blind to errors
/// that are odd about it (a zero of sin, a kink in one half).
inline AnchorList past_from_function(const std::function<std::vector<double>(double)>& fn, double t0,
                                     double max_delay, double tol, std::size_t max_anchors = 1 << 16) {
    if (!(max_delay > 0.0)) throw UsageError("max_delay must be positive for a sampled past");
    if (!(tol > 0.0)) throw UsageError("tolerance must be positive");
    auto eval = [&](double t) {
        auto v = fn(t);
        for (double x : v)
            if (!std::isfinite(x)) throw UsageError("initial-past function is not finite at t = " + std::to_string(t));
        return v;
    };
    const double span = max_delay;
    auto make = [&](double t, double local) {
        const double d = std::max(1e-6 * span, 1e-3 * local);
        auto plus = eval(t + d), minus = eval(t - d);
        Anchor a{t, eval(t), std::vector<double>(plus.size()), {}};
        for (std::size_t i = 0; i < plus.size(); ++i) a.dy[i] = (plus[i] - minus[i]) / (2 * d);
        return a;
    };

    const int initial = 16;
    const double step = span / (initial - 1);
    std::list<Anchor> work;
    for (int k = 0; k < initial; ++k) {
        double t = k == initial - 1 ? t0 : t0 - span + k * step;
        work.push_back(make(t, step));
    }
    for (auto it = work.begin(); std::next(it) != work.end();) {
        auto nx = std::next(it);
        const double width = nx->t - it->t;
        const double mid = it->t + 0.5 * width;
        double dev = 0.0;
        for (double s : {0.25, 0.5, 0.75}) {
            const double probe = it->t + s * width;
            auto want = eval(probe);
            auto got = hermite_interpolate(*it, *nx, probe);
            for (std::size_t i = 0; i < want.size(); ++i) dev = std::max(dev, std::abs(want[i] - got.y[i]));
        }
        if (dev > tol && width > 1e-12 * span && work.size() < max_anchors) {
            work.insert(nx, make(mid, width / 2));
        } else {
            ++it;
        }
    }
    AnchorList list;
    for (auto& a : work) list.append(std::move(a));
    return list;
}

} // namespace symde
