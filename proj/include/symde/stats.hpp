#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "symde/errors.hpp"

namespace symde {

inline double weighted_mean(std::span<const double> values, std::span<const double> weights) {
    if (values.size() != weights.size()) throw ContractViolation("values and weights differ in length");
    if (values.empty()) throw UsageError("weighted mean of an empty sample");
    double sw = 0, s = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (weights[i] < 0) throw UsageError("negative weight");
        s += values[i] * weights[i];
        sw += weights[i];
    }
    if (!(sw > 0)) throw UsageError("weights sum to zero");
    return s / sw;
}

struct TTest {
    double mean = 0;
    double t = 0;
    double p = 1;
    double df = 0;
};

/// Two-sided one-sample Student t-test of the null hypothesis mean == mu.
inline TTest t_test(std::span<const double> values, double mu = 0.0) {
    const std::size_t n = values.size();
    if (n < 2) throw UsageError("t-test needs at least two samples");
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    TTest r;
    r.mean = mean;
    r.df = static_cast<double>(n - 1);
    if (sd == 0.0) {
        r.t = mean == mu ? 0.0 : std::copysign(INFINITY, mean - mu);
        r.p = mean == mu ? 1.0 : 0.0;
        return r;
    }
    r.t = (mean - mu) / (sd / std::sqrt(static_cast<double>(n)));
    boost::math::students_t dist(r.df);
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
    return r;
}

} // namespace symde
