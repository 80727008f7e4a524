#pragma once

// Statistical battery: Pearson correlation, the Student-t distribution, the
// paired two-one-sided-tests (TOST) equivalence procedure and the pooled
// independent-samples t-test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emma/errors.hpp"

namespace emma::stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) {
        throw StatsError("mean of an empty sample");
    }
    double sum = 0.0;
    for (const double x : xs) {
        sum += x;
    }
    return sum / static_cast<double>(xs.size());
}

// Sample (n - 1) standard deviation.
inline double sample_sd(std::span<const double> xs) {
    if (xs.size() < 2) {
        throw StatsError("standard deviation needs at least two values");
    }
    const double m = mean(xs);
    double ss = 0.0;
    for (const double x : xs) {
        ss += (x - m) * (x - m);
    }
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline double standard_error(std::span<const double> xs) {
    return sample_sd(xs) / std::sqrt(static_cast<double>(xs.size()));
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw StatsError("pearson: samples differ in length");
    }
    if (x.size() < 2) {
        throw StatsError("pearson: need at least two pairs");
    }
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw StatsError("pearson: correlation undefined for a zero-variance sample");
    }
    const double r = sxy / std::sqrt(sxx * syy);
    return r > 1.0 ? 1.0 : (r < -1.0 ? -1.0 : r);
}

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 20000;
    constexpr double kEpsilon = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) {
        d = kTiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < kEpsilon) {
            return h;
        }
    }
    throw StatsError("incomplete beta: continued fraction did not converge");
}

} // namespace detail

// Regularized incomplete beta I_x(a, b). `y` must equal 1 - x; passing it
// separately avoids cancellation when x is close to 1.
inline double regularized_incomplete_beta(double a, double b, double x, double y) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw StatsError("incomplete beta: shape parameters must be positive");
    }
    if (!(x >= 0.0 && x <= 1.0)) {
        throw StatsError("incomplete beta: x outside [0, 1]");
    }
    if (x == 0.0) {
        return 0.0;
    }
    if (y == 0.0) {
        return 1.0;
    }
    const double log_front = a * std::log(x) + b * std::log(y) - (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * detail::beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - front * detail::beta_continued_fraction(b, a, y) / b;
}

inline double regularized_incomplete_beta(double a, double b, double x) {
    return regularized_incomplete_beta(a, b, x, 1.0 - x);
}

// CDF of Student's t with `df` degrees of freedom.
inline double t_cdf(double t, double df) {
    if (!(df > 0.0)) {
        throw StatsError("t_cdf: degrees of freedom must be positive");
    }
    if (std::isnan(t)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (std::isinf(t)) {
        return t > 0 ? 1.0 : 0.0;
    }
    if (t == 0.0) {
        return 0.5;
    }
    const double t2 = t * t;
    const double x = df / (df + t2);
    const double y = t2 / (df + t2);
    // Tail mass P(T > |t|) = I_x(df/2, 1/2) / 2.
    const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x, y);
    return t > 0 ? 1.0 - tail : tail;
}

// Upper-tail probability P(T > t); exact complement of t_cdf without cancellation.
inline double t_sf(double t, double df) { return t_cdf(-t, df); }

struct CorrelationTest {
    double r = 0.0;
    double t = 0.0;
    double df = 0.0;
    double p_two_sided = 1.0;
};

inline CorrelationTest pearson_test(std::span<const double> x, std::span<const double> y) {
    CorrelationTest out;
    out.r = pearson(x, y);
    out.df = static_cast<double>(x.size()) - 2.0;
    if (out.df <= 0.0) {
        out.t = 0.0;
        out.p_two_sided = 1.0;
        return out;
    }
    const double denom = 1.0 - out.r * out.r;
    out.t = denom <= 0.0 ? std::copysign(std::numeric_limits<double>::infinity(), out.r)
                         : out.r * std::sqrt(out.df / denom);
    out.p_two_sided = 2.0 * t_cdf(-std::fabs(out.t), out.df);
    return out;
}

struct TostResult {
    double mean_difference = 0.0;
    double sd_difference = 0.0;
    double t_lower = 0.0;
    double t_upper = 0.0;
    double p_lower = 1.0;
    double p_upper = 1.0;
    double df = 0.0;
    std::size_t n = 0;
    double alpha = 0.05;
    bool equivalent = false;
    // Set when the paired differences have zero spread.
    bool degenerate = false;
};

// Paired TOST on d_i = after_i - before_i against the bounds (-delta_lower, delta_upper).
// H01: mean(d) <= -delta_lower is rejected by a large t_lower; H02: mean(d) >= delta_upper
// by a very negative t_upper.
inline TostResult paired_tost(std::span<const double> before, std::span<const double> after, double delta_lower = 0.5,
                              double delta_upper = 0.5, double alpha = 0.05) {
    if (before.size() != after.size()) {
        throw StatsError("paired_tost: before/after vectors differ in length");
    }
    if (before.size() < 3) {
        throw StatsError("paired_tost: need at least three paired subjects");
    }
    std::vector<double> diffs(before.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        diffs[i] = after[i] - before[i];
    }
    TostResult out;
    out.n = diffs.size();
    out.alpha = alpha;
    out.df = static_cast<double>(out.n - 1);
    out.mean_difference = mean(diffs);
    out.sd_difference = sample_sd(diffs);
    if (out.sd_difference == 0.0) {
        out.degenerate = true;
        constexpr double inf = std::numeric_limits<double>::infinity();
        const double lower_margin = out.mean_difference + delta_lower;
        const double upper_margin = out.mean_difference - delta_upper;
        out.t_lower = lower_margin > 0 ? inf : (lower_margin < 0 ? -inf : 0.0);
        out.t_upper = upper_margin > 0 ? inf : (upper_margin < 0 ? -inf : 0.0);
        out.p_lower = lower_margin > 0 ? 0.0 : 1.0;
        out.p_upper = upper_margin < 0 ? 0.0 : 1.0;
        out.equivalent = out.p_lower < alpha && out.p_upper < alpha;
        return out;
    }
    const double se = out.sd_difference / std::sqrt(static_cast<double>(out.n));
    out.t_lower = (out.mean_difference + delta_lower) / se;
    out.t_upper = (out.mean_difference - delta_upper) / se;
    out.p_lower = t_sf(out.t_lower, out.df);
    out.p_upper = t_cdf(out.t_upper, out.df);
    out.equivalent = out.p_lower < alpha && out.p_upper < alpha;
    return out;
}

struct IndependentTTest {
    double t = 0.0;
    double df = 0.0;
    double p_two_sided = 1.0;
    double mean_a = 0.0;
    double mean_b = 0.0;
};

// Student's two-sample t-test with pooled variance.
inline IndependentTTest independent_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw StatsError("independent_t: each group needs at least two values");
    }
    IndependentTTest out;
    out.mean_a = mean(a);
    out.mean_b = mean(b);
    double ssa = 0.0, ssb = 0.0;
    for (const double x : a) {
        ssa += (x - out.mean_a) * (x - out.mean_a);
    }
    for (const double x : b) {
        ssb += (x - out.mean_b) * (x - out.mean_b);
    }
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    out.df = na + nb - 2.0;
    const double pooled = (ssa + ssb) / out.df;
    if (pooled == 0.0) {
        throw StatsError("independent_t: zero pooled variance");
    }
    const double se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    out.t = (out.mean_a - out.mean_b) / se;
    out.p_two_sided = std::min(1.0, 2.0 * t_cdf(-std::fabs(out.t), out.df));
    return out;
}

} // namespace emma::stats
