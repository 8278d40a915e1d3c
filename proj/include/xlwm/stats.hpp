#pragma once

// Small numeric toolbox: regularized incomplete gamma for the EXP null law,
// plus mean/stddev helpers used by the reports.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace xlwm {

namespace detail {

// Lower regularized incomplete gamma P(a,x) by series expansion (x < a+1).
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 1000; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma Q(a,x) by Lentz continued fraction.
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 1000; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

// Q(a,x) = P(X > x) for X ~ Gamma(a, scale 1).
inline double gamma_q(double a, double x) {
    if (a <= 0.0) throw std::invalid_argument("gamma_q: a must be > 0");
    if (x < 0.0) throw std::invalid_argument("gamma_q: x must be >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_cf(a, x);
}

inline double mean_of(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("mean of empty list");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double sample_stddev(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace xlwm
