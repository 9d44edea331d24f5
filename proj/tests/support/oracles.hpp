#pragma once

// Test-side oracles, independent of the library implementations they check.

#include "usm/common.hpp"

#include <cmath>
#include <functional>

namespace testsup {

/// Closed-form CRPS of N(mu, sigma^2) against target y:
/// sigma * [ w (2 Phi(w) - 1) + 2 phi(w) - 1/sqrt(pi) ], w = (y - mu)/sigma.
inline double gaussian_crps(double mu, double sigma, double y) {
    if (sigma <= 0.0) return std::abs(mu - y);
    const double w = (y - mu) / sigma;
    const double pdf = std::exp(-0.5 * w * w) / std::sqrt(2.0 * M_PI);
    const double cdf = 0.5 * std::erfc(-w / std::sqrt(2.0));
    return sigma * (w * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::sqrt(M_PI));
}

/// Adaptive Simpson quadrature.
inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                          double fm, double fb, double whole, double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * eps)
        return left + right + (left + right - whole) / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double eps = 1e-10) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, eps, 48);
}

/// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace testsup
