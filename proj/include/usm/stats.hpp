#pragma once

#include <cstddef>
#include <span>

namespace usm {

double normal_pdf(double x);
double normal_cdf(double x);

/// Inverse standard-normal CDF, accurate to ~1e-15 (rational approximation
/// plus one Halley refinement). Requires 0 < u < 1.
double normal_quantile(double u);

/// Inverse error function on (-1, 1).
double erf_inv(double x);

/// Numerically stable 1/(1+exp(-x)).
double sigmoid(double x);

/// Pearson correlation coefficient of two equal-length samples.
/// Throws InvalidInput on size mismatch, n < 2, or zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace usm
