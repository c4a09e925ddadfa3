#pragma once

#include <cstddef>
#include <vector>

namespace summint {

// Quantile of N(0,1): Phi^{-1}(p) for p in (0, 1). Acklam's rational
// approximation polished with one Halley step against erfc, good to
// ~1e-15 over the full open interval.
double normal_quantile(double p);

// Phi(x), standard normal CDF.
double normal_cdf(double x);

double mean(const std::vector<double>& v);
double variance(const std::vector<double>& v);  // denominator n - 1

// Median with the usual midpoint convention for even lengths. Copies its
// input; callers in hot paths should sort once themselves.
double median(std::vector<double> v);

}  // namespace summint
