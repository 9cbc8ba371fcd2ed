#pragma once

namespace riskscp {

/// Standard normal CDF.
double normal_cdf(double x);

/// Inverse of the standard normal CDF, accurate to ~1e-15 absolute over
/// (1e-300, 1 - 1e-16). Throws UsageError outside the open interval (0, 1).
///
/// Rational approximation (Acklam) followed by one Halley step on the
/// erfc-based CDF.
double normal_quantile(double p);

}  // namespace riskscp
