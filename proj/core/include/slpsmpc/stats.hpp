#pragma once

namespace slpsmpc {

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile, accurate to ~1e-14 relative (rational
/// approximation refined by one Halley step on erfc).
double normal_quantile(double p);

/// Inverse CDF of the chi-squared distribution with one degree of freedom,
/// evaluated as the square of the standard normal quantile of (1+q)/2.
/// Domain q ∈ [0, 1); throws std::domain_error outside.
double chi_squared_quantile(double q);

/// CDF of the chi-squared distribution with one degree of freedom.
double chi_squared_cdf(double t);

}  // namespace slpsmpc
