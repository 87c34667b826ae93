#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "slpsmpc/stats.hpp"

using namespace slpsmpc;

namespace {

// Independent oracle: standard normal quantile by bisection on the erf-based
// CDF, then squared. Shares nothing with the shipped rational approximation.
double chi2_quantile_oracle(double q) {
  const double p = 0.5 * (1.0 + q);
  double lo = 0.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double cdf = 0.5 * (1.0 + std::erf(mid / std::sqrt(2.0)));
    (cdf < p ? lo : hi) = mid;
  }
  const double z = 0.5 * (lo + hi);
  return z * z;
}

}  // namespace

TEST_CASE("chi-squared quantile endpoints and domain") {
  CHECK(chi_squared_quantile(0.0) == 0.0);
  CHECK_THROWS_AS(chi_squared_quantile(-0.01), std::domain_error);
  CHECK_THROWS_AS(chi_squared_quantile(1.0), std::domain_error);
}

TEST_CASE("chi-squared quantile against bisection oracle") {
  CHECK(chi_squared_quantile(0.4) == doctest::Approx(0.274996).epsilon(1e-5));
  CHECK(chi_squared_quantile(0.95) == doctest::Approx(3.841459).epsilon(1e-6));
  for (double q : {1e-6, 0.01, 0.1, 0.25, 0.4, 0.5, 0.75, 0.9, 0.95, 0.99, 0.9999}) {
    const double got = chi_squared_quantile(q);
    const double want = chi2_quantile_oracle(q);
    CHECK(std::abs(got - want) <= 1e-10 * (1.0 + want));
  }
}

TEST_CASE("chi-squared quantile is strictly increasing and inverts the CDF") {
  double prev = -1.0;
  for (int k = 0; k < 200; ++k) {
    const double q = k / 200.0;
    const double t = chi_squared_quantile(q);
    CHECK(t > prev);
    prev = t;
    CHECK(chi_squared_cdf(t) == doctest::Approx(q).epsilon(1e-8));
  }
}

TEST_CASE("normal quantile symmetric and consistent with CDF") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  for (double p : {0.001, 0.1, 0.3, 0.7, 0.975, 0.999999}) {
    CHECK(normal_quantile(p) == doctest::Approx(-normal_quantile(1.0 - p)).epsilon(1e-10));
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  }
  // The 70% quantile drives the HVAC tightening factor.
  CHECK(normal_quantile(0.7) == doctest::Approx(0.524400512708).epsilon(1e-10));
}
