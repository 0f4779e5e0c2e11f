#include "cqr/normal.hpp"

#include "cqr/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace cqr::normal {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Rational approximation (Acklam) used as the starting point for refinement.
double quantile_initial(double p) {
	static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
	                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
	static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
	                               6.680131188771972e+01,  -1.328068155288572e+01};
	static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
	                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
	static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
	                               3.754408661907416e+00};
	constexpr double p_low = 0.02425;

	if (p < p_low) {
		const double q = std::sqrt(-2.0 * std::log(p));
		return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
		       ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
	}
	if (p > 1.0 - p_low) {
		const double q = std::sqrt(-2.0 * std::log1p(-p));
		return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
		       ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
	}
	const double q = p - 0.5;
	const double r = q * q;
	return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
	       (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

} // namespace

double pdf(double z) {
	return std::exp(log_pdf(z));
}

double log_pdf(double z) {
	return -0.5 * z * z - kLogSqrt2Pi;
}

double cdf(double z) {
	return 0.5 * std::erfc(-z * kInvSqrt2);
}

double survival(double z) {
	return 0.5 * std::erfc(z * kInvSqrt2);
}

double quantile(double p) {
	if (!(p > 0.0 && p < 1.0)) {
		throw DomainError("normal quantile requires p in (0,1), got " + std::to_string(p));
	}
	double x = quantile_initial(p);
	// Halley refinement against the erfc-based cdf; residual taken on the
	// smaller tail to keep relative accuracy for p near 0 or 1.
	for (int iter = 0; iter < 3; ++iter) {
		const double err = p < 0.5 ? cdf(x) - p : -(survival(x) - (1.0 - p));
		const double u = err * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
		x -= u / (1.0 + 0.5 * x * u);
	}
	return x;
}

double quantile(double p, double mean, double sd) {
	return mean + sd * quantile(p);
}

} // namespace cqr::normal
