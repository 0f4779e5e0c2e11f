#pragma once

namespace cqr::normal {

inline constexpr double kLogSurvivalFloor = 1e-300;

double pdf(double z);
double log_pdf(double z);
double cdf(double z);
// 1 - cdf(z), computed without cancellation in the upper tail.
double survival(double z);

// Inverse of cdf. Throws DomainError unless p is in (0,1).
double quantile(double p);

// Quantile of N(mean, sd^2).
double quantile(double p, double mean, double sd);

} // namespace cqr::normal
