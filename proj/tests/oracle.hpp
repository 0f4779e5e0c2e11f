#pragma once

// Independent reference implementations used by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse normal cdf by bisection on erfc.
inline double phi_inv(double p) {
	double lo = -40.0, hi = 40.0;
	for (int i = 0; i < 200; ++i) {
		double mid = 0.5 * (lo + hi);
		(phi_cdf(mid) < p ? lo : hi) = mid;
	}
	return 0.5 * (lo + hi);
}

inline double pinball(double r, double theta) { return r >= 0 ? theta * r : (theta - 1.0) * r; }

// Central differences of f at p, step h scaled by |p_i|.
inline std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f, std::vector<double> p,
                                   double h = 1e-6) {
	std::vector<double> g(p.size());
	for (std::size_t i = 0; i < p.size(); ++i) {
		double step = h * std::max(1.0, std::abs(p[i]));
		double keep = p[i];
		p[i] = keep + step;
		double up = f(p);
		p[i] = keep - step;
		double dn = f(p);
		p[i] = keep;
		g[i] = (up - dn) / (2.0 * step);
	}
	return g;
}

// max_i |a_i - b_i| / max(1e-3, |b_i|)-style relative error, with an absolute floor.
inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
	double worst = 0.0;
	for (std::size_t i = 0; i < a.size(); ++i) {
		double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
		worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
	}
	return worst;
}

// OLS via normal equations with Gaussian elimination.
inline std::vector<double> ols(const std::vector<double>& X, const std::vector<double>& y, std::size_t p) {
	std::size_t n = y.size();
	std::vector<double> A(p * (p + 1), 0.0);
	for (std::size_t i = 0; i < n; ++i)
		for (std::size_t a = 0; a < p; ++a) {
			for (std::size_t b = 0; b < p; ++b) A[a * (p + 1) + b] += X[i * p + a] * X[i * p + b];
			A[a * (p + 1) + p] += X[i * p + a] * y[i];
		}
	for (std::size_t c = 0; c < p; ++c) {
		std::size_t piv = c;
		for (std::size_t r = c + 1; r < p; ++r)
			if (std::abs(A[r * (p + 1) + c]) > std::abs(A[piv * (p + 1) + c])) piv = r;
		for (std::size_t k = 0; k <= p; ++k) std::swap(A[c * (p + 1) + k], A[piv * (p + 1) + k]);
		for (std::size_t r = 0; r < p; ++r) {
			if (r == c) continue;
			double f = A[r * (p + 1) + c] / A[c * (p + 1) + c];
			for (std::size_t k = c; k <= p; ++k) A[r * (p + 1) + k] -= f * A[c * (p + 1) + k];
		}
	}
	std::vector<double> beta(p);
	for (std::size_t c = 0; c < p; ++c) beta[c] = A[c * (p + 1) + p] / A[c * (p + 1) + c];
	return beta;
}

} // namespace oracle
