#include "cqr/losses.hpp"

#include "cqr/error.hpp"
#include "cqr/normal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cqr {

namespace {

void check_theta(double theta) {
	if (!(theta > 0.0 && theta < 1.0)) {
		throw DomainError("quantile level must lie in (0,1), got " + std::to_string(theta));
	}
}

void check_lengths(std::size_t points, std::size_t preds) {
	if (points != preds) {
		throw ShapeError("got " + std::to_string(points) + " points but " + std::to_string(preds) + " predictions");
	}
	if (points == 0) {
		throw ShapeError("loss needs at least one point");
	}
}

void check_sigma(double sigma) {
	if (!(sigma > 0.0) || !std::isfinite(sigma)) {
		throw DomainError("tobit scale must be positive and finite, got " + std::to_string(sigma));
	}
}

// Log of the censored tail probability, clamped at the survival floor.
double log_tail(double z, Side side) {
	const double p = side == Side::right ? normal::survival(z) : normal::cdf(z);
	return std::log(std::max(p, normal::kLogSurvivalFloor));
}

// phi(z)/tail(z); zero once the tail has hit the floor (the clamped loss is flat there).
double tail_hazard(double z, Side side) {
	const double p = side == Side::right ? normal::survival(z) : normal::cdf(z);
	if (p <= normal::kLogSurvivalFloor) return 0.0;
	return normal::pdf(z) / p;
}

} // namespace

QuantileLevel::QuantileLevel(double theta) : theta_(theta) {
	check_theta(theta);
}

double TiltedResidual::loss() const {
	return tilted_loss(r, theta.value());
}

double TiltedResidual::subgradient() const {
	return tilted_loss_subgrad(r, theta.value());
}

double tilted_loss(double r, double theta) {
	check_theta(theta);
	return std::max(theta * r, (theta - 1.0) * r);
}

double tilted_loss_subgrad(double r, double theta) {
	check_theta(theta);
	return r >= 0.0 ? theta : theta - 1.0;
}

double tilted_sum(std::span<const CensoredPoint> points, std::span<const double> preds, double theta) {
	check_theta(theta);
	check_lengths(points.size(), preds.size());
	double total = 0.0;
	for (std::size_t i = 0; i < points.size(); ++i) {
		total += tilted_loss(points[i].y - preds[i], theta);
	}
	return total;
}

std::vector<double> tilted_sum_grad(std::span<const CensoredPoint> points, std::span<const double> preds,
                                    double theta) {
	check_theta(theta);
	check_lengths(points.size(), preds.size());
	std::vector<double> grad(points.size());
	for (std::size_t i = 0; i < points.size(); ++i) {
		grad[i] = -tilted_loss_subgrad(points[i].y - preds[i], theta);
	}
	return grad;
}

double censored_qr_nll(std::span<const CensoredPoint> points, std::span<const double> preds, double theta,
                       bool include_constant) {
	check_theta(theta);
	check_lengths(points.size(), preds.size());
	double total = 0.0;
	for (std::size_t i = 0; i < points.size(); ++i) {
		total += tilted_loss(points[i].y - std::max(points[i].tau, preds[i]), theta);
	}
	if (include_constant) {
		const auto n = static_cast<double>(points.size());
		total -= n * std::log(theta) + n * std::log1p(-theta);
	}
	return total;
}

std::vector<double> censored_qr_nll_grad(std::span<const CensoredPoint> points, std::span<const double> preds,
                                         double theta) {
	check_theta(theta);
	check_lengths(points.size(), preds.size());
	std::vector<double> grad(points.size(), 0.0);
	for (std::size_t i = 0; i < points.size(); ++i) {
		if (preds[i] < points[i].tau) continue;
		grad[i] = -tilted_loss_subgrad(points[i].y - preds[i], theta);
	}
	return grad;
}

double tobit_nll(std::span<const CensoredPoint> points, std::span<const double> means, double sigma, Side side) {
	check_sigma(sigma);
	check_lengths(points.size(), means.size());
	const double log_sigma = std::log(sigma);
	double total = 0.0;
	for (std::size_t i = 0; i < points.size(); ++i) {
		const double z = (points[i].y - means[i]) / sigma;
		if (points[i].censored) {
			total -= log_tail(z, side);
		} else {
			total -= normal::log_pdf(z) - log_sigma;
		}
	}
	return total;
}

TobitGradient tobit_nll_grad(std::span<const CensoredPoint> points, std::span<const double> means, double sigma,
                             Side side) {
	check_sigma(sigma);
	check_lengths(points.size(), means.size());
	TobitGradient g;
	g.d_means.resize(points.size());
	// dz/dmu = -1/sigma, dz/dlog(sigma) = -z
	for (std::size_t i = 0; i < points.size(); ++i) {
		const double z = (points[i].y - means[i]) / sigma;
		double d_z = 0.0;
		if (points[i].censored) {
			const double h = tail_hazard(z, side);
			d_z = side == Side::right ? h : -h;
		} else {
			d_z = z;
			g.d_log_sigma += 1.0;
		}
		g.d_means[i] = -d_z / sigma;
		g.d_log_sigma += -d_z * z;
	}
	return g;
}

double std_normal_quantile(double p) {
	return normal::quantile(p);
}

} // namespace cqr
