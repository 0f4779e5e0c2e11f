#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cqr {

enum class Side { left, right };

// Observation with its censoring threshold. For left-censored data y >= tau,
// for right-censored data y <= tau; censored rows sit exactly at tau.
struct CensoredPoint {
	double y = 0.0;
	double tau = 0.0;
	bool censored = false;
};

// Quantile level in (0,1); construction outside that range throws DomainError.
class QuantileLevel {
public:
	explicit QuantileLevel(double theta);
	double value() const noexcept { return theta_; }
	QuantileLevel mirrored() const { return QuantileLevel(1.0 - theta_); }

private:
	double theta_;
};

// Residual r together with its quantile level, as consumed by the tilted loss.
struct TiltedResidual {
	double r;
	QuantileLevel theta;
	double loss() const;
	double subgradient() const;
};

// rho_theta(r) = max(theta*r, (theta-1)*r)
double tilted_loss(double r, double theta);

// d rho / d r; at r == 0 the upper branch (theta) is taken.
double tilted_loss_subgrad(double r, double theta);

// Summed tilted loss of the observed targets, sum rho_theta(y_i - pred_i).
// Ignores thresholds: the censorship-unaware baseline objective.
double tilted_sum(std::span<const CensoredPoint> points, std::span<const double> preds, double theta);
std::vector<double> tilted_sum_grad(std::span<const CensoredPoint> points, std::span<const double> preds,
                                    double theta);

// Negative log of the censored quantile likelihood for left-censored data:
//   sum_i rho_theta(y_i - max(tau_i, pred_i))  [- N log theta - N log(1-theta)]
double censored_qr_nll(std::span<const CensoredPoint> points, std::span<const double> preds, double theta,
                       bool include_constant = false);

// d/d pred_i of censored_qr_nll. Zero where pred_i < tau_i; at pred_i == tau_i
// the gradient passes through the prediction branch.
std::vector<double> censored_qr_nll_grad(std::span<const CensoredPoint> points, std::span<const double> preds,
                                         double theta);

// Tobit negative log-likelihood with fixed scale sigma. `side` selects which
// tail absorbs the censored mass: right (upper censoring) uses log(1 - Phi),
// left uses log Phi. Censoring is read from the points' flags.
double tobit_nll(std::span<const CensoredPoint> points, std::span<const double> means, double sigma, Side side);

struct TobitGradient {
	std::vector<double> d_means;
	double d_log_sigma = 0.0;
};

TobitGradient tobit_nll_grad(std::span<const CensoredPoint> points, std::span<const double> means, double sigma,
                             Side side);

// Re-exported for callers that only include losses.
double std_normal_quantile(double p);

} // namespace cqr
