#pragma once

#include "cqr/dataset.hpp"
#include "cqr/training.hpp"

#include <span>
#include <vector>

namespace cqr {

// Latent y* | x ~ N(x^T beta, sigma^2), censored on `side`.
struct TobitModel {
	std::vector<double> beta;
	double sigma = 1.0;
	Side side = Side::left;

	double mean(std::span<const double> x) const;
};

struct TobitConfig {
	TrainConfig train;
	double sigma = 1.0;
	// Learn log(sigma) jointly with beta instead of holding sigma fixed.
	bool estimate_sigma = false;
	Side side = Side::left;
	InitScheme init = InitScheme::ones();
};

// Minimizes the mean Tobit NLL over beta (and log sigma when estimated) with
// the shared Adam / clipping / early-stopping loop. The returned FitResult
// holds a linear identity net for the mean and the final sigma in loss.sigma.
FitResult tobit_fit(const CensoredDataset& train, const CensoredDataset& val, const TobitConfig& cfg);

TobitModel tobit_model(const FitResult& fit);

// x^T beta + sigma * Phi^{-1}(theta)
double tobit_quantiles(const TobitModel& model, std::span<const double> x, double theta);
std::vector<double> tobit_quantiles(const TobitModel& model, const CensoredDataset& data, double theta);

} // namespace cqr
