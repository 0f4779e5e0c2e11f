#pragma once

#include "cqr/losses.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace cqr {

// Censored observations with their covariates. Covariates are stored row-major
// with column 0 holding the intercept (x0 = 1); `n_features` counts that slot.
// A dataset with n_features == 0 is a bare series awaiting lag construction.
struct CensoredDataset {
	std::size_t n_features = 0;
	std::vector<double> X;
	std::vector<double> y;
	std::vector<double> tau;
	std::vector<std::uint8_t> censored;
	std::optional<std::vector<double>> y_star;
	// Ground-truth conditional quantiles of the observed target, keyed by theta.
	std::map<double, std::vector<double>> true_quantiles;
	Side side = Side::left;

	std::size_t size() const noexcept { return y.size(); }
	bool empty() const noexcept { return y.empty(); }
	std::span<const double> row(std::size_t i) const { return {X.data() + i * n_features, n_features}; }
	std::size_t censored_count() const;
	double censored_fraction() const;
	std::vector<CensoredPoint> points() const;
};

// Checks shapes and the clamp invariant: left data has y >= tau, right data
// y <= tau, censored rows sit exactly at tau, and y equals clamp(y_star) when
// latent values are present. Throws ShapeError / UsageError on violation.
void validate(const CensoredDataset& data);

CensoredDataset select_rows(const CensoredDataset& data, std::span<const std::size_t> rows);

// Negates every covariate except the intercept slot, along with y, tau, y_star
// and the ground-truth quantiles (theta -> -q_{1-theta}); flips the side.
CensoredDataset mirror(const CensoredDataset& data);

// Rounds a quantile level to 12 decimals so that 1 - 0.95 keys as 0.05.
double normalize_level(double theta);

// Ground-truth column for theta (tolerant key match), or nullptr.
const std::vector<double>* find_true_quantiles(const CensoredDataset& data, double theta);

double mean(std::span<const double> values);

} // namespace cqr
