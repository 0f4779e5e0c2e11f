#pragma once

#include "cqr/dataset.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cqr {

enum class Noise { standard_gaussian, heteroskedastic, gaussian_mixture };

// How ground-truth quantiles of the Gaussian-mixture noise are computed.
//  exact:       quantile of 0.75 N(0,1) + 0.25 N(0,2^2) by bisection on its cdf.
//  closed_form: N(0, 0.75^2 + 0.25^2), the scale behind the published tables.
enum class MixtureQuantile { exact, closed_form };

std::string_view to_string(Noise noise);
Noise parse_noise(std::string_view name);

struct SyntheticSpec {
	Noise noise = Noise::standard_gaussian;
	std::size_t n = 1000;
	std::uint64_t seed = 0;
	std::vector<double> thetas{0.05, 0.50, 0.95};
	MixtureQuantile mixture = MixtureQuantile::exact;
	// Test hook: force epsilon to zero.
	bool zero_noise = false;
};

// y* = x0 + x1 + x2 + eps with x0 = 1, x1 uniform on {-1, 1}, x2 ~ N(0,1);
// left-censored at zero. Covariates come from a stream derived from the seed
// alone, so the three noises share the same x for a given seed.
CensoredDataset gen_synthetic(const SyntheticSpec& spec);

// Quantile of the latent y* given x = (x0, x1, x2).
double latent_quantile(Noise noise, double theta, std::span<const double> x,
                       MixtureQuantile mixture = MixtureQuantile::exact);

// Quantile of the observed y = max(0, y*): max(0, latent_quantile).
double true_quantile(Noise noise, double theta, std::span<const double> x,
                     MixtureQuantile mixture = MixtureQuantile::exact);

// Quantile of the noise 0.75 N(0,1) + 0.25 N(0,4).
double mixture_noise_quantile(double theta);
double mixture_noise_cdf(double e);

enum class ZeroFractionBase { all_rows, censored_rows };

// Fraction of rows whose ground-truth quantile at theta is exactly zero.
double zero_quantile_fraction(const CensoredDataset& data, double theta,
                              ZeroFractionBase base = ZeroFractionBase::all_rows);

// Marks a random gamma share of the series as right-censored with
// y = (1 - delta) y*, delta ~ U[c1, c2], tau = y. Unselected rows keep y = y*
// with an infinite threshold until imputed.
CensoredDataset censor_partial(std::span<const double> series, double gamma, double c1, double c2,
                               std::uint64_t seed);

struct TripRecord {
	std::int64_t day = 0;
	std::int64_t vehicle = 0;
};

struct TripTable {
	std::size_t n_days = 0;
	std::size_t n_vehicles = 0;
	std::vector<TripRecord> records;

	std::vector<double> daily_counts() const;
};

// Poisson trip counts per (day, vehicle), rate * (1 + amplitude sin(2 pi day / 7)).
TripTable gen_trip_table(std::size_t n_days, std::size_t n_vehicles, double per_vehicle_rate,
                         double weekly_amplitude, std::uint64_t seed);

// Drops every trip of a random alpha share of vehicles. All rows are censored
// (right side, tau = y); y* keeps the original daily counts.
CensoredDataset censor_fleet(const TripTable& trips, double alpha, std::uint64_t seed);

// Daily counts with weekly seasonality and AR(1) log-intensity; a stand-in
// for a real demand series.
std::vector<double> gen_daily_series(std::size_t n_days, double level, double weekly_amplitude, double ar_coeff,
                                     double innovation_sd, std::uint64_t seed);

struct SplitScheme {
	enum class Kind { random, consecutive } kind = Kind::random;
	std::array<double, 3> proportions{0.62, 0.15, 0.23};
	std::uint64_t seed = 0;

	static SplitScheme random(double train, double val, double test, std::uint64_t seed);
	static SplitScheme consecutive_thirds();
};

struct DatasetSplit {
	CensoredDataset train, val, test;
	std::array<std::vector<std::size_t>, 3> rows;
};

// Largest-remainder apportionment of n into the given proportions.
std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& proportions);

DatasetSplit split(const CensoredDataset& data, const SplitScheme& scheme);

struct LagMatrix {
	std::size_t n_features = 0;  // lags + intercept
	std::vector<double> X;
	std::vector<double> targets;
};

// Row t: (1, y_{t-1}, ..., y_{t-lags}) targeting y_t; the first `lags` rows are dropped.
LagMatrix lag_features(std::span<const double> series, std::size_t lags = 7);

// Lag construction over a censored series: covariates are lags of the observed
// y, and the per-row censoring columns are aligned with the targets.
CensoredDataset lag_dataset(const CensoredDataset& series, std::size_t lags = 7);

} // namespace cqr
