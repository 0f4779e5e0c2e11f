#include "cqr/datagen.hpp"

#include "cqr/error.hpp"
#include "cqr/normal.hpp"
#include "cqr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace cqr {

namespace {

constexpr double kMixtureWeight = 0.75;
constexpr double kMixtureWideSd = 2.0;

double noise_scale(Noise noise, std::span<const double> x, MixtureQuantile mixture) {
	switch (noise) {
	case Noise::standard_gaussian:
		return 1.0;
	case Noise::heteroskedastic:
		return std::fabs(1.0 + x[2]);
	case Noise::gaussian_mixture:
		return mixture == MixtureQuantile::closed_form ? std::sqrt(0.75 * 0.75 + 0.25 * 0.25) : 1.0;
	}
	return 1.0;
}

void check_synthetic_row(std::span<const double> x) {
	if (x.size() != 3) throw ShapeError("synthetic covariates are (x0, x1, x2)");
}

} // namespace

std::string_view to_string(Noise noise) {
	switch (noise) {
	case Noise::standard_gaussian:
		return "standard_gaussian";
	case Noise::heteroskedastic:
		return "heteroskedastic";
	case Noise::gaussian_mixture:
		return "gaussian_mixture";
	}
	return "unknown";
}

Noise parse_noise(std::string_view name) {
	if (name == "standard_gaussian" || name == "gaussian" || name == "sg") return Noise::standard_gaussian;
	if (name == "heteroskedastic" || name == "het") return Noise::heteroskedastic;
	if (name == "gaussian_mixture" || name == "mixture" || name == "mix") return Noise::gaussian_mixture;
	throw ConfigError("unknown noise '" + std::string(name) + "'");
}

double mixture_noise_cdf(double e) {
	return kMixtureWeight * normal::cdf(e) + (1.0 - kMixtureWeight) * normal::cdf(e / kMixtureWideSd);
}

double mixture_noise_quantile(double theta) {
	QuantileLevel level(theta);
	// The mixture quantile is bracketed by the component quantiles.
	const double zq = normal::quantile(level.value());
	double lo = std::min(zq, kMixtureWideSd * zq) - 1e-9;
	double hi = std::max(zq, kMixtureWideSd * zq) + 1e-9;
	for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, std::fabs(lo)); ++i) {
		const double mid = 0.5 * (lo + hi);
		if (mixture_noise_cdf(mid) < level.value()) {
			lo = mid;
		} else {
			hi = mid;
		}
	}
	return 0.5 * (lo + hi);
}

double latent_quantile(Noise noise, double theta, std::span<const double> x, MixtureQuantile mixture) {
	check_synthetic_row(x);
	QuantileLevel level(theta);
	const double mean = x[0] + x[1] + x[2];
	if (noise == Noise::gaussian_mixture && mixture == MixtureQuantile::exact) {
		return mean + mixture_noise_quantile(level.value());
	}
	return mean + noise_scale(noise, x, mixture) * normal::quantile(level.value());
}

double true_quantile(Noise noise, double theta, std::span<const double> x, MixtureQuantile mixture) {
	return std::max(0.0, latent_quantile(noise, theta, x, mixture));
}

CensoredDataset gen_synthetic(const SyntheticSpec& spec) {
	if (spec.n == 0) throw ConfigError("synthetic dataset needs n >= 1");
	Rng cov_rng(derive_seed(spec.seed, "synthetic/covariates"));
	Rng noise_rng(derive_seed(spec.seed, "synthetic/noise"));

	CensoredDataset data;
	data.n_features = 3;
	data.side = Side::left;
	data.X.reserve(spec.n * 3);
	std::vector<double> y_star(spec.n);
	for (std::size_t i = 0; i < spec.n; ++i) {
		const double x1 = cov_rng.below(2) == 0 ? -1.0 : 1.0;
		const double x2 = cov_rng.normal();
		double eps = 0.0;
		switch (spec.noise) {
		case Noise::standard_gaussian:
			eps = noise_rng.normal();
			break;
		case Noise::heteroskedastic:
			eps = (1.0 + x2) * noise_rng.normal();
			break;
		case Noise::gaussian_mixture: {
			const bool narrow = noise_rng.bernoulli(kMixtureWeight);
			eps = (narrow ? 1.0 : kMixtureWideSd) * noise_rng.normal();
			break;
		}
		}
		if (spec.zero_noise) eps = 0.0;
		data.X.insert(data.X.end(), {1.0, x1, x2});
		y_star[i] = 1.0 + x1 + x2 + eps;
		data.y.push_back(std::max(0.0, y_star[i]));
		data.tau.push_back(0.0);
		data.censored.push_back(y_star[i] <= 0.0 ? 1 : 0);
	}
	for (double theta : spec.thetas) {
		std::vector<double> q(spec.n);
		for (std::size_t i = 0; i < spec.n; ++i) {
			q[i] = spec.zero_noise ? std::max(0.0, y_star[i]) : true_quantile(spec.noise, theta, data.row(i), spec.mixture);
		}
		data.true_quantiles.emplace(normalize_level(theta), std::move(q));
	}
	data.y_star = std::move(y_star);
	return data;
}

double zero_quantile_fraction(const CensoredDataset& data, double theta, ZeroFractionBase base) {
	const auto* q = find_true_quantiles(data, theta);
	if (q == nullptr) {
		throw UsageError("dataset carries no ground-truth quantiles for theta=" + std::to_string(theta));
	}
	std::size_t zeros = 0;
	std::size_t considered = 0;
	for (std::size_t i = 0; i < data.size(); ++i) {
		if (base == ZeroFractionBase::censored_rows && data.censored[i] == 0) continue;
		++considered;
		if ((*q)[i] == 0.0) ++zeros;
	}
	if (considered == 0) return 0.0;
	return static_cast<double>(zeros) / static_cast<double>(considered);
}

CensoredDataset censor_partial(std::span<const double> series, double gamma, double c1, double c2,
                               std::uint64_t seed) {
	if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in [0,1]");
	if (!(c1 > 0.0 && c1 <= c2 && c2 < 1.0)) throw DomainError("censoring range needs 0 < c1 <= c2 < 1");

	CensoredDataset data;
	data.side = Side::right;
	data.y.assign(series.begin(), series.end());
	data.tau.assign(series.size(), std::numeric_limits<double>::infinity());
	data.censored.assign(series.size(), 0);
	data.y_star = std::vector<double>(series.begin(), series.end());

	Rng rng(seed);
	const auto k = static_cast<std::size_t>(std::llround(gamma * static_cast<double>(series.size())));
	auto chosen = rng.sample_without_replacement(series.size(), k);
	std::sort(chosen.begin(), chosen.end());
	for (std::size_t i : chosen) {
		const double delta = rng.uniform(c1, c2);
		data.y[i] = (1.0 - delta) * series[i];
		data.tau[i] = data.y[i];
		data.censored[i] = 1;
	}
	return data;
}

std::vector<double> TripTable::daily_counts() const {
	std::vector<double> counts(n_days, 0.0);
	for (const auto& r : records) {
		counts.at(static_cast<std::size_t>(r.day)) += 1.0;
	}
	return counts;
}

TripTable gen_trip_table(std::size_t n_days, std::size_t n_vehicles, double per_vehicle_rate,
                         double weekly_amplitude, std::uint64_t seed) {
	if (n_days == 0 || n_vehicles == 0) throw ConfigError("trip table needs positive day and vehicle counts");
	if (!(per_vehicle_rate >= 0.0)) throw DomainError("trip rate must be >= 0");
	if (!(std::fabs(weekly_amplitude) <= 1.0)) throw DomainError("weekly amplitude must lie in [-1,1]");
	TripTable table;
	table.n_days = n_days;
	table.n_vehicles = n_vehicles;
	Rng rng(seed);
	for (std::size_t d = 0; d < n_days; ++d) {
		const double season = 1.0 + weekly_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(d) / 7.0);
		const double rate = per_vehicle_rate * season;
		for (std::size_t v = 0; v < n_vehicles; ++v) {
			const auto trips = rng.poisson(rate);
			for (std::uint64_t t = 0; t < trips; ++t) {
				table.records.push_back({static_cast<std::int64_t>(d), static_cast<std::int64_t>(v)});
			}
		}
	}
	return table;
}

CensoredDataset censor_fleet(const TripTable& trips, double alpha, std::uint64_t seed) {
	if (trips.n_vehicles == 0) throw UsageError("fleet censoring needs a non-empty fleet");
	if (!(alpha >= 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in [0,1)");
	Rng rng(seed);
	const auto k = static_cast<std::size_t>(std::llround(alpha * static_cast<double>(trips.n_vehicles)));
	std::vector<std::uint8_t> removed(trips.n_vehicles, 0);
	for (std::size_t v : rng.sample_without_replacement(trips.n_vehicles, k)) removed[v] = 1;

	const auto latent = trips.daily_counts();
	std::vector<double> kept(trips.n_days, 0.0);
	for (const auto& r : trips.records) {
		if (!removed.at(static_cast<std::size_t>(r.vehicle))) kept[static_cast<std::size_t>(r.day)] += 1.0;
	}
	CensoredDataset data;
	data.side = Side::right;
	data.y = kept;
	data.tau = kept;
	data.censored.assign(trips.n_days, 1);
	data.y_star = latent;
	return data;
}

std::vector<double> gen_daily_series(std::size_t n_days, double level, double weekly_amplitude, double ar_coeff,
                                     double innovation_sd, std::uint64_t seed) {
	if (!(level > 0.0)) throw DomainError("series level must be positive");
	if (!(std::fabs(ar_coeff) < 1.0)) throw DomainError("AR coefficient must lie in (-1,1)");
	Rng rng(seed);
	std::vector<double> series(n_days);
	double state = 0.0;
	const double log_level = std::log(level);
	for (std::size_t t = 0; t < n_days; ++t) {
		state = ar_coeff * state + innovation_sd * rng.normal();
		const double season = weekly_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 7.0);
		series[t] = static_cast<double>(rng.poisson(std::exp(log_level + season + state)));
	}
	return series;
}

SplitScheme SplitScheme::random(double train, double val, double test, std::uint64_t seed) {
	SplitScheme s;
	s.kind = Kind::random;
	s.proportions = {train, val, test};
	s.seed = seed;
	return s;
}

SplitScheme SplitScheme::consecutive_thirds() {
	SplitScheme s;
	s.kind = Kind::consecutive;
	s.proportions = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
	return s;
}

std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& proportions) {
	double total = 0.0;
	for (double p : proportions) {
		if (!(p > 0.0)) throw ConfigError("split proportions must be positive");
		total += p;
	}
	if (std::fabs(total - 1.0) > 1e-9) {
		throw ConfigError("split proportions must sum to 1, got " + std::to_string(total));
	}
	std::array<std::size_t, 3> sizes{};
	std::array<double, 3> remainder{};
	std::size_t assigned = 0;
	for (std::size_t k = 0; k < 3; ++k) {
		const double exact = proportions[k] * static_cast<double>(n);
		sizes[k] = static_cast<std::size_t>(std::floor(exact));
		remainder[k] = exact - static_cast<double>(sizes[k]);
		assigned += sizes[k];
	}
	std::array<std::size_t, 3> order{0, 1, 2};
	std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
	for (std::size_t i = 0; assigned < n; ++i, ++assigned) {
		++sizes[order[i % 3]];
	}
	return sizes;
}

DatasetSplit split(const CensoredDataset& data, const SplitScheme& scheme) {
	const auto sizes = apportion(data.size(), scheme.proportions);
	std::vector<std::size_t> order(data.size());
	if (scheme.kind == SplitScheme::Kind::random) {
		Rng rng(scheme.seed);
		order = rng.permutation(data.size());
	} else {
		std::iota(order.begin(), order.end(), std::size_t{0});
	}
	DatasetSplit out;
	std::size_t offset = 0;
	for (std::size_t k = 0; k < 3; ++k) {
		std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(offset),
		                              order.begin() + static_cast<std::ptrdiff_t>(offset + sizes[k]));
		std::sort(rows.begin(), rows.end());
		offset += sizes[k];
		out.rows[k] = std::move(rows);
	}
	out.train = select_rows(data, out.rows[0]);
	out.val = select_rows(data, out.rows[1]);
	out.test = select_rows(data, out.rows[2]);
	return out;
}

LagMatrix lag_features(std::span<const double> series, std::size_t lags) {
	if (lags == 0) throw ConfigError("need at least one lag");
	if (series.size() <= lags) {
		throw UsageError("series of length " + std::to_string(series.size()) + " is too short for " +
		                 std::to_string(lags) + " lags");
	}
	LagMatrix out;
	out.n_features = lags + 1;
	for (std::size_t t = lags; t < series.size(); ++t) {
		out.X.push_back(1.0);
		for (std::size_t l = 1; l <= lags; ++l) out.X.push_back(series[t - l]);
		out.targets.push_back(series[t]);
	}
	return out;
}

CensoredDataset lag_dataset(const CensoredDataset& series, std::size_t lags) {
	const auto lm = lag_features(series.y, lags);
	CensoredDataset out;
	out.n_features = lm.n_features;
	out.X = lm.X;
	out.side = series.side;
	out.y.assign(series.y.begin() + static_cast<std::ptrdiff_t>(lags), series.y.end());
	out.tau.assign(series.tau.begin() + static_cast<std::ptrdiff_t>(lags), series.tau.end());
	out.censored.assign(series.censored.begin() + static_cast<std::ptrdiff_t>(lags), series.censored.end());
	if (series.y_star) {
		out.y_star = std::vector<double>(series.y_star->begin() + static_cast<std::ptrdiff_t>(lags), series.y_star->end());
	}
	return out;
}

} // namespace cqr
