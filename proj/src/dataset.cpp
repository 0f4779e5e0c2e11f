#include "cqr/dataset.hpp"

#include "cqr/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cqr {

std::size_t CensoredDataset::censored_count() const {
	return static_cast<std::size_t>(std::count(censored.begin(), censored.end(), std::uint8_t{1}));
}

double CensoredDataset::censored_fraction() const {
	if (empty()) return 0.0;
	return static_cast<double>(censored_count()) / static_cast<double>(size());
}

std::vector<CensoredPoint> CensoredDataset::points() const {
	std::vector<CensoredPoint> pts(size());
	for (std::size_t i = 0; i < size(); ++i) {
		pts[i] = {y[i], tau[i], censored[i] != 0};
	}
	return pts;
}

void validate(const CensoredDataset& data) {
	const std::size_t n = data.size();
	if (data.tau.size() != n || data.censored.size() != n) {
		throw ShapeError("dataset columns y/tau/censored have different lengths");
	}
	if (data.X.size() != n * data.n_features) {
		throw ShapeError("covariate matrix does not match row count");
	}
	if (data.y_star && data.y_star->size() != n) {
		throw ShapeError("latent column length differs from row count");
	}
	for (const auto& [theta, q] : data.true_quantiles) {
		if (q.size() != n) throw ShapeError("true quantile column length differs from row count");
	}
	for (std::size_t i = 0; i < n; ++i) {
		const double y = data.y[i];
		const double tau = data.tau[i];
		const bool cens = data.censored[i] != 0;
		const bool ordered = data.side == Side::left ? y >= tau : y <= tau;
		if (!ordered) {
			throw UsageError("row " + std::to_string(i) + " violates the censoring order y vs tau");
		}
		if (cens && y != tau) {
			throw UsageError("censored row " + std::to_string(i) + " is not at its threshold");
		}
		if (data.y_star) {
			const double ys = (*data.y_star)[i];
			const double clamped = data.side == Side::left ? std::max(ys, tau) : std::min(ys, tau);
			if (clamped != y) {
				throw UsageError("row " + std::to_string(i) + " is not the clamp of its latent value");
			}
		}
	}
}

CensoredDataset select_rows(const CensoredDataset& data, std::span<const std::size_t> rows) {
	CensoredDataset out;
	out.n_features = data.n_features;
	out.side = data.side;
	out.X.reserve(rows.size() * data.n_features);
	for (std::size_t r : rows) {
		if (r >= data.size()) throw ShapeError("row index out of range");
		const auto src = data.row(r);
		out.X.insert(out.X.end(), src.begin(), src.end());
		out.y.push_back(data.y[r]);
		out.tau.push_back(data.tau[r]);
		out.censored.push_back(data.censored[r]);
	}
	if (data.y_star) {
		std::vector<double> ys;
		ys.reserve(rows.size());
		for (std::size_t r : rows) ys.push_back((*data.y_star)[r]);
		out.y_star = std::move(ys);
	}
	for (const auto& [theta, q] : data.true_quantiles) {
		std::vector<double> sel;
		sel.reserve(rows.size());
		for (std::size_t r : rows) sel.push_back(q[r]);
		out.true_quantiles.emplace(theta, std::move(sel));
	}
	return out;
}

CensoredDataset mirror(const CensoredDataset& data) {
	CensoredDataset out = data;
	for (std::size_t i = 0; i < data.size(); ++i) {
		for (std::size_t j = 1; j < data.n_features; ++j) {
			out.X[i * data.n_features + j] = -data.X[i * data.n_features + j];
		}
		out.y[i] = -data.y[i];
		out.tau[i] = -data.tau[i];
	}
	if (data.y_star) {
		for (auto& v : *out.y_star) v = -v;
	}
	out.true_quantiles.clear();
	for (const auto& [theta, q] : data.true_quantiles) {
		std::vector<double> neg(q.size());
		std::transform(q.begin(), q.end(), neg.begin(), [](double v) { return -v; });
		out.true_quantiles.emplace(normalize_level(1.0 - theta), std::move(neg));
	}
	out.side = data.side == Side::left ? Side::right : Side::left;
	return out;
}

double normalize_level(double theta) {
	return std::round(theta * 1e12) / 1e12;
}

const std::vector<double>* find_true_quantiles(const CensoredDataset& data, double theta) {
	for (const auto& [key, q] : data.true_quantiles) {
		if (std::fabs(key - theta) < 1e-9) return &q;
	}
	return nullptr;
}

double mean(std::span<const double> values) {
	if (values.empty()) throw DegenerateDataError("mean of an empty range");
	return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

} // namespace cqr
