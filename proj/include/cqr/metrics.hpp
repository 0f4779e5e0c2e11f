#pragma once

#include "cqr/dataset.hpp"

#include "json.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cqr {

struct PointMetrics {
	// Absent when the true quantiles have zero spread.
	std::optional<double> r2;
	double mae = 0.0;
	double rmse = 0.0;
};

// R^2 = 1 - sum (pred - q)^2 / sum (q - mean(q))^2; MAE; RMSE.
PointMetrics point_metrics(std::span<const double> pred, std::span<const double> truth);

struct IntervalMetrics {
	double icp = 0.0;
	double mil = 0.0;
	// Rows with upper < lower; they still enter MIL with their signed width.
	std::size_t crossings = 0;
};

// ICP: share of y* with lower <= y* <= upper. MIL: mean(upper - lower).
IntervalMetrics interval_metrics(std::span<const double> lower, std::span<const double> upper,
                                 std::span<const double> y_star);

enum class Subset { all_test, non_censored_test };

std::string_view to_string(Subset subset);
Subset parse_subset(std::string_view name);

// Row indices of `data` belonging to the subset; UsageError when empty.
std::vector<std::size_t> subset_rows(const CensoredDataset& data, Subset subset);

struct PointPrediction {
	double theta = 0.5;
	std::vector<double> values;
};

struct IntervalPrediction {
	std::vector<double> lower;
	std::vector<double> upper;
};

struct Predictions {
	std::optional<PointPrediction> point;
	std::optional<IntervalPrediction> interval;
};

struct EvalReport {
	std::optional<double> r2;
	std::optional<double> mae;
	std::optional<double> rmse;
	std::optional<double> icp;
	std::optional<double> mil;
	std::size_t crossings = 0;
	Subset subset = Subset::all_test;
	std::size_t n = 0;
};

// Metrics restricted to the subset's rows. Point metrics need ground-truth
// quantiles for the prediction's theta; interval metrics need y_star.
EvalReport subset_report(const Predictions& preds, const CensoredDataset& data, Subset subset);

nlohmann::json to_json(const EvalReport& report);

// Header and row for the flat report CSV. Empty optionals render as "".
std::string report_csv_header();
std::string report_csv_row(std::string_view dataset, std::string_view model, std::string_view target,
                           const EvalReport& report);

} // namespace cqr
