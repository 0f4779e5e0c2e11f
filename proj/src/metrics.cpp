#include "cqr/metrics.hpp"

#include "cqr/error.hpp"

#include <cmath>
#include <cstdio>
#include <string>

namespace cqr {

namespace {

std::string fmt_opt(const std::optional<double>& v) {
	if (!v) return "";
	char buf[32];
	std::snprintf(buf, sizeof buf, "%.10g", *v);
	return buf;
}

} // namespace

PointMetrics point_metrics(std::span<const double> pred, std::span<const double> truth) {
	if (pred.size() != truth.size()) throw ShapeError("prediction and truth lengths differ");
	if (pred.size() < 2) throw ShapeError("point metrics need at least two rows");
	const double n = static_cast<double>(pred.size());
	double q_bar = 0.0;
	for (double q : truth) q_bar += q;
	q_bar /= n;
	double sse = 0.0, sae = 0.0, sst = 0.0;
	for (std::size_t i = 0; i < pred.size(); ++i) {
		const double e = pred[i] - truth[i];
		sse += e * e;
		sae += std::fabs(e);
		sst += (truth[i] - q_bar) * (truth[i] - q_bar);
	}
	PointMetrics m;
	if (sst > 0.0) m.r2 = 1.0 - sse / sst;
	m.mae = sae / n;
	m.rmse = std::sqrt(sse / n);
	return m;
}

IntervalMetrics interval_metrics(std::span<const double> lower, std::span<const double> upper,
                                 std::span<const double> y_star) {
	if (lower.size() != upper.size() || lower.size() != y_star.size()) {
		throw ShapeError("interval bounds and latent values have different lengths");
	}
	if (lower.empty()) throw ShapeError("interval metrics need at least one row");
	IntervalMetrics m;
	std::size_t covered = 0;
	double width = 0.0;
	for (std::size_t i = 0; i < lower.size(); ++i) {
		if (lower[i] <= y_star[i] && y_star[i] <= upper[i]) ++covered;
		if (upper[i] < lower[i]) ++m.crossings;
		width += upper[i] - lower[i];
	}
	const double n = static_cast<double>(lower.size());
	m.icp = static_cast<double>(covered) / n;
	m.mil = width / n;
	return m;
}

std::string_view to_string(Subset subset) {
	return subset == Subset::all_test ? "all" : "non_censored";
}

Subset parse_subset(std::string_view name) {
	if (name == "all" || name == "all_test") return Subset::all_test;
	if (name == "non_censored" || name == "non-censored" || name == "non_censored_test") return Subset::non_censored_test;
	throw ConfigError("unknown subset '" + std::string(name) + "'");
}

std::vector<std::size_t> subset_rows(const CensoredDataset& data, Subset subset) {
	std::vector<std::size_t> rows;
	for (std::size_t i = 0; i < data.size(); ++i) {
		if (subset == Subset::all_test || data.censored[i] == 0) rows.push_back(i);
	}
	if (rows.empty()) {
		throw UsageError("subset '" + std::string(to_string(subset)) + "' has no rows");
	}
	return rows;
}

EvalReport subset_report(const Predictions& preds, const CensoredDataset& data, Subset subset) {
	const auto rows = subset_rows(data, subset);
	EvalReport report;
	report.subset = subset;
	report.n = rows.size();
	auto gather = [&](const std::vector<double>& column) {
		if (column.size() != data.size()) throw ShapeError("prediction column does not match dataset rows");
		std::vector<double> out;
		out.reserve(rows.size());
		for (std::size_t r : rows) out.push_back(column[r]);
		return out;
	};
	if (preds.point) {
		const auto* truth = find_true_quantiles(data, preds.point->theta);
		if (truth == nullptr) {
			throw UsageError("point metrics need ground-truth quantiles for theta=" + std::to_string(preds.point->theta));
		}
		const auto m = point_metrics(gather(preds.point->values), gather(*truth));
		report.r2 = m.r2;
		report.mae = m.mae;
		report.rmse = m.rmse;
	}
	if (preds.interval) {
		if (!data.y_star) throw UsageError("interval metrics need latent values (y_star) in the dataset");
		const auto m = interval_metrics(gather(preds.interval->lower), gather(preds.interval->upper), gather(*data.y_star));
		report.icp = m.icp;
		report.mil = m.mil;
		report.crossings = m.crossings;
	}
	return report;
}

nlohmann::json to_json(const EvalReport& report) {
	auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
	return {{"subset", std::string(to_string(report.subset))},
	        {"n", report.n},
	        {"r2", opt(report.r2)},
	        {"mae", opt(report.mae)},
	        {"rmse", opt(report.rmse)},
	        {"icp", opt(report.icp)},
	        {"mil", opt(report.mil)},
	        {"crossings", report.crossings}};
}

std::string report_csv_header() {
	return "dataset,model,target,subset,n,r2,mae,rmse,icp,mil,crossings";
}

std::string report_csv_row(std::string_view dataset, std::string_view model, std::string_view target,
                           const EvalReport& report) {
	std::string row;
	row += dataset;
	row += ',';
	row += model;
	row += ',';
	row += target;
	row += ',';
	row += to_string(report.subset);
	row += ',' + std::to_string(report.n);
	row += ',' + fmt_opt(report.r2) + ',' + fmt_opt(report.mae) + ',' + fmt_opt(report.rmse);
	row += ',' + fmt_opt(report.icp) + ',' + fmt_opt(report.mil) + ',' + std::to_string(report.crossings);
	return row;
}

} // namespace cqr
