#pragma once

#include "cqr/dataset.hpp"

#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace cqr::io {

// Shortest round-trip text for a double; infinities as "inf" / "-inf".
std::string format_number(double v);
double parse_number(std::string_view text);

// RFC 4180 quoting when the field needs it.
std::string csv_field(std::string_view text);
std::vector<std::string> split_csv_line(std::string_view line);

// Header `x1,...,xp,y,tau,censored[,y_star]`; the intercept column is not
// stored. Ground-truth quantiles are not part of this format.
void write_dataset_csv(const CensoredDataset& data, std::ostream& out);
std::string dataset_csv(const CensoredDataset& data);

// Adds the intercept column back. The side is inferred from y vs tau when any
// row is strictly ordered; otherwise `side_hint` (default left) applies.
CensoredDataset read_dataset_csv(std::istream& in, std::optional<Side> side_hint = std::nullopt);
CensoredDataset read_dataset_csv(const std::filesystem::path& path, std::optional<Side> side_hint = std::nullopt);

// Ground-truth quantile columns, header = theta values. Rows align with the
// dataset file.
std::string truth_csv(const CensoredDataset& data);
void read_truth_csv(std::istream& in, CensoredDataset& data);

struct DailySeries {
	std::vector<std::string> dates;
	std::vector<double> counts;
};

// Header `date,count`; ISO-8601 dates on consecutive days. Gaps, duplicates
// and unordered dates are rejected.
DailySeries read_daily_series_csv(std::istream& in);
DailySeries read_daily_series_csv(const std::filesystem::path& path);

// Days since 1970-01-01 for an ISO date (YYYY-MM-DD); throws IoError.
long long parse_iso_date(std::string_view text);

std::string read_file(const std::filesystem::path& path);
// Writes to a temporary sibling and renames over the target.
void atomic_write(const std::filesystem::path& path, std::string_view content);

} // namespace cqr::io
