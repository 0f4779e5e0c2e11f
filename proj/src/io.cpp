#include "cqr/io.hpp"

#include "cqr/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace cqr::io {

namespace {

std::string trim(std::string_view s) {
	while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\n')) s.remove_suffix(1);
	while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
	return std::string(s);
}

bool getline_nonempty(std::istream& in, std::string& line) {
	while (std::getline(in, line)) {
		if (!trim(line).empty()) return true;
	}
	return false;
}

} // namespace

std::string format_number(double v) {
	if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
	if (std::isnan(v)) return "nan";
	char buf[64];
	const auto res = std::to_chars(buf, buf + sizeof buf, v);
	return std::string(buf, res.ptr);
}

double parse_number(std::string_view text) {
	const std::string t = trim(text);
	if (t == "inf" || t == "+inf" || t == "Infinity") return std::numeric_limits<double>::infinity();
	if (t == "-inf" || t == "-Infinity") return -std::numeric_limits<double>::infinity();
	double v = 0.0;
	const char* first = t.data();
	if (!t.empty() && t.front() == '+') ++first;
	const auto res = std::from_chars(first, t.data() + t.size(), v);
	if (res.ec != std::errc() || res.ptr != t.data() + t.size() || t.empty()) {
		throw IoError("cannot parse number '" + t + "'");
	}
	return v;
}

std::string csv_field(std::string_view text) {
	if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
	std::string out = "\"";
	for (char c : text) {
		if (c == '"') out += '"';
		out += c;
	}
	out += '"';
	return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
	std::vector<std::string> fields;
	std::string cur;
	bool quoted = false;
	for (std::size_t i = 0; i < line.size(); ++i) {
		const char c = line[i];
		if (quoted) {
			if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
				cur += '"';
				++i;
			} else if (c == '"') {
				quoted = false;
			} else {
				cur += c;
			}
		} else if (c == '"') {
			quoted = true;
		} else if (c == ',') {
			fields.push_back(trim(cur));
			cur.clear();
		} else {
			cur += c;
		}
	}
	fields.push_back(trim(cur));
	return fields;
}

void write_dataset_csv(const CensoredDataset& data, std::ostream& out) {
	const std::size_t p = data.n_features > 0 ? data.n_features - 1 : 0;
	for (std::size_t j = 1; j <= p; ++j) out << 'x' << j << ',';
	out << "y,tau,censored";
	if (data.y_star) out << ",y_star";
	out << '\n';
	for (std::size_t i = 0; i < data.size(); ++i) {
		const auto x = data.row(i);
		for (std::size_t j = 1; j <= p; ++j) out << format_number(x[j]) << ',';
		out << format_number(data.y[i]) << ',' << format_number(data.tau[i]) << ',' << (data.censored[i] ? '1' : '0');
		if (data.y_star) out << ',' << format_number((*data.y_star)[i]);
		out << '\n';
	}
}

std::string dataset_csv(const CensoredDataset& data) {
	std::ostringstream out;
	write_dataset_csv(data, out);
	return out.str();
}

CensoredDataset read_dataset_csv(std::istream& in, std::optional<Side> side_hint) {
	std::string line;
	if (!getline_nonempty(in, line)) throw IoError("dataset CSV is empty");
	const auto header = split_csv_line(line);
	std::size_t p = 0;
	while (p < header.size() && header[p] == "x" + std::to_string(p + 1)) ++p;
	const std::size_t rest = header.size() - p;
	if (rest < 3 || header[p] != "y" || header[p + 1] != "tau" || header[p + 2] != "censored" ||
	    (rest == 4 && header[p + 3] != "y_star") || rest > 4) {
		throw IoError("dataset CSV header must be x1,...,xp,y,tau,censored[,y_star]");
	}
	const bool has_latent = rest == 4;
	CensoredDataset data;
	data.n_features = p > 0 ? p + 1 : 0;
	std::vector<double> latent;
	std::size_t line_no = 1;
	while (getline_nonempty(in, line)) {
		++line_no;
		const auto f = split_csv_line(line);
		if (f.size() != header.size()) {
			throw IoError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields");
		}
		if (p > 0) data.X.push_back(1.0);
		for (std::size_t j = 0; j < p; ++j) data.X.push_back(parse_number(f[j]));
		data.y.push_back(parse_number(f[p]));
		data.tau.push_back(parse_number(f[p + 1]));
		if (f[p + 2] != "0" && f[p + 2] != "1") {
			throw IoError("line " + std::to_string(line_no) + ": censored must be 0 or 1");
		}
		data.censored.push_back(f[p + 2] == "1" ? 1 : 0);
		if (has_latent) latent.push_back(parse_number(f[p + 3]));
	}
	if (has_latent) data.y_star = std::move(latent);

	bool any_above = false, any_below = false;
	for (std::size_t i = 0; i < data.size(); ++i) {
		any_above = any_above || data.y[i] > data.tau[i];
		any_below = any_below || data.y[i] < data.tau[i];
	}
	if (any_above && any_below) throw IoError("dataset mixes left- and right-censored rows");
	data.side = any_above ? Side::left : any_below ? Side::right : side_hint.value_or(Side::left);
	if (side_hint && (any_above || any_below) && *side_hint != data.side) {
		throw IoError("dataset orientation contradicts the requested side");
	}
	validate(data);
	return data;
}

CensoredDataset read_dataset_csv(const std::filesystem::path& path, std::optional<Side> side_hint) {
	std::ifstream in(path);
	if (!in) throw IoError("cannot open " + path.string());
	return read_dataset_csv(in, side_hint);
}

std::string truth_csv(const CensoredDataset& data) {
	std::ostringstream out;
	bool first = true;
	for (const auto& [theta, q] : data.true_quantiles) {
		out << (first ? "" : ",") << format_number(theta);
		first = false;
	}
	out << '\n';
	for (std::size_t i = 0; i < data.size(); ++i) {
		first = true;
		for (const auto& [theta, q] : data.true_quantiles) {
			out << (first ? "" : ",") << format_number(q.at(i));
			first = false;
		}
		out << '\n';
	}
	return out.str();
}

void read_truth_csv(std::istream& in, CensoredDataset& data) {
	std::string line;
	if (!std::getline(in, line)) throw IoError("truth file is empty");
	std::vector<double> thetas;
	for (const auto& f : split_csv_line(line)) thetas.push_back(normalize_level(parse_number(f)));
	std::vector<std::vector<double>> cols(thetas.size());
	while (std::getline(in, line)) {
		if (trim(line).empty()) continue;
		const auto f = split_csv_line(line);
		if (f.size() != thetas.size()) throw IoError("truth row has " + std::to_string(f.size()) + " fields");
		for (std::size_t j = 0; j < f.size(); ++j) cols[j].push_back(parse_number(f[j]));
	}
	for (std::size_t j = 0; j < thetas.size(); ++j) {
		if (cols[j].size() != data.size()) throw IoError("truth row count does not match the dataset");
		data.true_quantiles[thetas[j]] = std::move(cols[j]);
	}
}

long long parse_iso_date(std::string_view text) {
	const std::string t = trim(text);
	int y = 0;
	unsigned m = 0, d = 0;
	if (t.size() != 10 || t[4] != '-' || t[7] != '-' || std::sscanf(t.c_str(), "%4d-%2u-%2u", &y, &m, &d) != 3) {
		throw IoError("not an ISO-8601 date: '" + t + "'");
	}
	static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
	const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
	if (m < 1 || m > 12 || d < 1 || d > kDays[m - 1] + (m == 2 && leap ? 1u : 0u)) {
		throw IoError("invalid calendar date: '" + t + "'");
	}
	// Days from civil (proleptic Gregorian).
	y -= m <= 2;
	const long long era = (y >= 0 ? y : y - 399) / 400;
	const unsigned yoe = static_cast<unsigned>(y - era * 400);
	const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
	const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
	return era * 146097 + static_cast<long long>(doe) - 719468;
}

DailySeries read_daily_series_csv(std::istream& in) {
	std::string line;
	if (!getline_nonempty(in, line)) throw IoError("series CSV is empty");
	const auto header = split_csv_line(line);
	if (header.size() != 2 || header[0] != "date" || header[1] != "count") {
		throw IoError("series CSV header must be date,count");
	}
	DailySeries series;
	long long prev = 0;
	while (getline_nonempty(in, line)) {
		const auto f = split_csv_line(line);
		if (f.size() != 2) throw IoError("series row must have two fields: '" + line + "'");
		const long long day = parse_iso_date(f[0]);
		if (!series.dates.empty() && day != prev + 1) {
			throw IoError("series dates must be consecutive; gap or disorder at " + f[0]);
		}
		prev = day;
		series.dates.push_back(f[0]);
		series.counts.push_back(parse_number(f[1]));
	}
	if (series.counts.empty()) throw IoError("series CSV has no rows");
	return series;
}

DailySeries read_daily_series_csv(const std::filesystem::path& path) {
	std::ifstream in(path);
	if (!in) throw IoError("cannot open " + path.string());
	return read_daily_series_csv(in);
}

std::string read_file(const std::filesystem::path& path) {
	std::ifstream in(path, std::ios::binary);
	if (!in) throw IoError("cannot open " + path.string());
	std::ostringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

void atomic_write(const std::filesystem::path& path, std::string_view content) {
	if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
	auto tmp = path;
	tmp += ".tmp";
	{
		std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
		if (!out) throw IoError("cannot write " + tmp.string());
		out.write(content.data(), static_cast<std::streamsize>(content.size()));
		if (!out) throw IoError("write failed for " + tmp.string());
	}
	std::filesystem::rename(tmp, path);
}

} // namespace cqr::io
