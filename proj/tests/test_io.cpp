#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cqr/datagen.hpp"
#include "cqr/error.hpp"
#include "cqr/io.hpp"
#include "cqr/rng.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

using namespace cqr;

TEST_CASE("number formatting round trips") {
	Rng r(1);
	for (int i = 0; i < 1000; ++i) {
		double v = r.normal(0, 1e3) * std::pow(10.0, static_cast<double>(r.below(20)) - 10);
		CHECK(io::parse_number(io::format_number(v)) == v);
	}
	CHECK(io::format_number(std::numeric_limits<double>::infinity()) == "inf");
	CHECK(std::isinf(io::parse_number("-inf")));
	CHECK_THROWS_AS(io::parse_number("1.5x"), IoError);
}

TEST_CASE("csv fields") {
	CHECK(io::csv_field("plain") == "plain");
	CHECK(io::csv_field("a,b") == "\"a,b\"");
	CHECK(io::split_csv_line("1,\"a,b\",\"q\"\"x\"") == std::vector<std::string>{"1", "a,b", "q\"x"});
}

TEST_CASE("dataset csv round trip") {
	SyntheticSpec spec;
	spec.n = 200;
	spec.noise = Noise::heteroskedastic;
	auto d = gen_synthetic(spec);
	std::istringstream in(io::dataset_csv(d));
	auto back = io::read_dataset_csv(in);
	CHECK(back.X == d.X);
	CHECK(back.y == d.y);
	CHECK(back.tau == d.tau);
	CHECK(back.censored == d.censored);
	CHECK(*back.y_star == *d.y_star);
	CHECK(back.side == Side::left);

	std::istringstream tin(io::truth_csv(d));
	io::read_truth_csv(tin, back);
	CHECK(back.true_quantiles == d.true_quantiles);
	CHECK(io::dataset_csv(back) == io::dataset_csv(d));

	auto short_d = select_rows(back, std::vector<std::size_t>{0, 1});
	std::istringstream tin2(io::truth_csv(d));
	CHECK_THROWS_AS(io::read_truth_csv(tin2, short_d), IoError);
}

TEST_CASE("right-censored series keeps its side and infinite thresholds") {
	std::vector<double> s{10, 12, 9, 14, 11, 13};
	auto c = censor_partial(s, 0.5, 0.2, 0.4, 3);
	std::istringstream in(io::dataset_csv(c));
	auto back = io::read_dataset_csv(in);
	CHECK(back.side == Side::right);
	CHECK(back.n_features == 0);
	CHECK(back.y == c.y);
	for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::isinf(back.tau[i]) == std::isinf(c.tau[i]));
}

TEST_CASE("malformed dataset files") {
	std::istringstream bad_header("a,b\n1,2\n");
	CHECK_THROWS_AS(io::read_dataset_csv(bad_header), IoError);
	std::istringstream ragged("x1,y,tau,censored\n1,2,0,0\n1,2\n");
	CHECK_THROWS_AS(io::read_dataset_csv(ragged), IoError);
	std::istringstream violates("x1,y,tau,censored\n1,-1,0,0\n1,2,0,0\n");
	CHECK_THROWS(io::read_dataset_csv(violates));
	CHECK_THROWS_AS(io::read_dataset_csv(std::filesystem::path("/nonexistent/file.csv")), IoError);
}

TEST_CASE("daily series") {
	std::istringstream ok("date,count\n2020-02-28,5\n2020-02-29,7\n2020-03-01,3\n");
	auto s = io::read_daily_series_csv(ok);
	CHECK(s.counts == std::vector<double>{5, 7, 3});
	std::istringstream gap("date,count\n2020-01-01,5\n2020-01-03,7\n");
	CHECK_THROWS_AS(io::read_daily_series_csv(gap), IoError);
	std::istringstream dup("date,count\n2020-01-01,5\n2020-01-01,7\n");
	CHECK_THROWS_AS(io::read_daily_series_csv(dup), IoError);
	CHECK(io::parse_iso_date("1970-01-02") == 1);
	CHECK(io::parse_iso_date("2000-03-01") - io::parse_iso_date("2000-02-28") == 2);
	CHECK_THROWS_AS(io::parse_iso_date("2021-02-29"), IoError);
}

TEST_CASE("atomic write") {
	auto dir = std::filesystem::temp_directory_path() / "cqr_io_test";
	std::filesystem::create_directories(dir);
	auto p = dir / "a.txt";
	io::atomic_write(p, "one");
	io::atomic_write(p, "two");
	CHECK(io::read_file(p) == "two");
	std::filesystem::remove_all(dir);
}
