#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cqr/datagen.hpp"
#include "cqr/error.hpp"
#include "cqr/metrics.hpp"
#include "cqr/tobit.hpp"
#include "oracle.hpp"

#include <cmath>

using namespace cqr;
using doctest::Approx;

namespace {
CensoredDataset gaussian_linear(std::size_t n, std::uint64_t seed) {
	Rng r(seed);
	CensoredDataset d;
	d.n_features = 3;
	for (std::size_t i = 0; i < n; ++i) {
		double x1 = r.normal(), x2 = r.normal();
		d.X.insert(d.X.end(), {1.0, x1, x2});
		d.y.push_back(0.5 + 2 * x1 - x2 + r.normal());
		d.tau.push_back(-1e6);
		d.censored.push_back(0);
	}
	return d;
}
} // namespace

TEST_CASE("no censoring recovers least squares") {
	auto tr = gaussian_linear(400, 1);
	TobitConfig cfg;
	cfg.train.learning_rate = 0.05;
	cfg.train.patience = 100;
	// validating on the training rows lets the fit run to the optimum
	auto f = tobit_fit(tr, tr, cfg);
	auto ols = oracle::ols(tr.X, tr.y, 3);
	auto m = tobit_model(f);
	for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(m.beta[j] - ols[j]) < 1e-2);
}

TEST_CASE("fully censored data pushes the mean down") {
	CensoredDataset d;
	d.n_features = 2;
	Rng r(4);
	for (int i = 0; i < 100; ++i) {
		d.X.insert(d.X.end(), {1.0, r.normal()});
		d.y.push_back(0.0);
		d.tau.push_back(0.0);
		d.censored.push_back(1);
	}
	TobitConfig cfg;
	cfg.train.max_epochs = 300;
	auto f = tobit_fit(d, d, cfg);
	for (std::size_t e = 1; e < f.train_trace.size(); ++e) CHECK(f.train_trace[e] <= f.train_trace[e - 1] + 1e-15);
	CHECK(tobit_model(f).beta[0] < 1.0);
}

TEST_CASE("standard gaussian benchmark coverage") {
	double icp = 0.0;
	for (std::uint64_t s = 0; s < 10; ++s) {
		SyntheticSpec spec;
		spec.seed = s;
		auto sp = split(gen_synthetic(spec), SplitScheme::random(0.62, 0.15, 0.23, s + 100));
		auto f = tobit_fit(sp.train, sp.val, TobitConfig{});
		auto m = tobit_model(f);
		auto lo = tobit_quantiles(m, sp.test, 0.05), hi = tobit_quantiles(m, sp.test, 0.95);
		icp += interval_metrics(lo, hi, *sp.test.y_star).icp / 10;
	}
	CHECK(std::abs(icp - 0.909) <= 0.03);
}

TEST_CASE("tobit quantiles") {
	TobitModel m{{1.0, 2.0, -1.0}, 1.0, Side::left};
	std::vector<double> x{1, 0.5, 3};
	CHECK(tobit_quantiles(m, x, 0.5) == Approx(m.mean(x)));
	CHECK(tobit_quantiles(m, x, 0.95) - tobit_quantiles(m, x, 0.05) == Approx(2 * oracle::phi_inv(0.95)));
	CHECK(tobit_quantiles(m, x, 0.95) - tobit_quantiles(m, x, 0.05) == Approx(3.28971).epsilon(1e-5));
	TobitModel m2 = m;
	m2.sigma = 2.0;
	CHECK(tobit_quantiles(m2, x, 0.95) - tobit_quantiles(m2, x, 0.05) ==
	      Approx(2 * (tobit_quantiles(m, x, 0.95) - tobit_quantiles(m, x, 0.05))));
	CHECK_THROWS_AS(tobit_quantiles(m, x, 1.0), DomainError);
}

TEST_CASE("sigma estimation") {
	auto tr = gaussian_linear(800, 3), va = gaussian_linear(200, 4);
	TobitConfig cfg;
	cfg.estimate_sigma = true;
	cfg.train.learning_rate = 0.05;
	cfg.train.patience = 100;
	auto f = tobit_fit(tr, va, cfg);
	CHECK(f.loss.sigma == Approx(1.0).epsilon(0.1));
	TobitConfig bad;
	bad.sigma = 0.0;
	CHECK_THROWS_AS(tobit_fit(tr, va, bad), DomainError);
}
