#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cqr/datagen.hpp"
#include "cqr/error.hpp"
#include "cqr/metrics.hpp"
#include "cqr/training.hpp"

#include <cmath>

using namespace cqr;
using doctest::Approx;

namespace {
CensoredDataset exact_linear(std::size_t n, std::uint64_t seed, const std::vector<double>& beta) {
	Rng r(seed);
	CensoredDataset d;
	d.n_features = beta.size();
	for (std::size_t i = 0; i < n; ++i) {
		double y = beta[0];
		d.X.push_back(1.0);
		for (std::size_t j = 1; j < beta.size(); ++j) {
			double x = r.normal();
			d.X.push_back(x);
			y += beta[j] * x;
		}
		d.y.push_back(y);
		d.tau.push_back(-1e6);
		d.censored.push_back(0);
	}
	return d;
}
} // namespace

TEST_CASE("adam first step and clipping") {
	TrainConfig cfg;
	Adam adam(2, cfg);
	std::vector<double> p{1.0, -1.0}, g{0.5, -2.0};
	adam.step(p, g, 0.1);
	// first bias-corrected step moves each coordinate by lr * sign(g)
	CHECK(p[0] == Approx(0.9).epsilon(1e-6));
	CHECK(p[1] == Approx(-0.9).epsilon(1e-6));
	CHECK(adam.steps() == 1);

	std::vector<double> big{3.0, 4.0};
	CHECK(clip_global_norm(big, 1.0) == Approx(5.0));
	CHECK(big[0] == Approx(0.6));
	CHECK(big[1] == Approx(0.8));
	std::vector<double> small{0.3, 0.4};
	clip_global_norm(small, 1.0);
	CHECK(small[0] == 0.3);
}

TEST_CASE("config validation") {
	TrainConfig cfg;
	cfg.learning_rate = -1;
	CHECK_THROWS_AS(cfg.validate(), ConfigError);
	TrainConfig g;
	g.lr_grid.clear();
	CHECK_THROWS_AS(fit_with_lr_grid([] { return make_linear(2); }, {}, exact_linear(10, 1, {1, 1}),
	                                 exact_linear(10, 2, {1, 1}), g),
	                ConfigError);
}

TEST_CASE("tilted median fit recovers noiseless coefficients") {
	std::vector<double> beta{0.5, -1.0, 2.0};
	auto tr = exact_linear(300, 1, beta), va = exact_linear(100, 2, beta);
	Net net = make_linear(3);
	init_weights(net, InitScheme::standard_normal(3));
	TrainConfig cfg;
	cfg.learning_rate = 0.05;
	cfg.patience = 50;
	auto f = fit(net, LossSpec{LossKind::tilted, 0.5}, tr, va, cfg);
	for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(f.net->parameters()[j] - beta[j]) < 1e-2);
}

TEST_CASE("censored linear median on the standard gaussian benchmark") {
	SyntheticSpec spec;
	spec.seed = 3;
	auto data = gen_synthetic(spec);
	auto sp = split(data, SplitScheme::random(0.62, 0.15, 0.23, 4));
	Net net = make_linear(3);
	init_weights(net, InitScheme::ones());
	TrainConfig cfg;
	auto f = fit(net, LossSpec{LossKind::censored_nll, 0.5}, sp.train, sp.val, cfg);
	auto pred = f.net->predict_all(sp.test);
	for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = std::max(0.0, pred[i]);
	auto m = point_metrics(pred, *find_true_quantiles(sp.test, 0.5));
	CHECK(*m.r2 >= 0.99);

	auto again = fit(net, LossSpec{LossKind::censored_nll, 0.5}, sp.train, sp.val, cfg);
	CHECK(again.train_trace == f.train_trace);
	CHECK(again.val_trace == f.val_trace);
}

TEST_CASE("dropout fits repeat bit for bit with the same seed") {
	SyntheticSpec spec;
	auto sp = split(gen_synthetic(spec), SplitScheme::random(0.62, 0.15, 0.23, 4));
	Net net = make_linear(3, Activation::identity, Regularization::standard());
	init_weights(net, InitScheme::standard_normal(1));
	TrainConfig cfg;
	cfg.seed = 17;
	cfg.max_epochs = 200;
	auto a = fit(net, LossSpec{LossKind::censored_nll, 0.9}, sp.train, sp.val, cfg);
	auto b = fit(net, LossSpec{LossKind::censored_nll, 0.9}, sp.train, sp.val, cfg);
	CHECK(a.train_trace == b.train_trace);
	cfg.seed = 18;
	auto c = fit(net, LossSpec{LossKind::censored_nll, 0.9}, sp.train, sp.val, cfg);
	CHECK(c.train_trace != a.train_trace);
}

TEST_CASE("early stopping bookkeeping") {
	SyntheticSpec spec;
	auto sp = split(gen_synthetic(spec), SplitScheme::random(0.62, 0.15, 0.23, 4));
	Net net = make_linear(3);
	init_weights(net, InitScheme::standard_normal(5));
	TrainConfig cfg;
	cfg.patience = 5;
	auto f = fit(net, LossSpec{LossKind::tilted, 0.3}, sp.train, sp.val, cfg);
	CHECK(f.val_trace.size() == f.stopping_epoch + 1);
	CHECK(f.best_epoch <= f.stopping_epoch);
	for (double v : f.val_trace) CHECK(v >= f.best_val_loss());
	if (!f.hit_max_epochs) CHECK(f.stopping_epoch - f.best_epoch == cfg.patience);
	CHECK(mean_loss(*f.net, sp.val, f.loss) == Approx(f.best_val_loss()));

	cfg.max_epochs = 3;
	auto capped = fit(net, LossSpec{LossKind::tilted, 0.3}, sp.train, sp.val, cfg);
	CHECK(capped.hit_max_epochs);
	CHECK(capped.stopping_epoch == 3);
}

TEST_CASE("quantile losses reject right-censored data") {
	auto d = exact_linear(20, 1, {1, 1});
	d.side = Side::right;
	for (auto& t : d.tau) t = 1e6;
	CHECK_THROWS_AS(fit(make_linear(2), LossSpec{}, d, d, TrainConfig{}), UsageError);
}

TEST_CASE("learning-rate grid") {
	SyntheticSpec spec;
	spec.seed = 8;
	auto sp = split(gen_synthetic(spec), SplitScheme::random(0.62, 0.15, 0.23, 4));
	auto factory = [] {
		Net n = make_linear(3);
		init_weights(n, InitScheme::standard_normal(2));
		return n;
	};
	LossSpec loss{LossKind::censored_nll, 0.5};
	TrainConfig one;
	one.lr_grid = {0.01};
	TrainConfig single;
	single.learning_rate = 0.01;
	auto g = fit_with_lr_grid(factory, loss, sp.train, sp.val, one);
	auto s = fit(factory(), loss, sp.train, sp.val, single);
	CHECK(g.val_trace == s.val_trace);
	CHECK(g.learning_rate == 0.01);

	TrainConfig wild;
	wild.lr_grid = {0.01, 1e3};
	wild.clip_norm.reset();
	auto w = fit_with_lr_grid(factory, loss, sp.train, sp.val, wild);
	CHECK(std::isfinite(w.best_val_loss()));

	// exhaustive comparison: the selected fit has the lowest best validation loss
	TrainConfig full;
	auto sel = fit_with_lr_grid(factory, loss, sp.train, sp.val, full);
	for (double lr : full.lr_grid) {
		TrainConfig c;
		c.learning_rate = lr;
		auto r = fit(factory(), loss, sp.train, sp.val, c);
		CHECK(sel.best_val_loss() <= r.best_val_loss());
		if (lr == sel.learning_rate) CHECK(r.val_trace == sel.val_trace);
	}
}

TEST_CASE("threshold imputation") {
	std::vector<double> series(1000);
	Rng r(1);
	for (auto& v : series) v = 20 + r.uniform(0, 10);
	auto none = censor_partial(series, 0.0, 0.1, 0.2, 1);
	CHECK(latent_mean_ratio(none) == 1.0);
	auto imp = impute_thresholds(1.0, none);
	CHECK(imp.tau == imp.y);

	auto all = censor_partial(series, 1.0, 0.5, 0.5, 1);
	double ratio = latent_mean_ratio(all);
	CHECK(ratio == Approx(2.0));
	auto i2 = impute_thresholds(ratio, all);
	for (std::size_t i = 0; i < series.size(); ++i) CHECK(i2.tau[i] == Approx(i2.y[i]));

	auto part = censor_partial(series, 0.4, 0.2, 0.5, 3);
	double pr = latent_mean_ratio(part);
	auto ip = impute_thresholds(pr, part);
	for (std::size_t i = 0; i < series.size(); ++i)
		CHECK(ip.tau[i] == Approx(part.censored[i] ? part.y[i] : part.y[i] * pr));
	// scale invariance
	std::vector<double> scaled(series);
	for (auto& v : scaled) v *= 7.0;
	auto ps = censor_partial(scaled, 0.4, 0.2, 0.5, 3);
	CHECK(latent_mean_ratio(ps) == Approx(pr));

	auto zero = none;
	for (auto& v : zero.y) v = 0.0;
	CHECK_THROWS_AS(latent_mean_ratio(zero), DegenerateDataError);
}

TEST_CASE("initialization selection") {
	std::vector<IntervalCandidate> one{{0.5, 1.0}};
	CHECK(select_initialization(one, 1.0).index == 0);
	std::vector<IntervalCandidate> two{{0.97, 1.0}, {0.88, 1.0}};
	CHECK(select_initialization(two, 1.0).index == 1);
	std::vector<IntervalCandidate> wide{{0.9, 3.0}, {0.7, 1.0}};
	auto s = select_initialization(wide, 1.0);
	CHECK(s.index == 1);
	CHECK(!s.fallback);
	std::vector<IntervalCandidate> none{{0.6, 5.0}, {0.85, 4.0}};
	auto f = select_initialization(none, 1.0);
	CHECK(f.fallback);
	CHECK(f.index == 1);
}

TEST_CASE("fit json round trip") {
	auto tr = exact_linear(50, 1, {1, 2}), va = exact_linear(20, 2, {1, 2});
	TrainConfig cfg;
	cfg.max_epochs = 20;
	auto f = fit(make_linear(2), LossSpec{LossKind::tilted, 0.7}, tr, va, cfg);
	auto back = fit_from_json(to_json(f));
	CHECK(back.val_trace == f.val_trace);
	CHECK(back.best_epoch == f.best_epoch);
	CHECK(back.loss.theta == 0.7);
	CHECK(back.net->predict(tr.row(0)) == f.net->predict(tr.row(0)));
	auto csv = trace_csv(f);
	CHECK(csv.rfind("epoch,train_loss,val_loss\n", 0) == 0);
}
