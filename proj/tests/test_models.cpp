#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cqr/datagen.hpp"
#include "cqr/error.hpp"
#include "cqr/models.hpp"
#include "cqr/training.hpp"
#include "gradcheck.hpp"

#include <cmath>
#include <numeric>

using namespace cqr;
using doctest::Approx;

TEST_CASE("forward values") {
	Net lin = make_linear(3);
	init_weights(lin, InitScheme::ones());
	std::vector<double> x{1, 1, 0.5};
	CHECK(lin->predict(x) == Approx(2.5));

	Net elu = make_linear(3, Activation::elu);
	std::vector<double> beta{-1, 0, 0};
	std::copy(beta.begin(), beta.end(), elu->parameters().begin());
	CHECK(elu->predict(x) == Approx(std::exp(-1.0) - 1.0));
	CHECK(elu->predict(x) == Approx(-0.6321).epsilon(1e-4));

	Net lstm = make_lstm(7, 4);
	for (auto& w : lstm->parameters()) w = 0.0;
	std::vector<double> lags{1, 3, -2, 5, 0.5, 7, 9, 11};
	CHECK(lstm->predict(lags) == 0.0);

	std::vector<double> wrong{1, 2};
	CHECK_THROWS_AS(lin->predict(wrong), ShapeError);
}

TEST_CASE("backward values") {
	Net lin = make_linear(3);
	init_weights(lin, InitScheme::ones());
	std::vector<double> x{1, -2, 0.25};
	ForwardCache cache;
	lin->forward(x, cache, nullptr);
	std::vector<double> g(3, 0.0);
	lin->backward(cache, 1.0, g);
	CHECK(g == x);

	CHECK(activate_derivative(Activation::elu, -1.0) == Approx(std::exp(-1.0)));
	CHECK(activate_derivative(Activation::elu, 0.0) == 1.0);

	ForwardCache empty;
	CHECK_THROWS_AS(lin->backward(empty, 1.0, g), UsageError);
}

TEST_CASE("lstm hidden 2 gradient matches finite differences") {
	Net lstm = make_lstm(7, 2);
	init_weights(lstm, InitScheme::standard_normal(21));
	std::vector<double> x{1, 0.3, -0.2, 0.9, 1.4, -0.7, 0.1, 0.5};
	ForwardCache cache;
	lstm->forward(x, cache, nullptr);
	std::vector<double> g(lstm->parameter_count(), 0.0);
	lstm->backward(cache, 1.0, g);
	auto f = [&](const std::vector<double>& w) {
		Net c = lstm;
		std::copy(w.begin(), w.end(), c->parameters().begin());
		return c->predict(x);
	};
	auto p = lstm->parameters();
	CHECK(oracle::rel_err(g, oracle::fd_grad(f, {p.begin(), p.end()})) < 1e-5);
}

TEST_CASE("init schemes") {
	Net lin = make_linear(3);
	init_weights(lin, InitScheme::ones());
	for (double w : lin->parameters()) CHECK(w == 1.0);

	Net a = make_linear(3), b = make_linear(3);
	init_weights(a, InitScheme::standard_normal(7));
	init_weights(b, InitScheme::standard_normal(7));
	CHECK(std::equal(a->parameters().begin(), a->parameters().end(), b->parameters().begin()));

	Net big = make_linear(100000);
	init_weights(big, InitScheme::standard_normal(7));
	auto w = big->parameters();
	double m = std::accumulate(w.begin(), w.end(), 0.0) / w.size();
	double ss = 0.0;
	for (double v : w) ss += (v - m) * (v - m);
	CHECK(std::abs(m) < 0.02);
	CHECK(std::abs(std::sqrt(ss / (w.size() - 1)) - 1.0) < 0.02);
}

TEST_CASE("dropout is inactive at evaluation and masks inputs in training") {
	Net reg = make_linear(4, Activation::identity, Regularization{0.5, 0.0});
	init_weights(reg, InitScheme::ones());
	std::vector<double> x{1, 2, 3, 4};
	CHECK(reg->predict(x) == Approx(10.0));
	Rng r(1);
	bool differs = false;
	double total = 0.0;
	for (int i = 0; i < 4000; ++i) {
		ForwardCache c;
		double v = reg->forward(x, c, &r);
		differs |= std::abs(v - 10.0) > 1e-12;
		total += v;
	}
	CHECK(differs);
	// inverted dropout keeps the expectation
	CHECK(total / 4000 == Approx(10.0).epsilon(0.05));
}

TEST_CASE("weight decay skips biases") {
	Net reg = make_linear(3, Activation::identity, Regularization{0.0, 0.1});
	init_weights(reg, InitScheme::ones());
	CHECK(reg->weight_decay_penalty() == Approx(0.5 * 0.1 * 2.0));
	std::vector<double> g(3, 0.0);
	reg->add_weight_decay_grad(g);
	CHECK(g[0] == 0.0);
	CHECK(g[1] == Approx(0.1));
}

TEST_CASE("json round trip keeps predictions") {
	for (auto& fam : gradcheck::families()) {
		Rng r(9);
		Net n = fam.make(r, 8);
		init_weights(n, InitScheme::standard_normal(3));
		Net back = net_from_json(to_json(*n));
		std::vector<double> x{1, 0.2, -0.4, 1.1, 0.7, -1.3, 0.05, 2.0};
		CHECK(back->predict(x) == n->predict(x));
		CHECK(back->family() == n->family());
	}
}

TEST_CASE("gradient suite: 100 seeded configurations per family and loss") {
	std::uint64_t seed = 1000;
	for (const auto& fam : gradcheck::families()) {
		for (LossKind kind : {LossKind::tilted, LossKind::censored_nll, LossKind::tobit}) {
			auto o = gradcheck::check(fam, kind, 100, 1e-5, ++seed);
			INFO(fam.name, " ", to_string(kind), " worst ", o.worst);
			CHECK(o.configs == 100);
			CHECK(o.failures == 0);
		}
		auto o = gradcheck::check_output(fam, 100, 1e-5, ++seed);
		INFO(fam.name, " output worst ", o.worst);
		CHECK(o.failures == 0);
	}
}

TEST_CASE("mirror wrapper is the negated inner prediction on negated inputs") {
	Net inner = make_linear(3);
	init_weights(inner, InitScheme::standard_normal(4));
	Net w = make_mirror(inner, 0.95);
	std::vector<double> x{1, 0.5, -2}, neg{1, -0.5, 2};
	CHECK(w->predict(x) == -inner->predict(neg));
	const auto& mw = dynamic_cast<const MirrorWrapper&>(*w);
	CHECK(mw.inner_theta() == Approx(0.05));
}

namespace {
CensoredDataset negate_left(const CensoredDataset& d) { return mirror(d); }
} // namespace

TEST_CASE("mirror fit on negated benchmark matches the direct fit") {
	SyntheticSpec spec;
	spec.n = 400;
	spec.seed = 12;
	auto data = gen_synthetic(spec);
	auto sp = split(data, SplitScheme::random(0.62, 0.15, 0.23, 3));
	TrainConfig cfg;
	cfg.max_epochs = 300;
	for (double th : {0.05, 0.5, 0.95}) {
		Net init = make_linear(3);
		init_weights(init, InitScheme::standard_normal(8));
		LossSpec loss{LossKind::censored_nll, th};
		auto direct = fit(init, loss, sp.train, sp.val, cfg);
		auto right_train = negate_left(sp.train), right_val = negate_left(sp.val), right_test = negate_left(sp.test);
		// the direct fit models theta on the left problem, so the wrapper at 1 - theta on the
		// mirrored problem must negate it exactly
		MirrorWrapper wrapper(init, 1.0 - th);
		auto mf = mirror_fit_predict(wrapper, LossKind::censored_nll, right_train, right_val, right_test, cfg);
		auto want = direct.net->predict_all(sp.test);
		double worst = 0.0;
		for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(mf.predictions[i] + want[i]));
		CHECK(worst < 1e-6);
	}
	CHECK_THROWS_AS(mirror_fit_predict(MirrorWrapper(make_linear(3), 0.5), LossKind::censored_nll, sp.train, sp.val,
	                                   sp.test, cfg),
	                UsageError);
}

TEST_CASE("mirror on a symmetric sample without censoring") {
	Rng r(2);
	CensoredDataset d;
	d.n_features = 2;
	d.side = Side::right;
	for (int i = 0; i < 300; ++i) {
		double x = r.normal(), e = r.normal();
		for (double s : {1.0, -1.0}) {
			d.X.insert(d.X.end(), {1.0, s * x});
			d.y.push_back(s * (x + e));
			d.tau.push_back(1e9);
			d.censored.push_back(0);
		}
	}
	auto sp = split(d, SplitScheme::random(0.6, 0.3, 0.1, 5));
	TrainConfig cfg;
	cfg.max_epochs = 400;
	Net init = make_linear(2);
	init_weights(init, InitScheme::ones());
	MirrorWrapper w(init, 0.95);
	auto mf = mirror_fit_predict(w, LossKind::censored_nll, sp.train, sp.val, sp.train, cfg);
	// independent fit of theta 0.95 with the tilted loss on the mirrored rows
	auto mt = mirror(sp.train), mv = mirror(sp.val);
	auto inner = fit(init, LossSpec{LossKind::tilted, 0.05}, mt, mv, cfg);
	auto back = inner.net->predict_all(mt);
	for (std::size_t i = 0; i < back.size(); ++i) CHECK(mf.predictions[i] == Approx(-back[i]).epsilon(1e-9));
}
