#include "cqr/tobit.hpp"

#include "cqr/error.hpp"
#include "cqr/losses.hpp"
#include "cqr/normal.hpp"

#include <chrono>
#include <cmath>
#include <memory>

namespace cqr {

namespace {

// Objective over [beta..., log sigma].
Objective joint_objective(const CensoredDataset& data, Side side) {
	auto pts = std::make_shared<std::vector<CensoredPoint>>(data.points());
	const CensoredDataset* d = &data;
	Objective obj;
	obj.evaluate = [pts, d, side](std::span<const double> params, std::span<double> grad, bool) {
		const std::size_t p = d->n_features;
		const double sigma = std::exp(params[p]);
		std::vector<double> means(d->size());
		for (std::size_t i = 0; i < d->size(); ++i) {
			const auto x = d->row(i);
			double m = 0.0;
			for (std::size_t j = 0; j < p; ++j) m += params[j] * x[j];
			means[i] = m;
		}
		const double inv_n = 1.0 / static_cast<double>(d->size());
		const double value = tobit_nll(*pts, means, sigma, side) * inv_n;
		if (!grad.empty()) {
			const auto g = tobit_nll_grad(*pts, means, sigma, side);
			std::fill(grad.begin(), grad.end(), 0.0);
			for (std::size_t i = 0; i < d->size(); ++i) {
				const auto x = d->row(i);
				for (std::size_t j = 0; j < p; ++j) grad[j] += g.d_means[i] * x[j] * inv_n;
			}
			grad[p] = g.d_log_sigma * inv_n;
		}
		return value;
	};
	return obj;
}

} // namespace

double TobitModel::mean(std::span<const double> x) const {
	if (x.size() != beta.size()) throw ShapeError("tobit covariate length mismatch");
	double m = 0.0;
	for (std::size_t j = 0; j < beta.size(); ++j) m += beta[j] * x[j];
	return m;
}

FitResult tobit_fit(const CensoredDataset& train, const CensoredDataset& val, const TobitConfig& cfg) {
	if (!(cfg.sigma > 0.0)) throw DomainError("tobit sigma must be positive");
	if (train.n_features == 0) throw UsageError("tobit needs covariates");
	LossSpec loss;
	loss.kind = LossKind::tobit;
	loss.sigma = cfg.sigma;
	loss.tobit_side = cfg.side;
	loss.theta = 0.5;

	Net net = make_linear(train.n_features, Activation::identity);
	net->init(cfg.init);
	if (!cfg.estimate_sigma) {
		return fit(net, loss, train, val, cfg.train);
	}

	if (train.side != cfg.side || val.side != cfg.side) throw UsageError("dataset orientation does not match tobit side");
	const auto start = std::chrono::steady_clock::now();
	const auto beta0 = net->parameters();
	std::vector<double> initial(beta0.begin(), beta0.end());
	initial.push_back(std::log(cfg.sigma));
	auto opt = optimize(initial, joint_objective(train, cfg.side), joint_objective(val, cfg.side), cfg.train,
	                    cfg.train.learning_rate);

	FitResult result;
	std::copy(opt.params.begin(), opt.params.end() - 1, net->parameters().begin());
	result.net = std::move(net);
	loss.sigma = std::exp(opt.params.back());
	result.loss = loss;
	result.train_trace = std::move(opt.train_trace);
	result.val_trace = std::move(opt.val_trace);
	result.best_epoch = opt.best_epoch;
	result.stopping_epoch = opt.stopping_epoch;
	result.hit_max_epochs = opt.hit_max_epochs;
	result.learning_rate = cfg.train.learning_rate;
	result.seed = cfg.train.seed;
	result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
	return result;
}

TobitModel tobit_model(const FitResult& fit) {
	if (fit.loss.kind != LossKind::tobit) throw UsageError("fit result is not a tobit fit");
	TobitModel model;
	const auto params = fit.net->parameters();
	model.beta.assign(params.begin(), params.end());
	model.sigma = fit.loss.sigma;
	model.side = fit.loss.tobit_side;
	return model;
}

double tobit_quantiles(const TobitModel& model, std::span<const double> x, double theta) {
	QuantileLevel level(theta);
	return model.mean(x) + model.sigma * normal::quantile(level.value());
}

std::vector<double> tobit_quantiles(const TobitModel& model, const CensoredDataset& data, double theta) {
	QuantileLevel level(theta);
	const double shift = model.sigma * normal::quantile(level.value());
	std::vector<double> out(data.size());
	for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.mean(data.row(i)) + shift;
	return out;
}

} // namespace cqr
