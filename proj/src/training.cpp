#include "cqr/training.hpp"

#include "cqr/error.hpp"
#include "cqr/losses.hpp"
#include "cqr/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <sstream>

namespace cqr {

namespace {

bool is_quantile_loss(LossKind kind) {
	return kind == LossKind::tilted || kind == LossKind::censored_nll;
}

void check_compatible(const LossSpec& loss, const CensoredDataset& data, const char* which) {
	if (data.empty()) throw UsageError(std::string(which) + " set is empty");
	if (is_quantile_loss(loss.kind) && data.side != Side::left) {
		throw UsageError(std::string(which) +
		                 " set is right-censored; quantile losses need the mirrored (left-censored) form");
	}
	if (loss.kind == LossKind::tobit && data.side != loss.tobit_side) {
		throw UsageError(std::string(which) + " set orientation does not match the tobit side");
	}
	for (std::size_t i = 0; i < data.size(); ++i) {
		if (std::isnan(data.tau[i]) && loss.kind == LossKind::censored_nll) {
			throw UsageError(std::string(which) + " set has rows without a threshold");
		}
	}
}

std::string format_g(double v) {
	char buf[32];
	std::snprintf(buf, sizeof buf, "%.17g", v);
	return buf;
}

} // namespace

std::string_view to_string(LossKind kind) {
	switch (kind) {
	case LossKind::tilted:
		return "tilted";
	case LossKind::censored_nll:
		return "censored_nll";
	case LossKind::tobit:
		return "tobit";
	}
	return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
	if (name == "tilted" || name == "tl") return LossKind::tilted;
	if (name == "censored_nll" || name == "censored" || name == "c") return LossKind::censored_nll;
	if (name == "tobit") return LossKind::tobit;
	throw ConfigError("unknown loss '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
	if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
	for (double lr : lr_grid) {
		if (!(lr > 0.0)) throw ConfigError("learning-rate grid values must be positive");
	}
	if (patience < 1) throw ConfigError("patience must be >= 1");
	if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
	if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
		throw ConfigError("adam betas must lie in [0,1)");
	}
	if (!(adam_eps > 0.0)) throw ConfigError("adam epsilon must be positive");
}

// ------------------------------------------------------------------- Adam

Adam::Adam(std::size_t n_params, const TrainConfig& cfg)
    : beta1_(cfg.adam_beta1), beta2_(cfg.adam_beta2), eps_(cfg.adam_eps), m_(n_params, 0.0), v_(n_params, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double learning_rate) {
	if (params.size() != m_.size() || grad.size() != m_.size()) throw ShapeError("adam state size mismatch");
	++t_;
	const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
	const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
	for (std::size_t k = 0; k < params.size(); ++k) {
		m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
		v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
		const double m_hat = m_[k] / bc1;
		const double v_hat = v_[k] / bc2;
		params[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + eps_);
	}
}

double clip_global_norm(std::span<double> grad, double max_norm) {
	double sq = 0.0;
	for (double g : grad) sq += g * g;
	const double norm = std::sqrt(sq);
	if (norm > max_norm) {
		const double scale = max_norm / norm;
		for (double& g : grad) g *= scale;
	}
	return norm;
}

OptimizeResult optimize(std::vector<double> initial, const Objective& train, const Objective& val,
                        const TrainConfig& cfg, double learning_rate) {
	cfg.validate();
	if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
	OptimizeResult out;
	std::vector<double> params = std::move(initial);
	std::vector<double> grad(params.size());
	Adam adam(params.size(), cfg);
	double best = std::numeric_limits<double>::infinity();
	out.params = params;

	for (std::size_t epoch = 0;; ++epoch) {
		const double train_loss = train.evaluate(params, grad, true);
		const double val_loss = val.evaluate(params, {}, false);
		out.train_trace.push_back(train_loss);
		out.val_trace.push_back(val_loss);
		const bool grad_finite = std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); });
		if (!std::isfinite(train_loss) || !std::isfinite(val_loss) || !grad_finite) {
			std::ostringstream msg;
			msg << "non-finite loss at epoch " << epoch << " (lr=" << learning_rate << "); last losses:";
			const std::size_t from = out.train_trace.size() > 5 ? out.train_trace.size() - 5 : 0;
			for (std::size_t e = from; e < out.train_trace.size(); ++e) {
				msg << " [" << e << ": train=" << out.train_trace[e] << " val=" << out.val_trace[e] << "]";
			}
			throw DivergenceError(msg.str());
		}
		if (val_loss < best) {
			best = val_loss;
			out.best_epoch = epoch;
			out.params = params;
		} else if (epoch - out.best_epoch >= cfg.patience) {
			out.stopping_epoch = epoch;
			break;
		}
		if (epoch >= cfg.max_epochs) {
			out.stopping_epoch = epoch;
			out.hit_max_epochs = true;
			break;
		}
		if (cfg.clip_norm) clip_global_norm(grad, *cfg.clip_norm);
		adam.step(params, grad, learning_rate);
	}
	return out;
}

// ------------------------------------------------------------ objectives

double mean_loss(const QuantileNet& net, const CensoredDataset& data, const LossSpec& loss) {
	const auto preds = net.predict_all(data);
	const auto pts = data.points();
	double total = 0.0;
	switch (loss.kind) {
	case LossKind::tilted:
		total = tilted_sum(pts, preds, loss.theta);
		break;
	case LossKind::censored_nll:
		total = censored_qr_nll(pts, preds, loss.theta);
		break;
	case LossKind::tobit:
		total = tobit_nll(pts, preds, loss.sigma, loss.tobit_side);
		break;
	}
	return total / static_cast<double>(data.size()) + net.weight_decay_penalty();
}

Objective make_objective(const Net& net, const CensoredDataset& data, const LossSpec& loss, Rng* dropout_rng) {
	struct State {
		Net net;
		const CensoredDataset* data;
		std::vector<CensoredPoint> points;
		std::vector<ForwardCache> caches;
		std::vector<double> preds;
		LossSpec loss;
		Rng* rng;
	};
	auto state = std::make_shared<State>(State{net, &data, data.points(), std::vector<ForwardCache>(data.size()),
	                                           std::vector<double>(data.size()), loss, dropout_rng});
	Objective obj;
	obj.evaluate = [state](std::span<const double> params, std::span<double> grad, bool train_mode) {
		auto& s = *state;
		auto dst = s.net->parameters();
		if (params.size() != dst.size()) throw ShapeError("objective parameter count mismatch");
		std::copy(params.begin(), params.end(), dst.begin());
		Rng* rng = train_mode ? s.rng : nullptr;
		const std::size_t n = s.data->size();
		for (std::size_t i = 0; i < n; ++i) s.preds[i] = s.net->forward(s.data->row(i), s.caches[i], rng);

		double total = 0.0;
		std::vector<double> d_pred;
		switch (s.loss.kind) {
		case LossKind::tilted:
			total = tilted_sum(s.points, s.preds, s.loss.theta);
			if (!grad.empty()) d_pred = tilted_sum_grad(s.points, s.preds, s.loss.theta);
			break;
		case LossKind::censored_nll:
			total = censored_qr_nll(s.points, s.preds, s.loss.theta);
			if (!grad.empty()) d_pred = censored_qr_nll_grad(s.points, s.preds, s.loss.theta);
			break;
		case LossKind::tobit:
			total = tobit_nll(s.points, s.preds, s.loss.sigma, s.loss.tobit_side);
			if (!grad.empty()) d_pred = tobit_nll_grad(s.points, s.preds, s.loss.sigma, s.loss.tobit_side).d_means;
			break;
		}
		const double inv_n = 1.0 / static_cast<double>(n);
		if (!grad.empty()) {
			std::fill(grad.begin(), grad.end(), 0.0);
			for (std::size_t i = 0; i < n; ++i) {
				if (d_pred[i] != 0.0) s.net->backward(s.caches[i], d_pred[i] * inv_n, grad);
			}
			s.net->add_weight_decay_grad(grad);
		}
		return total * inv_n + s.net->weight_decay_penalty();
	};
	return obj;
}

FitResult fit(const Net& net, const LossSpec& loss, const CensoredDataset& train, const CensoredDataset& val,
              const TrainConfig& cfg) {
	if (!net) throw UsageError("fit needs a net");
	QuantileLevel level(loss.theta);
	(void)level;
	check_compatible(loss, train, "train");
	check_compatible(loss, val, "validation");
	const auto start = std::chrono::steady_clock::now();

	Rng dropout_rng(derive_seed(cfg.seed, "fit/dropout"));
	const auto train_obj = make_objective(net, train, loss, &dropout_rng);
	const auto val_obj = make_objective(net, val, loss, nullptr);
	const auto params = net->parameters();
	auto opt = optimize(std::vector<double>(params.begin(), params.end()), train_obj, val_obj, cfg, cfg.learning_rate);

	FitResult result;
	result.net = net;
	std::copy(opt.params.begin(), opt.params.end(), result.net->parameters().begin());
	result.loss = loss;
	result.train_trace = std::move(opt.train_trace);
	result.val_trace = std::move(opt.val_trace);
	result.best_epoch = opt.best_epoch;
	result.stopping_epoch = opt.stopping_epoch;
	result.hit_max_epochs = opt.hit_max_epochs;
	result.learning_rate = cfg.learning_rate;
	result.seed = cfg.seed;
	result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
	return result;
}

FitResult fit_with_lr_grid(const std::function<Net()>& net_factory, const LossSpec& loss,
                           const CensoredDataset& train, const CensoredDataset& val, const TrainConfig& cfg) {
	if (cfg.lr_grid.empty()) throw ConfigError("learning-rate grid is empty");
	const Net initial = net_factory();
	std::optional<FitResult> best;
	std::string diagnostics;
	for (double lr : cfg.lr_grid) {
		TrainConfig c = cfg;
		c.learning_rate = lr;
		try {
			FitResult r = fit(initial, loss, train, val, c);
			const bool better = !best || r.best_val_loss() < best->best_val_loss() ||
			                    (r.best_val_loss() == best->best_val_loss() && lr < best->learning_rate);
			if (better) best = std::move(r);
		} catch (const DivergenceError& e) {
			diagnostics += "\n  lr=" + format_g(lr) + ": " + e.what();
		}
	}
	if (!best) throw DivergenceError("every learning rate diverged:" + diagnostics);
	return std::move(*best);
}

// ------------------------------------------------------- real-data protocol

double latent_mean_ratio(const CensoredDataset& train) {
	if (!train.y_star) throw UsageError("threshold imputation needs latent values on the train split");
	const double observed = mean(train.y);
	const double latent = mean(*train.y_star);
	if (observed == 0.0 || latent == 0.0) throw DegenerateDataError("zero train mean; imputation ratio undefined");
	return latent / observed;
}

CensoredDataset impute_thresholds(double train_latent_mean_ratio, const CensoredDataset& data) {
	if (!(train_latent_mean_ratio > 0.0) || !std::isfinite(train_latent_mean_ratio)) {
		throw DegenerateDataError("imputation ratio must be positive and finite");
	}
	CensoredDataset out = data;
	for (std::size_t i = 0; i < out.size(); ++i) {
		out.tau[i] = out.censored[i] ? out.y[i] : out.y[i] * train_latent_mean_ratio;
	}
	return out;
}

InitSelection select_initialization(std::span<const IntervalCandidate> candidates, double train_observed_mean,
                                    double max_mil_ratio, double target_icp) {
	if (candidates.empty()) throw UsageError("initialization selection needs at least one candidate");
	if (!(train_observed_mean > 0.0)) throw DegenerateDataError("train mean must be positive for the MIL filter");
	auto pick = [&](bool filtered) -> std::optional<std::size_t> {
		std::optional<std::size_t> chosen;
		double best = std::numeric_limits<double>::infinity();
		for (std::size_t k = 0; k < candidates.size(); ++k) {
			if (filtered && candidates[k].val_mil / train_observed_mean > max_mil_ratio) continue;
			const double d = std::fabs(candidates[k].val_icp - target_icp);
			if (d < best) {
				best = d;
				chosen = k;
			}
		}
		return chosen;
	};
	if (auto k = pick(true)) return {*k, false};
	return {pick(false).value_or(0), true};
}

MirrorFit mirror_fit_predict(const MirrorWrapper& wrapper, LossKind kind, const CensoredDataset& train,
                             const CensoredDataset& val, const CensoredDataset& predict_on, const TrainConfig& cfg) {
	for (const auto* d : {&train, &val, &predict_on}) {
		if (d->side != Side::right) throw UsageError("mirror wrapper applies to right-censored data only");
	}
	LossSpec loss;
	loss.kind = kind;
	loss.theta = wrapper.inner_theta();
	MirrorFit out;
	out.inner_fit = fit(wrapper.inner(), loss, mirror(train), mirror(val), cfg);
	out.wrapped = make_mirror(out.inner_fit.net, wrapper.outer_theta());
	out.predictions = out.wrapped->predict_all(predict_on);
	return out;
}

// ---------------------------------------------------------- serialization

nlohmann::json to_json(const FitResult& fit) {
	return {{"net", to_json(*fit.net)},
	        {"loss",
	         {{"kind", std::string(to_string(fit.loss.kind))},
	          {"theta", fit.loss.theta},
	          {"sigma", fit.loss.sigma},
	          {"tobit_side", fit.loss.tobit_side == Side::left ? "left" : "right"}}},
	        {"train_trace", fit.train_trace},
	        {"val_trace", fit.val_trace},
	        {"best_epoch", fit.best_epoch},
	        {"stopping_epoch", fit.stopping_epoch},
	        {"hit_max_epochs", fit.hit_max_epochs},
	        {"learning_rate", fit.learning_rate},
	        {"seed", fit.seed},
	        {"wall_seconds", fit.wall_seconds}};
}

FitResult fit_from_json(const nlohmann::json& doc) {
	FitResult fit;
	fit.net = net_from_json(doc.at("net"));
	const auto& loss = doc.at("loss");
	fit.loss.kind = parse_loss_kind(loss.at("kind").get<std::string>());
	fit.loss.theta = loss.at("theta").get<double>();
	fit.loss.sigma = loss.value("sigma", 1.0);
	fit.loss.tobit_side = loss.value("tobit_side", std::string("left")) == "right" ? Side::right : Side::left;
	fit.train_trace = doc.at("train_trace").get<std::vector<double>>();
	fit.val_trace = doc.at("val_trace").get<std::vector<double>>();
	fit.best_epoch = doc.at("best_epoch").get<std::size_t>();
	fit.stopping_epoch = doc.at("stopping_epoch").get<std::size_t>();
	fit.hit_max_epochs = doc.value("hit_max_epochs", false);
	fit.learning_rate = doc.at("learning_rate").get<double>();
	fit.seed = doc.at("seed").get<std::uint64_t>();
	fit.wall_seconds = doc.value("wall_seconds", 0.0);
	return fit;
}

std::string trace_csv(const FitResult& fit) {
	std::string out = "epoch,train_loss,val_loss\n";
	for (std::size_t e = 0; e < fit.train_trace.size(); ++e) {
		out += std::to_string(e) + "," + format_g(fit.train_trace[e]) + "," + format_g(fit.val_trace[e]) + "\n";
	}
	return out;
}

} // namespace cqr
