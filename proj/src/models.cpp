#include "cqr/models.hpp"

#include "cqr/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cqr {

namespace {

double sigmoid(double z) {
	if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
	const double e = std::exp(z);
	return e / (1.0 + e);
}

void require_recorded(const ForwardCache& cache) {
	if (!cache.recorded) throw UsageError("backward called without a recorded forward pass");
}

void require_grad_size(std::span<double> grad, std::size_t n) {
	if (grad.size() != n) throw ShapeError("gradient buffer size does not match parameter count");
}

nlohmann::json regularization_json(const Regularization& reg) {
	return {{"dropout_rate", reg.dropout_rate}, {"l2_coeff", reg.l2_coeff}};
}

Regularization regularization_from_json(const nlohmann::json& j) {
	Regularization reg;
	if (j.contains("regularization")) {
		reg.dropout_rate = j["regularization"].value("dropout_rate", 0.0);
		reg.l2_coeff = j["regularization"].value("l2_coeff", 0.0);
	}
	return reg;
}

void check_regularization(const Regularization& reg) {
	if (!(reg.dropout_rate >= 0.0 && reg.dropout_rate < 1.0)) throw DomainError("dropout rate must lie in [0,1)");
	if (!(reg.l2_coeff >= 0.0)) throw DomainError("l2 coefficient must be >= 0");
}

} // namespace

std::string_view to_string(Activation act) {
	switch (act) {
	case Activation::identity:
		return "identity";
	case Activation::elu:
		return "elu";
	case Activation::tanh:
		return "tanh";
	case Activation::sigmoid:
		return "sigmoid";
	case Activation::relu:
		return "relu";
	}
	return "unknown";
}

Activation parse_activation(std::string_view name) {
	if (name == "identity" || name == "linear") return Activation::identity;
	if (name == "elu") return Activation::elu;
	if (name == "tanh") return Activation::tanh;
	if (name == "sigmoid") return Activation::sigmoid;
	if (name == "relu") return Activation::relu;
	throw ConfigError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation act, double z) {
	switch (act) {
	case Activation::identity:
		return z;
	case Activation::elu:
		return z > 0.0 ? z : std::expm1(z);
	case Activation::tanh:
		return std::tanh(z);
	case Activation::sigmoid:
		return sigmoid(z);
	case Activation::relu:
		return z > 0.0 ? z : 0.0;
	}
	return z;
}

double activate_derivative(Activation act, double z) {
	switch (act) {
	case Activation::identity:
		return 1.0;
	case Activation::elu:
		return z >= 0.0 ? 1.0 : std::exp(z);
	case Activation::tanh: {
		const double t = std::tanh(z);
		return 1.0 - t * t;
	}
	case Activation::sigmoid: {
		const double s = sigmoid(z);
		return s * (1.0 - s);
	}
	case Activation::relu:
		return z >= 0.0 ? 1.0 : 0.0;
	}
	return 1.0;
}

// ---------------------------------------------------------------- QuantileNet

void QuantileNet::check_input(std::span<const double> x) const {
	if (x.size() != input_size()) {
		throw ShapeError(family() + " net expects " + std::to_string(input_size()) + " inputs, got " +
		                 std::to_string(x.size()));
	}
}

double QuantileNet::predict(std::span<const double> x) const {
	ForwardCache cache;
	return forward(x, cache, nullptr);
}

std::vector<double> QuantileNet::predict_all(const CensoredDataset& data) const {
	if (data.n_features != input_size()) {
		throw ShapeError("dataset has " + std::to_string(data.n_features) + " covariates, net expects " +
		                 std::to_string(input_size()));
	}
	std::vector<double> out(data.size());
	ForwardCache cache;
	for (std::size_t i = 0; i < data.size(); ++i) out[i] = forward(data.row(i), cache, nullptr);
	return out;
}

// -------------------------------------------------------------- ParametricNet

ParametricNet::ParametricNet(std::size_t n_params, Regularization reg)
    : params_(n_params, 1.0), decay_mask_(n_params, 1), reg_(reg) {
	check_regularization(reg);
}

double ParametricNet::weight_decay_penalty() const {
	if (reg_.l2_coeff == 0.0) return 0.0;
	double sq = 0.0;
	for (std::size_t k = 0; k < params_.size(); ++k) {
		if (decay_mask_[k]) sq += params_[k] * params_[k];
	}
	return 0.5 * reg_.l2_coeff * sq;
}

void ParametricNet::add_weight_decay_grad(std::span<double> grad) const {
	require_grad_size(grad, params_.size());
	if (reg_.l2_coeff == 0.0) return;
	for (std::size_t k = 0; k < params_.size(); ++k) {
		if (decay_mask_[k]) grad[k] += reg_.l2_coeff * params_[k];
	}
}

void ParametricNet::init(const InitScheme& scheme) {
	if (scheme.kind == InitScheme::Kind::ones) {
		std::fill(params_.begin(), params_.end(), 1.0);
		return;
	}
	Rng rng(scheme.seed);
	for (auto& p : params_) p = rng.normal();
}

void ParametricNet::apply_dropout(std::span<const double> x, Rng* rng, std::vector<double>& out) const {
	out.assign(x.begin(), x.end());
	if (rng == nullptr || reg_.dropout_rate == 0.0) return;
	const double keep_scale = 1.0 / (1.0 - reg_.dropout_rate);
	for (std::size_t j = 1; j < out.size(); ++j) {
		out[j] = rng->uniform() < reg_.dropout_rate ? 0.0 : out[j] * keep_scale;
	}
}

// ---------------------------------------------------------- LinearQuantileNet

LinearQuantileNet::LinearQuantileNet(std::size_t n_features, Activation act, Regularization reg)
    : ParametricNet(n_features, reg), act_(act) {
	if (n_features == 0) throw ConfigError("linear net needs at least the intercept slot");
	decay_mask_[0] = 0;
}

std::string LinearQuantileNet::family() const {
	return "linear";
}

double LinearQuantileNet::forward(std::span<const double> x, ForwardCache& cache, Rng* dropout_rng) const {
	check_input(x);
	apply_dropout(x, dropout_rng, cache.input);
	double z = 0.0;
	for (std::size_t j = 0; j < params_.size(); ++j) z += params_[j] * cache.input[j];
	cache.pre.assign(1, z);
	cache.output = activate(act_, z);
	cache.recorded = true;
	return cache.output;
}

void LinearQuantileNet::backward(const ForwardCache& cache, double upstream, std::span<double> grad) const {
	require_recorded(cache);
	require_grad_size(grad, params_.size());
	const double dz = upstream * activate_derivative(act_, cache.pre[0]);
	for (std::size_t j = 0; j < params_.size(); ++j) grad[j] += dz * cache.input[j];
}

nlohmann::json LinearQuantileNet::config() const {
	return {{"n_features", params_.size()},
	        {"activation", std::string(to_string(act_))},
	        {"regularization", regularization_json(reg_)}};
}

// ----------------------------------------------------------- DenseQuantileNet

// Layout: W1 (hidden x n_features, row-major), w2 (hidden), b2.
DenseQuantileNet::DenseQuantileNet(std::size_t n_features, std::size_t hidden, Activation act, Regularization reg)
    : ParametricNet(hidden * n_features + hidden + 1, reg), n_features_(n_features), hidden_(hidden), act_(act) {
	if (n_features == 0 || hidden == 0) throw ConfigError("dense net needs inputs and hidden units");
	for (std::size_t h = 0; h < hidden_; ++h) decay_mask_[h * n_features_] = 0;
	decay_mask_.back() = 0;
}

double DenseQuantileNet::forward(std::span<const double> x, ForwardCache& cache, Rng* dropout_rng) const {
	check_input(x);
	apply_dropout(x, dropout_rng, cache.input);
	cache.pre.assign(hidden_, 0.0);
	cache.post.assign(hidden_, 0.0);
	const std::size_t w2 = hidden_ * n_features_;
	double out = params_.back();
	for (std::size_t h = 0; h < hidden_; ++h) {
		double z = 0.0;
		for (std::size_t j = 0; j < n_features_; ++j) z += params_[h * n_features_ + j] * cache.input[j];
		cache.pre[h] = z;
		cache.post[h] = activate(act_, z);
		out += params_[w2 + h] * cache.post[h];
	}
	cache.output = out;
	cache.recorded = true;
	return out;
}

void DenseQuantileNet::backward(const ForwardCache& cache, double upstream, std::span<double> grad) const {
	require_recorded(cache);
	require_grad_size(grad, params_.size());
	const std::size_t w2 = hidden_ * n_features_;
	for (std::size_t h = 0; h < hidden_; ++h) {
		grad[w2 + h] += upstream * cache.post[h];
		const double dz = upstream * params_[w2 + h] * activate_derivative(act_, cache.pre[h]);
		for (std::size_t j = 0; j < n_features_; ++j) grad[h * n_features_ + j] += dz * cache.input[j];
	}
	grad.back() += upstream;
}

nlohmann::json DenseQuantileNet::config() const {
	return {{"n_features", n_features_},
	        {"hidden", hidden_},
	        {"activation", std::string(to_string(act_))},
	        {"regularization", regularization_json(reg_)}};
}

// ------------------------------------------------------------ LstmQuantileNet

LstmQuantileNet::LstmQuantileNet(std::size_t lags, std::size_t hidden, bool output_bias, Regularization reg)
    : ParametricNet(4 * hidden + 4 * hidden * hidden + 4 * hidden + hidden + (output_bias ? 1 : 0), reg),
      lags_(lags), hidden_(hidden), output_bias_(output_bias) {
	if (lags == 0 || hidden == 0) throw ConfigError("lstm needs a positive lag window and hidden size");
	for (std::size_t k = b_offset(); k < wout_offset(); ++k) decay_mask_[k] = 0;
	if (output_bias_) decay_mask_[bout_offset()] = 0;
}

void LstmQuantileNet::init(const InitScheme& scheme) {
	ParametricNet::init(scheme);
	if (scheme.kind != InitScheme::Kind::standard_normal) return;
	const double scale = 1.0 / std::sqrt(static_cast<double>(hidden_));
	for (std::size_t k = wh_offset(); k < b_offset(); ++k) params_[k] *= scale;
}

// cache.post holds per step [i f g o | c | tanh(c) | h], steps 0..T-1;
// cache.state holds the scalar inputs in consumption order.
double LstmQuantileNet::forward(std::span<const double> x, ForwardCache& cache, Rng* dropout_rng) const {
	check_input(x);
	apply_dropout(x, dropout_rng, cache.input);
	const std::size_t H = hidden_;
	const std::size_t stride = 7 * H;
	cache.state.resize(lags_);
	cache.post.resize(lags_ * stride);
	cache.pre.resize(4 * H);
	const double* wx = &params_[wx_offset()];
	const double* wh = &params_[wh_offset()];
	const double* b = &params_[b_offset()];
	double* a = cache.pre.data();
	for (std::size_t s = 0; s < lags_; ++s) {
		const double xt = cache.input[lags_ - s];
		cache.state[s] = xt;
		for (std::size_t k = 0; k < 4 * H; ++k) a[k] = wx[k] * xt + b[k];
		if (s > 0) {
			// Column-wise so the 4H accumulators stay independent.
			const double* h_prev = &cache.post[(s - 1) * stride + 6 * H];
			for (std::size_t j = 0; j < H; ++j) {
				const double hj = h_prev[j];
				for (std::size_t k = 0; k < 4 * H; ++k) a[k] += wh[k * H + j] * hj;
			}
		}
		const double* c_prev = s > 0 ? &cache.post[(s - 1) * stride + 4 * H] : nullptr;
		double* step = &cache.post[s * stride];
		for (std::size_t j = 0; j < H; ++j) {
			const double ig = sigmoid(a[j]);
			const double fg = sigmoid(a[H + j]);
			const double gg = std::tanh(a[2 * H + j]);
			const double og = sigmoid(a[3 * H + j]);
			const double c = (c_prev ? fg * c_prev[j] : 0.0) + ig * gg;
			const double tc = std::tanh(c);
			step[j] = ig;
			step[H + j] = fg;
			step[2 * H + j] = gg;
			step[3 * H + j] = og;
			step[4 * H + j] = c;
			step[5 * H + j] = tc;
			step[6 * H + j] = og * tc;
		}
	}
	const double* h_last = &cache.post[(lags_ - 1) * stride + 6 * H];
	double out = output_bias_ ? params_[bout_offset()] : 0.0;
	for (std::size_t j = 0; j < H; ++j) out += params_[wout_offset() + j] * h_last[j];
	cache.output = out;
	cache.recorded = true;
	return out;
}

void LstmQuantileNet::backward(const ForwardCache& cache, double upstream, std::span<double> grad) const {
	require_recorded(cache);
	require_grad_size(grad, params_.size());
	const std::size_t H = hidden_;
	const std::size_t stride = 7 * H;
	const double* last = &cache.post[(lags_ - 1) * stride];

	std::vector<double> dh(H), dc_next(H, 0.0), da(4 * H), dh_prev(H);
	for (std::size_t j = 0; j < H; ++j) {
		grad[wout_offset() + j] += upstream * last[6 * H + j];
		dh[j] = upstream * params_[wout_offset() + j];
	}
	if (output_bias_) grad[bout_offset()] += upstream;

	for (std::size_t s = lags_; s-- > 0;) {
		const double* step = &cache.post[s * stride];
		const double* prev = s > 0 ? &cache.post[(s - 1) * stride] : nullptr;
		for (std::size_t j = 0; j < H; ++j) {
			const double ig = step[j], fg = step[H + j], gg = step[2 * H + j], og = step[3 * H + j];
			const double tc = step[5 * H + j];
			const double c_prev = prev ? prev[4 * H + j] : 0.0;
			const double d_o = dh[j] * tc;
			const double dc = dh[j] * og * (1.0 - tc * tc) + dc_next[j];
			da[j] = dc * gg * ig * (1.0 - ig);
			da[H + j] = dc * c_prev * fg * (1.0 - fg);
			da[2 * H + j] = dc * ig * (1.0 - gg * gg);
			da[3 * H + j] = d_o * og * (1.0 - og);
			dc_next[j] = dc * fg;
		}
		const double xt = cache.state[s];
		std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
		for (std::size_t k = 0; k < 4 * H; ++k) {
			grad[wx_offset() + k] += da[k] * xt;
			grad[b_offset() + k] += da[k];
			const double* wh = &params_[wh_offset() + k * H];
			double* gwh = &grad[wh_offset() + k * H];
			for (std::size_t j = 0; j < H; ++j) {
				const double h_prev = prev ? prev[6 * H + j] : 0.0;
				gwh[j] += da[k] * h_prev;
				dh_prev[j] += wh[j] * da[k];
			}
		}
		dh.swap(dh_prev);
	}
}

nlohmann::json LstmQuantileNet::config() const {
	return {{"lags", lags_},
	        {"hidden", hidden_},
	        {"output_bias", output_bias_},
	        {"regularization", regularization_json(reg_)}};
}

// -------------------------------------------------------------- MirrorWrapper

MirrorWrapper::MirrorWrapper(Net inner, double outer_theta) : inner_(std::move(inner)), outer_theta_(outer_theta) {
	if (!inner_) throw UsageError("mirror wrapper needs an inner net");
	QuantileLevel level(outer_theta);
	(void)level;
}

double MirrorWrapper::forward(std::span<const double> x, ForwardCache& cache, Rng* dropout_rng) const {
	check_input(x);
	cache.input.assign(x.begin(), x.end());
	for (std::size_t j = 1; j < cache.input.size(); ++j) cache.input[j] = -cache.input[j];
	cache.nested.resize(1);
	cache.output = -inner_->forward(cache.input, cache.nested[0], dropout_rng);
	cache.recorded = true;
	return cache.output;
}

void MirrorWrapper::backward(const ForwardCache& cache, double upstream, std::span<double> grad) const {
	require_recorded(cache);
	if (cache.nested.empty()) throw UsageError("mirror cache lacks the inner pass");
	inner_->backward(cache.nested[0], -upstream, grad);
}

nlohmann::json MirrorWrapper::config() const {
	return {{"outer_theta", outer_theta_}, {"inner", to_json(*inner_)}};
}

// ------------------------------------------------------------------ factories

Net make_linear(std::size_t n_features, Activation act, Regularization reg) {
	return Net(std::make_unique<LinearQuantileNet>(n_features, act, reg));
}

Net make_dense(std::size_t n_features, std::size_t hidden, Activation act, Regularization reg) {
	return Net(std::make_unique<DenseQuantileNet>(n_features, hidden, act, reg));
}

Net make_lstm(std::size_t lags, std::size_t hidden, bool output_bias, Regularization reg) {
	return Net(std::make_unique<LstmQuantileNet>(lags, hidden, output_bias, reg));
}

Net make_mirror(Net inner, double outer_theta) {
	return Net(std::make_unique<MirrorWrapper>(std::move(inner), outer_theta));
}

Net& init_weights(Net& net, const InitScheme& scheme) {
	net->init(scheme);
	return net;
}

nlohmann::json to_json(const QuantileNet& net) {
	const auto params = net.parameters();
	return {{"family", net.family()},
	        {"config", net.config()},
	        {"parameters", std::vector<double>(params.begin(), params.end())}};
}

Net net_from_json(const nlohmann::json& doc) {
	const std::string family = doc.at("family").get<std::string>();
	const auto& cfg = doc.at("config");
	Net net;
	if (family == "linear") {
		net = make_linear(cfg.at("n_features").get<std::size_t>(), parse_activation(cfg.at("activation").get<std::string>()),
		                  regularization_from_json(cfg));
	} else if (family == "dense") {
		net = make_dense(cfg.at("n_features").get<std::size_t>(), cfg.at("hidden").get<std::size_t>(),
		                 parse_activation(cfg.at("activation").get<std::string>()), regularization_from_json(cfg));
	} else if (family == "lstm") {
		net = make_lstm(cfg.at("lags").get<std::size_t>(), cfg.at("hidden").get<std::size_t>(),
		                cfg.at("output_bias").get<bool>(), regularization_from_json(cfg));
	} else if (family == "mirror") {
		return make_mirror(net_from_json(cfg.at("inner")), cfg.at("outer_theta").get<double>());
	} else {
		throw ConfigError("unknown net family '" + family + "'");
	}
	const auto params = doc.at("parameters").get<std::vector<double>>();
	if (params.size() != net->parameter_count()) throw ShapeError("parameter array does not match the net shape");
	std::copy(params.begin(), params.end(), net->parameters().begin());
	return net;
}

} // namespace cqr
