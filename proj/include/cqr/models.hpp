#pragma once

#include "cqr/dataset.hpp"
#include "cqr/rng.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cqr {

enum class Activation { identity, elu, tanh, sigmoid, relu };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

double activate(Activation act, double z);
// d activate / dz. ReLU takes slope 1 at 0, ELU takes slope 1 at 0 (upper branch).
double activate_derivative(Activation act, double z);

// Input dropout (inverted: retained inputs scaled by 1/(1-rate) in training,
// identity at evaluation) and l2 weight decay. The intercept slot is never
// dropped and biases are never decayed.
struct Regularization {
	double dropout_rate = 0.0;
	double l2_coeff = 0.0;

	bool active() const { return dropout_rate > 0.0 || l2_coeff > 0.0; }
	static Regularization standard() { return {0.2, 1e-3}; }
};

struct InitScheme {
	enum class Kind { ones, standard_normal } kind = Kind::ones;
	std::uint64_t seed = 0;

	static InitScheme ones() { return {Kind::ones, 0}; }
	static InitScheme standard_normal(std::uint64_t seed) { return {Kind::standard_normal, seed}; }
};

// Per-sample record of a training-mode forward pass, consumed by backward().
struct ForwardCache {
	bool recorded = false;
	std::vector<double> input;
	std::vector<double> pre;
	std::vector<double> post;
	std::vector<double> state;
	std::vector<ForwardCache> nested;
	double output = 0.0;
};

// A scalar quantile predictor over one covariate row. Rows carry the intercept
// slot x0 = 1 in position 0.
class QuantileNet {
public:
	virtual ~QuantileNet() = default;

	virtual std::unique_ptr<QuantileNet> clone() const = 0;
	virtual std::string family() const = 0;
	virtual std::size_t input_size() const = 0;

	virtual std::span<double> parameters() = 0;
	virtual std::span<const double> parameters() const = 0;
	std::size_t parameter_count() const { return parameters().size(); }

	double predict(std::span<const double> x) const;
	std::vector<double> predict_all(const CensoredDataset& data) const;

	// Training-mode pass. Dropout masks are drawn from `dropout_rng` when it is
	// non-null; a null rng gives the evaluation-mode output.
	virtual double forward(std::span<const double> x, ForwardCache& cache, Rng* dropout_rng) const = 0;
	// Adds upstream * d(output)/d(parameters) into grad. Throws UsageError if
	// the cache holds no recorded forward pass.
	virtual void backward(const ForwardCache& cache, double upstream, std::span<double> grad) const = 0;

	virtual const Regularization& regularization() const = 0;
	// 0.5 * l2 * |w|^2 over decayed weights, and its gradient (l2 * w).
	virtual double weight_decay_penalty() const = 0;
	virtual void add_weight_decay_grad(std::span<double> grad) const = 0;

	virtual void init(const InitScheme& scheme) = 0;
	virtual nlohmann::json config() const = 0;

protected:
	void check_input(std::span<const double> x) const;
};

// Deep-copying handle so nets behave as values.
class Net {
public:
	Net() = default;
	explicit Net(std::unique_ptr<QuantileNet> impl) : impl_(std::move(impl)) {}
	Net(const Net& other) : impl_(other.impl_ ? other.impl_->clone() : nullptr) {}
	Net& operator=(const Net& other) {
		if (this != &other) impl_ = other.impl_ ? other.impl_->clone() : nullptr;
		return *this;
	}
	Net(Net&&) noexcept = default;
	Net& operator=(Net&&) noexcept = default;

	QuantileNet* operator->() { return impl_.get(); }
	const QuantileNet* operator->() const { return impl_.get(); }
	QuantileNet& operator*() { return *impl_; }
	const QuantileNet& operator*() const { return *impl_; }
	explicit operator bool() const { return static_cast<bool>(impl_); }

private:
	std::unique_ptr<QuantileNet> impl_;
};

// Nets that own a flat parameter vector.
class ParametricNet : public QuantileNet {
public:
	std::span<double> parameters() override { return params_; }
	std::span<const double> parameters() const override { return params_; }
	const Regularization& regularization() const override { return reg_; }
	double weight_decay_penalty() const override;
	void add_weight_decay_grad(std::span<double> grad) const override;
	void init(const InitScheme& scheme) override;

protected:
	ParametricNet(std::size_t n_params, Regularization reg);
	// Dropout over slots 1.. of x; writes the effective input.
	void apply_dropout(std::span<const double> x, Rng* rng, std::vector<double>& out) const;

	std::vector<double> params_;
	std::vector<std::uint8_t> decay_mask_;
	Regularization reg_;
};

// q = act(x^T beta). With identity activation and no regularization this is
// the linear neuron; with ELU the nonlinear single neuron; with dropout/l2 the
// regularized linear model.
class LinearQuantileNet final : public ParametricNet {
public:
	LinearQuantileNet(std::size_t n_features, Activation act, Regularization reg = {});

	std::unique_ptr<QuantileNet> clone() const override { return std::make_unique<LinearQuantileNet>(*this); }
	std::string family() const override;
	std::size_t input_size() const override { return params_.size(); }
	double forward(std::span<const double> x, ForwardCache& cache, Rng* dropout_rng) const override;
	void backward(const ForwardCache& cache, double upstream, std::span<double> grad) const override;
	nlohmann::json config() const override;
	Activation activation() const { return act_; }

private:
	Activation act_;
};

// One hidden layer of `hidden` units with activation `act`, then a linear
// output with bias. The stacked-unit variants (1 or 10 units).
class DenseQuantileNet final : public ParametricNet {
public:
	DenseQuantileNet(std::size_t n_features, std::size_t hidden, Activation act, Regularization reg = {});

	std::unique_ptr<QuantileNet> clone() const override { return std::make_unique<DenseQuantileNet>(*this); }
	std::string family() const override { return "dense"; }
	std::size_t input_size() const override { return n_features_; }
	double forward(std::span<const double> x, ForwardCache& cache, Rng* dropout_rng) const override;
	void backward(const ForwardCache& cache, double upstream, std::span<double> grad) const override;
	nlohmann::json config() const override;

private:
	std::size_t n_features_;
	std::size_t hidden_;
	Activation act_;
};

// Single LSTM cell unrolled over the lag window (oldest lag first), then a
// linear aggregation of the final hidden state. Gate order in the parameter
// blocks: input, forget, cell candidate, output.
class LstmQuantileNet final : public ParametricNet {
public:
	LstmQuantileNet(std::size_t lags, std::size_t hidden = 8, bool output_bias = true, Regularization reg = {});

	std::unique_ptr<QuantileNet> clone() const override { return std::make_unique<LstmQuantileNet>(*this); }
	std::string family() const override { return "lstm"; }
	std::size_t input_size() const override { return lags_ + 1; }
	double forward(std::span<const double> x, ForwardCache& cache, Rng* dropout_rng) const override;
	void backward(const ForwardCache& cache, double upstream, std::span<double> grad) const override;
	void init(const InitScheme& scheme) override;
	nlohmann::json config() const override;

	std::size_t hidden_size() const { return hidden_; }

private:
	std::size_t wx_offset() const { return 0; }
	std::size_t wh_offset() const { return 4 * hidden_; }
	std::size_t b_offset() const { return 4 * hidden_ + 4 * hidden_ * hidden_; }
	std::size_t wout_offset() const { return b_offset() + 4 * hidden_; }
	std::size_t bout_offset() const { return wout_offset() + hidden_; }

	std::size_t lags_;
	std::size_t hidden_;
	bool output_bias_;
};

// Right-censorship adapter: predict(x) = -inner.predict(-x), negating every
// covariate except the intercept slot. The inner net models level 1 - theta
// of the mirrored, left-censored problem.
class MirrorWrapper final : public QuantileNet {
public:
	MirrorWrapper(Net inner, double outer_theta);
	MirrorWrapper(const MirrorWrapper& other) = default;

	std::unique_ptr<QuantileNet> clone() const override { return std::make_unique<MirrorWrapper>(*this); }
	std::string family() const override { return "mirror"; }
	std::size_t input_size() const override { return inner_->input_size(); }
	std::span<double> parameters() override { return inner_->parameters(); }
	std::span<const double> parameters() const override { return std::as_const(*inner_).parameters(); }
	double forward(std::span<const double> x, ForwardCache& cache, Rng* dropout_rng) const override;
	void backward(const ForwardCache& cache, double upstream, std::span<double> grad) const override;
	const Regularization& regularization() const override { return inner_->regularization(); }
	double weight_decay_penalty() const override { return inner_->weight_decay_penalty(); }
	void add_weight_decay_grad(std::span<double> grad) const override { inner_->add_weight_decay_grad(grad); }
	void init(const InitScheme& scheme) override { inner_->init(scheme); }
	nlohmann::json config() const override;

	double outer_theta() const { return outer_theta_; }
	double inner_theta() const { return 1.0 - outer_theta_; }
	const Net& inner() const { return inner_; }
	Net& inner() { return inner_; }

private:
	Net inner_;
	double outer_theta_;
};

Net make_linear(std::size_t n_features, Activation act = Activation::identity, Regularization reg = {});
Net make_dense(std::size_t n_features, std::size_t hidden, Activation act, Regularization reg = {});
Net make_lstm(std::size_t lags, std::size_t hidden = 8, bool output_bias = true, Regularization reg = {});
Net make_mirror(Net inner, double outer_theta);

Net& init_weights(Net& net, const InitScheme& scheme);

// Flat JSON: family tag, config, parameter array.
nlohmann::json to_json(const QuantileNet& net);
Net net_from_json(const nlohmann::json& doc);

} // namespace cqr
