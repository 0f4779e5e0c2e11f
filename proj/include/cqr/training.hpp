#pragma once

#include "cqr/dataset.hpp"
#include "cqr/models.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cqr {

enum class LossKind { tilted, censored_nll, tobit };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

struct LossSpec {
	LossKind kind = LossKind::censored_nll;
	double theta = 0.5;
	// Tobit only.
	double sigma = 1.0;
	Side tobit_side = Side::left;
};

struct TrainConfig {
	double learning_rate = 0.01;
	std::vector<double> lr_grid{0.001, 0.01, 0.1, 1.0};
	// Global gradient-norm clip; nullopt disables clipping.
	std::optional<double> clip_norm = 1.0;
	std::size_t patience = 10;
	std::size_t max_epochs = 5000;
	double adam_beta1 = 0.9;
	double adam_beta2 = 0.999;
	double adam_eps = 1e-8;
	std::uint64_t seed = 0;

	void validate() const;
};

// Objective over a flat parameter vector. `grad` is empty when only the value
// is wanted; otherwise it has the parameter count and is overwritten.
// `train_mode` enables stochastic regularization (dropout).
struct Objective {
	std::function<double(std::span<const double> params, std::span<double> grad, bool train_mode)> evaluate;
};

struct OptimizeResult {
	std::vector<double> params;
	std::vector<double> train_trace;
	std::vector<double> val_trace;
	std::size_t best_epoch = 0;
	std::size_t stopping_epoch = 0;
	bool hit_max_epochs = false;
};

class Adam {
public:
	Adam(std::size_t n_params, const TrainConfig& cfg);
	// One update of params along grad (already clipped by the caller).
	void step(std::span<double> params, std::span<const double> grad, double learning_rate);
	std::size_t steps() const { return t_; }

private:
	double beta1_, beta2_, eps_;
	std::vector<double> m_, v_;
	std::size_t t_ = 0;
};

// Rescales grad to norm `max_norm` when its Euclidean norm exceeds it;
// returns the norm before clipping.
double clip_global_norm(std::span<double> grad, double max_norm);

// Full-batch Adam with global-norm clipping and early stopping on the
// validation objective. Trace entry e refers to the parameters after e
// updates; the returned parameters are those of the best validation entry.
// Throws DivergenceError on a non-finite loss.
OptimizeResult optimize(std::vector<double> initial, const Objective& train, const Objective& val,
                        const TrainConfig& cfg, double learning_rate);

struct FitResult {
	Net net;
	LossSpec loss;
	std::vector<double> train_trace;
	std::vector<double> val_trace;
	std::size_t best_epoch = 0;
	std::size_t stopping_epoch = 0;
	bool hit_max_epochs = false;
	double learning_rate = 0.0;
	std::uint64_t seed = 0;
	double wall_seconds = 0.0;

	double best_val_loss() const { return val_trace.at(best_epoch); }
};

// Mean per-row loss of the net's predictions on data (plus weight decay).
double mean_loss(const QuantileNet& net, const CensoredDataset& data, const LossSpec& loss);

Objective make_objective(const Net& net, const CensoredDataset& data, const LossSpec& loss, Rng* dropout_rng);

// Trains a copy of `net`. Quantile losses require left-censored data (wrap
// right-censored problems with mirror_fit_predict or mirror()).
FitResult fit(const Net& net, const LossSpec& loss, const CensoredDataset& train, const CensoredDataset& val,
              const TrainConfig& cfg);

// One fit per learning rate from identical initial weights; keeps the fit with
// the lowest best-epoch validation loss (ties to the smaller rate). Diverged
// fits are excluded.
FitResult fit_with_lr_grid(const std::function<Net()>& net_factory, const LossSpec& loss,
                           const CensoredDataset& train, const CensoredDataset& val, const TrainConfig& cfg);

// mean(train y*) / mean(train y); throws DegenerateDataError on zero means.
double latent_mean_ratio(const CensoredDataset& train);

// Non-censored rows get tau = y * ratio; censored rows keep tau = y.
CensoredDataset impute_thresholds(double train_latent_mean_ratio, const CensoredDataset& data);

struct IntervalCandidate {
	double val_icp = 0.0;
	double val_mil = 0.0;
};

struct InitSelection {
	std::size_t index = 0;
	// Set when the MIL filter rejected every candidate.
	bool fallback = false;
};

// Drops candidates with val_mil / train_observed_mean > max_mil_ratio, then
// picks validation ICP closest to target_icp (first wins ties).
InitSelection select_initialization(std::span<const IntervalCandidate> candidates, double train_observed_mean,
                                    double max_mil_ratio = 2.0, double target_icp = 0.9);

struct MirrorFit {
	FitResult inner_fit;
	Net wrapped;
	std::vector<double> predictions;
};

// Fits wrapper.inner on the mirrored (left-censored) problem at 1 - theta and
// returns negated inner predictions on `predict_on`. Throws UsageError when
// the data is not right-censored.
MirrorFit mirror_fit_predict(const MirrorWrapper& wrapper, LossKind kind, const CensoredDataset& train,
                             const CensoredDataset& val, const CensoredDataset& predict_on, const TrainConfig& cfg);

nlohmann::json to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& doc);

// epoch,train_loss,val_loss
std::string trace_csv(const FitResult& fit);

} // namespace cqr
