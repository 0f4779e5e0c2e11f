#pragma once

#include "cqr/dataset.hpp"
#include "cqr/datagen.hpp"
#include "cqr/models.hpp"
#include "cqr/training.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cqr {

// Runs fn(0..n-1) on at most `jobs` threads. Each index is handled exactly
// once; the first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

// Named model recipes shared by the CLI and the replication tables.
//   tl-linear     tilted loss, identity neuron (censorship-unaware)
//   c-linear      censored loss, identity neuron
//   c-elu         censored loss, ELU neuron
//   c-reg-linear  censored loss, identity neuron with dropout and l2
//   c-lstm        censored loss, LSTM over the lag window
//   tl-lstm       tilted loss, LSTM over the lag window
//   tobit         Tobit NLL, identity neuron, sigma fixed
struct ModelRecipe {
	std::string name;
	LossKind loss = LossKind::censored_nll;
	Activation activation = Activation::identity;
	bool lstm = false;
	bool regularized = false;
};

ModelRecipe parse_model(std::string_view name);
std::vector<std::string> known_models();

// Untrained net for the recipe on `n_features` inputs (intercept included).
Net build_net(const ModelRecipe& recipe, std::size_t n_features, const InitScheme& init);

// Clamps predictions at each row's threshold: the estimate of the observed
// target's quantile, max(tau, q) on left data and min(tau, q) on right data.
std::vector<double> clamp_to_threshold(std::span<const double> pred, const CensoredDataset& data);

// Divides covariates (not the intercept), y, tau and y_star by `scale`.
CensoredDataset rescale(const CensoredDataset& data, double scale);

struct Verdict {
	std::string id;
	bool pass = false;
	std::string detail;
};

struct TableRun {
	std::string table;
	std::string raw_csv;
	std::string rendered;
	std::vector<Verdict> verdicts;
	double wall_seconds = 0.0;

	bool passed() const;
};

struct ReplicateOptions {
	std::uint64_t seed = 42;
	std::size_t jobs = 1;
	// Table default when unset: t1 20, t2 10, t3 10, t4 3.
	std::optional<std::size_t> replicates;
	// t2: noiseless generator; aware models must then recover the quantiles.
	bool zero_noise = false;
	// t4: the published bike grid instead of the reduced one.
	bool full_grid = false;
};

TableRun replicate_t1(const ReplicateOptions& opts);
TableRun replicate_t2(const ReplicateOptions& opts);
TableRun replicate_t3(const ReplicateOptions& opts);
TableRun replicate_t4_synthetic(const ReplicateOptions& opts);

// Dispatch on "t1", "t2", "t3", "t4-synthetic"; ConfigError otherwise.
TableRun replicate(std::string_view table, const ReplicateOptions& opts);
std::vector<std::string> known_tables();

// Reference cells from the published tables, used for rendering and verdicts.
namespace reference {
// Share of zero ground-truth quantiles, rows: noise, cols: theta .05 .5 .95.
extern const double table1[3][3];
// All-test R^2, [noise][theta][model tl-linear, c-linear, c-elu].
extern const double table2_r2[3][3][3];
} // namespace reference

} // namespace cqr
