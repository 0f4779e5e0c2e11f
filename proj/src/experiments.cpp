#include "cqr/experiments.hpp"

#include "cqr/error.hpp"
#include "cqr/io.hpp"
#include "cqr/metrics.hpp"
#include "cqr/rng.hpp"
#include "cqr/tobit.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace cqr {

namespace reference {
const double table1[3][3] = {
    {0.627, 0.239, 0.020},
    {0.680, 0.239, 0.114},
    {0.541, 0.239, 0.046},
};
const double table2_r2[3][3][3] = {
    {{0.220, 0.499, 0.690}, {0.904, 1.000, 0.990}, {0.979, 0.985, 0.973}},
    {{-0.500, -0.418, -0.376}, {0.904, 1.000, 0.987}, {0.811, 0.913, 0.947}},
    {{0.528, 0.715, 0.744}, {0.909, 1.000, 0.989}, {0.974, 0.983, 0.982}},
};
} // namespace reference

namespace {

constexpr Noise kNoises[] = {Noise::standard_gaussian, Noise::heteroskedastic, Noise::gaussian_mixture};
constexpr double kThetas[] = {0.05, 0.50, 0.95};

std::string fmt(const char* pattern, ...) {
	char buf[512];
	va_list args;
	va_start(args, pattern);
	std::vsnprintf(buf, sizeof buf, pattern, args);
	va_end(args);
	return buf;
}

std::string num(double v) { return io::format_number(v); }
std::string num(const std::optional<double>& v) { return v ? io::format_number(*v) : std::string(); }

std::string path(std::initializer_list<std::string> parts) {
	std::string out;
	for (const auto& p : parts) {
		if (!out.empty()) out += '/';
		out += p;
	}
	return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
	return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct MeanAcc {
	double sum = 0.0;
	double sq = 0.0;
	std::size_t n = 0;
	void add(double v) {
		sum += v;
		sq += v * v;
		++n;
	}
	double mean() const { return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN(); }
	double sd() const {
		if (n < 2) return 0.0;
		const double m = mean();
		return std::sqrt(std::max(0.0, (sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1)));
	}
};

std::size_t replicates_or(const ReplicateOptions& opts, std::size_t fallback) {
	const std::size_t r = opts.replicates.value_or(fallback);
	if (r == 0) throw ConfigError("replicate count must be positive");
	return r;
}

void add_verdict(TableRun& run, std::string id, bool pass, std::string detail) {
	run.verdicts.push_back({std::move(id), pass, std::move(detail)});
}

} // namespace

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
	if (n == 0) return;
	jobs = std::clamp<std::size_t>(jobs, 1, n);
	if (jobs == 1) {
		for (std::size_t i = 0; i < n; ++i) fn(i);
		return;
	}
	std::atomic<std::size_t> next{0};
	std::atomic<bool> failed{false};
	std::exception_ptr error;
	std::mutex error_mutex;
	auto worker = [&] {
		for (;;) {
			if (failed.load()) return;
			const std::size_t i = next.fetch_add(1);
			if (i >= n) return;
			try {
				fn(i);
			} catch (...) {
				std::lock_guard lock(error_mutex);
				if (!error) error = std::current_exception();
				failed = true;
				return;
			}
		}
	};
	std::vector<std::thread> pool;
	pool.reserve(jobs);
	for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
	for (auto& th : pool) th.join();
	if (error) std::rethrow_exception(error);
}

// ------------------------------------------------------------------ models

std::vector<std::string> known_models() {
	return {"tl-linear", "c-linear", "c-elu", "c-reg-linear", "c-lstm", "tl-lstm", "tobit"};
}

ModelRecipe parse_model(std::string_view name) {
	ModelRecipe r;
	r.name = std::string(name);
	if (name == "tl-linear") {
		r.loss = LossKind::tilted;
	} else if (name == "c-linear") {
	} else if (name == "c-elu") {
		r.activation = Activation::elu;
	} else if (name == "c-reg-linear") {
		r.regularized = true;
	} else if (name == "c-lstm") {
		r.lstm = true;
		r.regularized = true;
	} else if (name == "tl-lstm") {
		r.loss = LossKind::tilted;
		r.lstm = true;
		r.regularized = true;
	} else if (name == "tobit") {
		r.loss = LossKind::tobit;
	} else {
		throw ConfigError("unknown model '" + std::string(name) + "'");
	}
	return r;
}

Net build_net(const ModelRecipe& recipe, std::size_t n_features, const InitScheme& init) {
	const Regularization reg = recipe.regularized ? Regularization::standard() : Regularization{};
	Net net;
	if (recipe.lstm) {
		if (n_features < 2) throw ConfigError("an LSTM needs at least one lag");
		net = make_lstm(n_features - 1, 8, true, reg);
	} else {
		net = make_linear(n_features, recipe.activation, reg);
	}
	init_weights(net, init);
	return net;
}

std::vector<double> clamp_to_threshold(std::span<const double> pred, const CensoredDataset& data) {
	if (pred.size() != data.size()) throw ShapeError("prediction count differs from dataset size");
	std::vector<double> out(pred.begin(), pred.end());
	for (std::size_t i = 0; i < out.size(); ++i) {
		out[i] = data.side == Side::left ? std::max(data.tau[i], out[i]) : std::min(data.tau[i], out[i]);
	}
	return out;
}

CensoredDataset rescale(const CensoredDataset& data, double scale) {
	if (!(scale > 0.0) || !std::isfinite(scale)) throw DegenerateDataError("scale must be positive and finite");
	CensoredDataset out = data;
	const std::size_t p = out.n_features;
	for (std::size_t i = 0; i < out.size(); ++i) {
		for (std::size_t j = 1; j < p; ++j) out.X[i * p + j] /= scale;
		out.y[i] /= scale;
		out.tau[i] /= scale;
	}
	if (out.y_star) {
		for (auto& v : *out.y_star) v /= scale;
	}
	for (auto& [theta, q] : out.true_quantiles) {
		for (auto& v : q) v /= scale;
	}
	return out;
}

bool TableRun::passed() const {
	return std::all_of(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
}

// ---------------------------------------------------------------------- t1

TableRun replicate_t1(const ReplicateOptions& opts) {
	const auto t0 = std::chrono::steady_clock::now();
	const std::size_t reps = replicates_or(opts, 20);
	TableRun run;
	run.table = "t1";

	struct Row {
		double censored_fraction = 0.0;
		double zero_all[3]{};
		double zero_censored[3]{};
	};
	std::vector<Row> rows(3 * reps);
	parallel_for(rows.size(), opts.jobs, [&](std::size_t k) {
		const std::size_t ni = k / reps, r = k % reps;
		SyntheticSpec spec;
		spec.noise = kNoises[ni];
		spec.seed = derive_seed(opts.seed, path({"t1", "rep" + std::to_string(r), "data"}));
		spec.mixture = MixtureQuantile::closed_form;
		const auto ds = gen_synthetic(spec);
		Row& row = rows[k];
		row.censored_fraction = ds.censored_fraction();
		for (int t = 0; t < 3; ++t) {
			row.zero_all[t] = zero_quantile_fraction(ds, kThetas[t], ZeroFractionBase::all_rows);
			row.zero_censored[t] = zero_quantile_fraction(ds, kThetas[t], ZeroFractionBase::censored_rows);
		}
	});

	std::ostringstream csv;
	csv << "noise,replicate,censored_fraction,theta,zero_share_all_rows,zero_share_censored_rows\n";
	MeanAcc pooled_rate, rate[3], zero[3][3];
	for (std::size_t k = 0; k < rows.size(); ++k) {
		const std::size_t ni = k / reps, r = k % reps;
		pooled_rate.add(rows[k].censored_fraction);
		rate[ni].add(rows[k].censored_fraction);
		for (int t = 0; t < 3; ++t) {
			zero[ni][t].add(rows[k].zero_all[t]);
			csv << to_string(kNoises[ni]) << ',' << r << ',' << num(rows[k].censored_fraction) << ','
			    << num(kThetas[t]) << ',' << num(rows[k].zero_all[t]) << ',' << num(rows[k].zero_censored[t]) << '\n';
		}
	}
	run.raw_csv = csv.str();

	std::ostringstream out;
	out << "Percent of zero conditional quantiles (mean over " << reps << " seeds; published value in brackets)\n";
	out << fmt("%-20s %16s %16s %16s %10s\n", "dataset", "theta=0.05", "theta=0.50", "theta=0.95", "censored");
	bool cells_ok = true;
	std::string worst;
	double worst_gap = 0.0;
	for (int ni = 0; ni < 3; ++ni) {
		out << fmt("%-20s", std::string(to_string(kNoises[ni])).c_str());
		for (int t = 0; t < 3; ++t) {
			const double m = zero[ni][t].mean(), ref = reference::table1[ni][t];
			out << fmt(" %7.1f%% [%5.1f%%]", 100 * m, 100 * ref);
			const double gap = std::abs(m - ref);
			if (gap > worst_gap) {
				worst_gap = gap;
				worst = fmt("%s theta=%.2f", std::string(to_string(kNoises[ni])).c_str(), kThetas[t]);
			}
			cells_ok = cells_ok && gap <= 0.05;
		}
		out << fmt(" %9.1f%%\n", 100 * rate[ni].mean());
	}
	run.rendered = out.str();

	add_verdict(run, "censoring-rate", std::abs(pooled_rate.mean() - 0.30) <= 0.03,
	            fmt("mean censored fraction %.4f over %zu datasets (target 0.30 +- 0.03)", pooled_rate.mean(),
	                pooled_rate.n));
	add_verdict(run, "table1-cells", cells_ok,
	            fmt("largest gap %.1f pp at %s (tolerance 5 pp)", 100 * worst_gap, worst.c_str()));
	const double sg95 = zero[0][2].mean();
	add_verdict(run, "table1-gaussian-0.95", sg95 >= 0.0 && sg95 <= 0.07,
	            fmt("standard gaussian theta=0.95 cell %.1f%% (range 0-7%%)", 100 * sg95));
	run.wall_seconds = seconds_since(t0);
	return run;
}

// ---------------------------------------------------------------------- t2

namespace {

const char* const kT2Models[] = {"tl-linear", "c-linear", "c-elu"};

} // namespace

TableRun replicate_t2(const ReplicateOptions& opts) {
	const auto t0 = std::chrono::steady_clock::now();
	const std::size_t reps = replicates_or(opts, 10);
	TableRun run;
	run.table = "t2";

	std::vector<DatasetSplit> splits(3 * reps);
	for (std::size_t r = 0; r < reps; ++r) {
		const std::string rep = "rep" + std::to_string(r);
		for (int ni = 0; ni < 3; ++ni) {
			SyntheticSpec spec;
			spec.noise = kNoises[ni];
			spec.seed = derive_seed(opts.seed, path({"t2", rep, "data"}));
			spec.mixture = MixtureQuantile::closed_form;
			spec.zero_noise = opts.zero_noise;
			const auto ds = gen_synthetic(spec);
			splits[r * 3 + ni] =
			    split(ds, SplitScheme::random(0.62, 0.15, 0.23, derive_seed(opts.seed, path({"t2", rep, "split"}))));
		}
	}

	struct Cell {
		EvalReport report[2];
		// Raw predictions against the unclamped latent quantiles.
		PointMetrics latent[2];
		double lr = 0.0;
		std::size_t best_epoch = 0, stopping_epoch = 0;
	};
	const std::size_t n_cells = reps * 3 * 3 * 3;
	std::vector<Cell> cells(n_cells);
	parallel_for(n_cells, opts.jobs, [&](std::size_t k) {
		const std::size_t m = k % 3, t = (k / 3) % 3, ni = (k / 9) % 3, r = k / 27;
		const auto& sp = splits[r * 3 + ni];
		const auto recipe = parse_model(kT2Models[m]);
		TrainConfig cfg;
		cfg.seed = derive_seed(opts.seed, path({"t2", "rep" + std::to_string(r), std::string(to_string(kNoises[ni])),
		                                        num(kThetas[t]), recipe.name}));
		LossSpec loss;
		loss.kind = recipe.loss;
		loss.theta = kThetas[t];
		const auto f = fit(build_net(recipe, sp.train.n_features, InitScheme::ones()), loss, sp.train, sp.val, cfg);
		const auto raw = f.net->predict_all(sp.test);
		Predictions preds;
		preds.point = PointPrediction{kThetas[t], clamp_to_threshold(raw, sp.test)};
		Cell& c = cells[k];
		for (int s = 0; s < 2; ++s) {
			const Subset subset = s == 0 ? Subset::all_test : Subset::non_censored_test;
			c.report[s] = subset_report(preds, sp.test, subset);
			std::vector<double> q, p;
			for (std::size_t i : subset_rows(sp.test, subset)) {
				const auto x = sp.test.row(i);
				q.push_back(opts.zero_noise ? x[0] + x[1] + x[2]
				                            : latent_quantile(kNoises[ni], kThetas[t], x, MixtureQuantile::closed_form));
				p.push_back(raw[i]);
			}
			c.latent[s] = point_metrics(p, q);
		}
		c.lr = f.learning_rate;
		c.best_epoch = f.best_epoch;
		c.stopping_epoch = f.stopping_epoch;
	});

	std::ostringstream csv;
	csv << "replicate,noise,theta,model,subset,n,r2,mae,rmse,r2_latent,mae_latent,rmse_latent,learning_rate,best_epoch,"
	       "stopping_epoch\n";
	// [subset][noise][theta][model]
	MeanAcc r2[2][3][3][3], mae[2][3][3][3], rmse[2][3][3][3];
	for (std::size_t k = 0; k < n_cells; ++k) {
		const std::size_t m = k % 3, t = (k / 3) % 3, ni = (k / 9) % 3, r = k / 27;
		for (int s = 0; s < 2; ++s) {
			const auto& rep = cells[k].report[s];
			csv << r << ',' << to_string(kNoises[ni]) << ',' << num(kThetas[t]) << ',' << kT2Models[m] << ','
			    << to_string(rep.subset) << ',' << rep.n << ',' << num(rep.r2) << ',' << num(rep.mae) << ','
			    << num(rep.rmse) << ',' << num(cells[k].latent[s].r2) << ',' << num(cells[k].latent[s].mae) << ','
			    << num(cells[k].latent[s].rmse) << ',' << num(cells[k].lr) << ',' << cells[k].best_epoch << ','
			    << cells[k].stopping_epoch << '\n';
			if (rep.r2) r2[s][ni][t][m].add(*rep.r2);
			mae[s][ni][t][m].add(rep.mae.value_or(0.0));
			rmse[s][ni][t][m].add(rep.rmse.value_or(0.0));
		}
	}
	run.raw_csv = csv.str();

	std::ostringstream out;
	out << "Predictive quality for conditional quantiles (mean over " << reps << " seeds"
	    << (opts.zero_noise ? ", noiseless generator" : "") << ")\n";
	out << "Predictions are max(tau, q) scored against the ground-truth quantiles of y.\n";
	const char* subset_title[2] = {"All test data", "Only non-censored"};
	for (int s = 0; s < 2; ++s) {
		out << '\n' << subset_title[s] << '\n';
		out << fmt("%-6s %-10s", "theta", "model");
		for (int ni = 0; ni < 3; ++ni) out << fmt(" | %-24s", std::string(to_string(kNoises[ni])).c_str());
		out << '\n' << fmt("%-6s %-10s", "", "");
		for (int ni = 0; ni < 3; ++ni) out << fmt(" | %7s %7s %8s", "R2", "MAE", "RMSE");
		out << '\n';
		for (int t = 0; t < 3; ++t) {
			for (int m = 0; m < 3; ++m) {
				out << fmt("%-6.2f %-10s", kThetas[t], kT2Models[m]);
				for (int ni = 0; ni < 3; ++ni) {
					out << fmt(" | %7.3f %7.3f %8.3f", r2[s][ni][t][m].mean(), mae[s][ni][t][m].mean(),
					           rmse[s][ni][t][m].mean());
				}
				out << '\n';
			}
		}
	}
	out << "\nPublished all-test R2 for comparison\n";
	for (int t = 0; t < 3; ++t) {
		for (int m = 0; m < 3; ++m) {
			out << fmt("%-6.2f %-10s", kThetas[t], kT2Models[m]);
			for (int ni = 0; ni < 3; ++ni) out << fmt(" | %7.3f", reference::table2_r2[ni][t][m]);
			out << '\n';
		}
	}
	run.rendered = out.str();

	if (opts.zero_noise) {
		double worst = 1.0;
		for (int s = 0; s < 2; ++s)
			for (int ni = 0; ni < 3; ++ni)
				for (int t = 0; t < 3; ++t)
					for (int m = 1; m < 3; ++m) worst = std::min(worst, r2[s][ni][t][m].mean());
		add_verdict(run, "zero-noise-recovery", worst >= 1.0 - 1e-6,
		            fmt("lowest censorship-aware R2 %.9f (must reach 1 within 1e-6)", worst));
		run.wall_seconds = seconds_since(t0);
		return run;
	}

	bool median_ok = true;
	std::string median_detail;
	for (int ni = 0; ni < 3; ++ni) {
		const double r = r2[0][ni][1][1].mean(), a = mae[0][ni][1][1].mean();
		median_ok = median_ok && r >= 0.99 && a <= 0.05;
		median_detail += fmt("%s R2 %.4f MAE %.4f; ", std::string(to_string(kNoises[ni])).c_str(), r, a);
	}
	add_verdict(run, "t2-median-c-linear", median_ok, median_detail + "need R2 >= 0.99 and MAE <= 0.05");

	bool tl_ok = true;
	std::string tl_detail;
	for (int ni = 0; ni < 3; ++ni) {
		const double r = r2[0][ni][1][0].mean();
		tl_ok = tl_ok && r >= 0.85 && r <= 0.95;
		tl_detail += fmt("%s %.4f; ", std::string(to_string(kNoises[ni])).c_str(), r);
	}
	add_verdict(run, "t2-median-tl-linear", tl_ok, "TL R2 " + tl_detail + "range [0.85, 0.95]");

	std::size_t violations = 0;
	std::string violation_detail;
	for (int s = 0; s < 2; ++s)
		for (int ni = 0; ni < 3; ++ni)
			for (int t = 0; t < 3; ++t)
				for (int m = 1; m < 3; ++m) {
					const double aware = r2[s][ni][t][m].mean(), unaware = r2[s][ni][t][0].mean();
					if (!(aware >= unaware)) {
						++violations;
						violation_detail += fmt(" %s/%s/%.2f/%s %.4f<%.4f", s == 0 ? "all" : "nc",
						                        std::string(to_string(kNoises[ni])).c_str(), kThetas[t], kT2Models[m],
						                        aware, unaware);
					}
				}
	add_verdict(run, "t2-aware-beats-unaware", violations == 0,
	            fmt("%zu of 36 comparisons violated", violations) + violation_detail);

	const double elu = r2[0][0][0][2].mean(), lin = r2[0][0][0][1].mean(), tl = r2[0][0][0][0].mean();
	const bool order = elu > lin && lin > tl;
	const bool close = std::abs(elu - 0.690) <= 0.15 && std::abs(lin - 0.499) <= 0.15 && std::abs(tl - 0.220) <= 0.15;
	add_verdict(run, "t2-hard-quantile", order && close,
	            fmt("gaussian theta=0.05 R2 c-elu %.4f, c-linear %.4f, tl-linear %.4f; strict order %s, within 0.15 "
	                "of 0.690/0.499/0.220 %s",
	                elu, lin, tl, order ? "holds" : "fails", close ? "yes" : "no"));
	run.wall_seconds = seconds_since(t0);
	return run;
}

// ---------------------------------------------------------------------- t3

TableRun replicate_t3(const ReplicateOptions& opts) {
	const auto t0 = std::chrono::steady_clock::now();
	const std::size_t reps = replicates_or(opts, 10);
	TableRun run;
	run.table = "t3";

	std::vector<DatasetSplit> splits(3 * reps);
	for (std::size_t r = 0; r < reps; ++r) {
		const std::string rep = "rep" + std::to_string(r);
		for (int ni = 0; ni < 3; ++ni) {
			SyntheticSpec spec;
			spec.noise = kNoises[ni];
			spec.seed = derive_seed(opts.seed, path({"t3", rep, "data"}));
			const auto ds = gen_synthetic(spec);
			splits[r * 3 + ni] =
			    split(ds, SplitScheme::random(0.62, 0.15, 0.23, derive_seed(opts.seed, path({"t3", rep, "split"}))));
		}
	}

	// Per (replicate, noise): 0 = tobit, 1 = c-linear at 0.05, 2 = c-linear at 0.95.
	const std::size_t n_jobs = reps * 3 * 3;
	std::vector<std::vector<double>> lower_upper(n_jobs);
	parallel_for(n_jobs, opts.jobs, [&](std::size_t k) {
		const std::size_t part = k % 3, ni = (k / 3) % 3, r = k / 9;
		const auto& sp = splits[r * 3 + ni];
		TrainConfig cfg;
		cfg.seed = derive_seed(opts.seed, path({"t3", "rep" + std::to_string(r), std::string(to_string(kNoises[ni])),
		                                        std::to_string(part)}));
		if (part == 0) {
			TobitConfig tc;
			tc.train = cfg;
			tc.sigma = 1.0;
			tc.side = Side::left;
			const auto model = tobit_model(tobit_fit(sp.train, sp.val, tc));
			auto lo = tobit_quantiles(model, sp.test, 0.05);
			const auto hi = tobit_quantiles(model, sp.test, 0.95);
			lo.insert(lo.end(), hi.begin(), hi.end());
			lower_upper[k] = std::move(lo);
		} else {
			LossSpec loss;
			loss.kind = LossKind::censored_nll;
			loss.theta = part == 1 ? 0.05 : 0.95;
			const auto f = fit(build_net(parse_model("c-linear"), 3, InitScheme::ones()), loss, sp.train, sp.val, cfg);
			lower_upper[k] = f.net->predict_all(sp.test);
		}
	});

	std::ostringstream csv;
	csv << "replicate,noise,model,subset,n,icp,mil,crossings\n";
	// [noise][model tobit, cqr][subset]
	MeanAcc icp[3][2][2], mil[3][2][2];
	bool mil_exact = true;
	for (std::size_t r = 0; r < reps; ++r) {
		for (int ni = 0; ni < 3; ++ni) {
			const auto& sp = splits[r * 3 + ni];
			const std::size_t base = r * 9 + ni * 3;
			const std::size_t n = sp.test.size();
			for (int model = 0; model < 2; ++model) {
				Predictions preds;
				IntervalPrediction iv;
				if (model == 0) {
					const auto& both = lower_upper[base];
					iv.lower.assign(both.begin(), both.begin() + static_cast<std::ptrdiff_t>(n));
					iv.upper.assign(both.begin() + static_cast<std::ptrdiff_t>(n), both.end());
				} else {
					iv.lower = lower_upper[base + 1];
					iv.upper = lower_upper[base + 2];
				}
				preds.interval = std::move(iv);
				for (int s = 0; s < 2; ++s) {
					const auto rep = subset_report(preds, sp.test, s == 0 ? Subset::all_test : Subset::non_censored_test);
					icp[ni][model][s].add(*rep.icp);
					mil[ni][model][s].add(*rep.mil);
					if (model == 0 && std::abs(*rep.mil - 3.290) > 0.005) mil_exact = false;
					csv << r << ',' << to_string(kNoises[ni]) << ',' << (model == 0 ? "tobit" : "c-linear") << ','
					    << to_string(rep.subset) << ',' << rep.n << ',' << num(rep.icp) << ',' << num(rep.mil) << ','
					    << rep.crossings << '\n';
				}
			}
		}
	}
	run.raw_csv = csv.str();

	std::ostringstream out;
	out << "Non-parametric QR vs parametric Tobit (sigma = 1), mean over " << reps << " seeds\n";
	out << fmt("%-20s %-9s | %7s %7s | %7s %7s\n", "dataset", "model", "ICP", "MIL", "ICP nc", "MIL nc");
	for (int ni = 0; ni < 3; ++ni) {
		for (int model = 0; model < 2; ++model) {
			out << fmt("%-20s %-9s | %7.3f %7.3f | %7.3f %7.3f\n",
			           model == 0 ? std::string(to_string(kNoises[ni])).c_str() : "", model == 0 ? "Tobit" : "C+Sigma",
			           icp[ni][model][0].mean(), mil[ni][model][0].mean(), icp[ni][model][1].mean(),
			           mil[ni][model][1].mean());
		}
	}
	run.rendered = out.str();

	add_verdict(run, "t3-tobit-mil", mil_exact,
	            fmt("Tobit MIL %.5f / %.5f / %.5f (every run within 3.290 +- 0.005)", mil[0][0][0].mean(),
	                mil[1][0][0].mean(), mil[2][0][0].mean()));
	const double sg_icp = icp[0][0][0].mean();
	add_verdict(run, "t3-tobit-icp-gaussian", std::abs(sg_icp - 0.909) <= 0.03,
	            fmt("Tobit all-test ICP on standard gaussian %.4f (0.909 +- 0.03)", sg_icp));
	bool nc_ok = true;
	std::string nc_detail;
	for (int ni = 1; ni < 3; ++ni) {
		const double cqr = std::abs(icp[ni][1][1].mean() - 0.9), tob = std::abs(icp[ni][0][1].mean() - 0.9);
		nc_ok = nc_ok && cqr <= tob;
		nc_detail += fmt("%s |ICP-0.9| cqr %.4f tobit %.4f; ", std::string(to_string(kNoises[ni])).c_str(), cqr, tob);
	}
	add_verdict(run, "t3-cqr-non-censored", nc_ok, nc_detail);
	run.wall_seconds = seconds_since(t0);
	return run;
}

// ---------------------------------------------------------------------- t4

namespace {

const char* const kT4Models[] = {"tl-linear", "c-linear", "c-reg-linear", "c-lstm"};
constexpr std::size_t kT4LinearModels = 3;
constexpr std::size_t kLags = 7;

struct IntervalOnSplit {
	std::vector<double> val_lower, val_upper, test_lower, test_upper;
};

// Fits the 0.05 and 0.95 quantile nets of a right-censored problem through the
// mirror wrapper; learning rate chosen on the validation loss.
IntervalOnSplit fit_interval(const ModelRecipe& recipe, const DatasetSplit& sp, const std::string& stage,
                             std::uint64_t master, const TrainConfig& base) {
	const CensoredDataset m_train = mirror(sp.train), m_val = mirror(sp.val);
	IntervalOnSplit out;
	for (double theta : {0.05, 0.95}) {
		const std::string leaf = path({stage, "theta" + num(theta)});
		const auto init = InitScheme::standard_normal(derive_seed(master, leaf + "/init"));
		const Net initial = build_net(recipe, sp.train.n_features, init);
		TrainConfig cfg = base;
		cfg.seed = derive_seed(master, leaf + "/fit");
		LossSpec loss;
		loss.kind = recipe.loss;
		loss.theta = normalize_level(1.0 - theta);
		const auto f = fit_with_lr_grid([&] { return initial; }, loss, m_train, m_val, cfg);
		const Net wrapped = make_mirror(f.net, theta);
		auto& lo_or_hi_val = theta < 0.5 ? out.val_lower : out.val_upper;
		auto& lo_or_hi_test = theta < 0.5 ? out.test_lower : out.test_upper;
		lo_or_hi_val = wrapped->predict_all(sp.val);
		lo_or_hi_test = wrapped->predict_all(sp.test);
	}
	return out;
}

Predictions interval_predictions(std::vector<double> lower, std::vector<double> upper) {
	Predictions p;
	p.interval = IntervalPrediction{std::move(lower), std::move(upper)};
	return p;
}

// Lagged, split and rescaled by the train-observed mean.
DatasetSplit prepare_series(const CensoredDataset& series, bool impute) {
	DatasetSplit sp = split(lag_dataset(series, kLags), SplitScheme::consecutive_thirds());
	if (impute) {
		const double ratio = latent_mean_ratio(sp.train);
		sp.train = impute_thresholds(ratio, sp.train);
		sp.val = impute_thresholds(ratio, sp.val);
		sp.test = impute_thresholds(ratio, sp.test);
	}
	const double scale = mean(sp.train.y);
	sp.train = rescale(sp.train, scale);
	sp.val = rescale(sp.val, scale);
	sp.test = rescale(sp.test, scale);
	return sp;
}

} // namespace

TableRun replicate_t4_synthetic(const ReplicateOptions& opts) {
	const auto t0 = std::chrono::steady_clock::now();
	const std::size_t reps = replicates_or(opts, opts.full_grid ? 10 : 3);
	const std::size_t n_inits = opts.full_grid ? 10 : 3;
	std::vector<double> gammas = opts.full_grid ? std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}
	                                            : std::vector<double>{0.0, 0.3, 0.6, 0.9};
	const double c_ranges[3][2] = {{0.01, 0.33}, {0.34, 0.66}, {0.67, 0.99}};
	const double alphas[4] = {0.1, 0.2, 0.3, 0.4};
	const std::size_t n_models = std::size(kT4Models);
	// The LSTM dominates the cost of the partial grid, so the reduced grid keeps the linear models only.
	const std::size_t n_partial_models = opts.full_grid ? n_models : kT4LinearModels;
	TableRun run;
	run.table = "t4-synthetic";
	TrainConfig base;

	// Partial censoring of a synthetic daily series.
	const auto series = gen_daily_series(730, 60.0, 0.3, 0.7, 0.15, derive_seed(opts.seed, "t4/partial/series"));
	struct PartialCell {
		EvalReport report[2];
		std::size_t selected = 0;
		bool fallback = false;
	};
	const std::size_t n_partial = gammas.size() * 3 * reps * n_partial_models;
	std::vector<PartialCell> partial(n_partial);
	parallel_for(n_partial, opts.jobs, [&](std::size_t k) {
		const std::size_t m = k % n_partial_models, r = (k / n_partial_models) % reps, c = (k / (n_partial_models * reps)) % 3,
		                  g = k / (n_partial_models * reps * 3);
		const std::string data_stage =
		    path({"t4", "partial", "g" + std::to_string(g), "c" + std::to_string(c), "rep" + std::to_string(r)});
		const auto censored = censor_partial(series, gammas[g], c_ranges[c][0], c_ranges[c][1],
		                                     derive_seed(opts.seed, data_stage + "/censor"));
		const DatasetSplit sp = prepare_series(censored, true);
		const auto recipe = parse_model(kT4Models[m]);
		std::vector<IntervalOnSplit> fits;
		std::vector<IntervalCandidate> cands;
		for (std::size_t i = 0; i < n_inits; ++i) {
			fits.push_back(
			    fit_interval(recipe, sp, path({data_stage, recipe.name, "init" + std::to_string(i)}), opts.seed, base));
			const auto iv = interval_metrics(fits.back().val_lower, fits.back().val_upper, *sp.val.y_star);
			cands.push_back({iv.icp, iv.mil});
		}
		const auto sel = select_initialization(cands, mean(sp.train.y));
		const auto preds = interval_predictions(fits[sel.index].test_lower, fits[sel.index].test_upper);
		auto& cell = partial[k];
		cell.report[0] = subset_report(preds, sp.test, Subset::all_test);
		cell.report[1] = subset_report(preds, sp.test, Subset::non_censored_test);
		cell.selected = sel.index;
		cell.fallback = sel.fallback;
	});

	// Complete censoring by fleet reduction on a synthetic trip table.
	const auto trips = gen_trip_table(600, 60, 0.7, 0.3, derive_seed(opts.seed, "t4/fleet/trips"));
	const std::size_t n_fleet = 4 * reps * n_models;
	std::vector<EvalReport> fleet(n_fleet);
	parallel_for(n_fleet, opts.jobs, [&](std::size_t k) {
		const std::size_t m = k % n_models, r = (k / n_models) % reps, a = k / (n_models * reps);
		const std::string data_stage = path({"t4", "fleet", "a" + std::to_string(a), "rep" + std::to_string(r)});
		const auto censored = censor_fleet(trips, alphas[a], derive_seed(opts.seed, data_stage + "/censor"));
		const DatasetSplit sp = prepare_series(censored, false);
		const auto recipe = parse_model(kT4Models[m]);
		const auto iv = fit_interval(recipe, sp, path({data_stage, recipe.name}), opts.seed, base);
		fleet[k] = subset_report(interval_predictions(iv.test_lower, iv.test_upper), sp.test, Subset::all_test);
	});

	std::ostringstream csv;
	csv << "scheme,gamma,c1,c2,alpha,replicate,model,subset,n,icp,mil,selected_init,fallback\n";
	// partial: [g][c][model][subset]
	std::vector<MeanAcc> p_icp(gammas.size() * 3 * n_partial_models * 2), p_mil(p_icp.size());
	auto p_index = [&](std::size_t g, std::size_t c, std::size_t m, int s) {
		return ((g * 3 + c) * n_partial_models + m) * 2 + static_cast<std::size_t>(s);
	};
	for (std::size_t k = 0; k < n_partial; ++k) {
		const std::size_t m = k % n_partial_models, r = (k / n_partial_models) % reps, c = (k / (n_partial_models * reps)) % 3,
		                  g = k / (n_partial_models * reps * 3);
		for (int s = 0; s < 2; ++s) {
			const auto& rep = partial[k].report[s];
			p_icp[p_index(g, c, m, s)].add(*rep.icp);
			p_mil[p_index(g, c, m, s)].add(*rep.mil);
			csv << "partial," << num(gammas[g]) << ',' << num(c_ranges[c][0]) << ',' << num(c_ranges[c][1]) << ",,"
			    << r << ',' << kT4Models[m] << ',' << to_string(rep.subset) << ',' << rep.n << ',' << num(rep.icp)
			    << ',' << num(rep.mil) << ',' << partial[k].selected << ',' << (partial[k].fallback ? 1 : 0) << '\n';
		}
	}
	std::vector<MeanAcc> f_icp(4 * n_models), f_mil(4 * n_models);
	for (std::size_t k = 0; k < n_fleet; ++k) {
		const std::size_t m = k % n_models, r = (k / n_models) % reps, a = k / (n_models * reps);
		const auto& rep = fleet[k];
		f_icp[a * n_models + m].add(*rep.icp);
		f_mil[a * n_models + m].add(*rep.mil);
		csv << "fleet,,,," << num(alphas[a]) << ',' << r << ',' << kT4Models[m] << ',' << to_string(rep.subset) << ','
		    << rep.n << ',' << num(rep.icp) << ',' << num(rep.mil) << ",,\n";
	}
	run.raw_csv = csv.str();

	std::ostringstream out;
	out << "Directional replication on synthetic stand-in data (values are not comparable to the published ones)\n\n";
	out << "Partial censoring of a synthetic daily series: |ICP - 0.9| and MIL (series units), mean over " << reps
	    << " censorings, " << n_inits << " initializations each\n";
	out << fmt("%-5s %-11s %-13s | %8s %8s | %8s %8s\n", "gamma", "c-range", "model", "dICP", "MIL", "dICP nc",
	           "MIL nc");
	const double scale_note = mean(series);
	for (std::size_t g = 0; g < gammas.size(); ++g)
		for (std::size_t c = 0; c < 3; ++c)
			for (std::size_t m = 0; m < n_partial_models; ++m) {
				out << fmt("%-5.1f %-11s %-13s | %8.3f %8.3f | %8.3f %8.3f\n", gammas[g],
				           m == 0 ? fmt("%.2f-%.2f", c_ranges[c][0], c_ranges[c][1]).c_str() : "", kT4Models[m],
				           std::abs(p_icp[p_index(g, c, m, 0)].mean() - 0.9), p_mil[p_index(g, c, m, 0)].mean(),
				           std::abs(p_icp[p_index(g, c, m, 1)].mean() - 0.9), p_mil[p_index(g, c, m, 1)].mean());
			}
	out << fmt("(MIL is in units of the train-observed mean; series mean %.1f)\n", scale_note);
	out << "\nComplete censoring by fleet reduction: test ICP and MIL, mean +- sd over " << reps << " censorings\n";
	out << fmt("%-13s", "model");
	for (double a : alphas) out << fmt(" | alpha=%-3.0f%% %9s", 100 * a, "");
	out << '\n';
	for (std::size_t m = 0; m < n_models; ++m) {
		out << fmt("%-13s", kT4Models[m]);
		for (std::size_t a = 0; a < 4; ++a) {
			const auto& i = f_icp[a * n_models + m];
			const auto& l = f_mil[a * n_models + m];
			out << fmt(" | %.3f+-%.2f %5.2f", i.mean(), i.sd(), l.mean());
		}
		out << '\n';
	}
	run.rendered = out.str();

	// Censorship-aware linear (index 1) vs tilted loss (index 0).
	bool partial_ok = true;
	std::string partial_detail;
	for (std::size_t g = 0; g < gammas.size(); ++g) {
		if (gammas[g] < 0.3 - 1e-12) continue;
		std::size_t wins = 0;
		for (std::size_t c = 0; c < 3; ++c) {
			bool both = true;
			for (int s = 0; s < 2; ++s) {
				const double aware = std::abs(p_icp[p_index(g, c, 1, s)].mean() - 0.9);
				const double unaware = std::abs(p_icp[p_index(g, c, 0, s)].mean() - 0.9);
				both = both && aware <= unaware;
			}
			if (both) ++wins;
		}
		partial_ok = partial_ok && wins >= 2;
		partial_detail += fmt("gamma %.1f: %zu/3; ", gammas[g], wins);
	}
	add_verdict(run, "t4-partial-aware-icp", partial_ok,
	            partial_detail + "c-linear |ICP-0.9| <= tl-linear on both subsets for >= 2 of 3 c-ranges");

	bool mono = true;
	std::string mono_detail;
	for (std::size_t m = 0; m < n_models; ++m) {
		mono_detail += std::string(kT4Models[m]) + " [";
		for (std::size_t a = 0; a < 4; ++a) {
			mono_detail += fmt(a ? " %.3f" : "%.3f", f_icp[a * n_models + m].mean());
			if (a > 0 && !(f_icp[a * n_models + m].mean() < f_icp[(a - 1) * n_models + m].mean())) mono = false;
		}
		mono_detail += "] ";
	}
	add_verdict(run, "t4-fleet-icp-decreasing", mono, mono_detail);
	run.wall_seconds = seconds_since(t0);
	return run;
}

std::vector<std::string> known_tables() { return {"t1", "t2", "t3", "t4-synthetic"}; }

TableRun replicate(std::string_view table, const ReplicateOptions& opts) {
	if (table == "t1") return replicate_t1(opts);
	if (table == "t2") return replicate_t2(opts);
	if (table == "t3") return replicate_t3(opts);
	if (table == "t4-synthetic") return replicate_t4_synthetic(opts);
	throw ConfigError("unknown table '" + std::string(table) + "' (expected t1, t2, t3 or t4-synthetic)");
}

} // namespace cqr
