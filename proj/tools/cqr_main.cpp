// cqr: generate censored datasets, fit quantile nets, evaluate them and
// replicate the published tables.

#include "cqr/datagen.hpp"
#include "cqr/error.hpp"
#include "cqr/experiments.hpp"
#include "cqr/io.hpp"
#include "cqr/metrics.hpp"
#include "cqr/rng.hpp"
#include "cqr/tobit.hpp"
#include "cqr/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cqr;

namespace {

struct Globals {
	std::uint64_t seed = 42;
	std::string out_dir = "out";
	std::size_t jobs = 1;
	bool force = false;
	std::string config;
};

std::string hex64(std::uint64_t v) {
	char buf[17];
	std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
	return buf;
}

// Fills options that were not given on the command line from a JSON object
// keyed by long option name. Command-line values always win.
void apply_config(CLI::App& app, const json& section) {
	if (!section.is_object()) return;
	for (CLI::Option* opt : app.get_options()) {
		if (opt->count() > 0 || opt->get_lnames().empty()) continue;
		const std::string& key = opt->get_lnames().front();
		if (!section.contains(key)) continue;
		const json& v = section[key];
		auto text = [](const json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
		if (v.is_array()) {
			for (const auto& item : v) opt->add_result(text(item));
		} else {
			opt->add_result(text(v));
		}
		opt->run_callback();
	}
}

json manifest(const std::vector<std::string>& argv, const CLI::App& app, const Globals& g, const json& seed_paths) {
	const std::string effective = app.config_to_str(true, false);
	return {{"command", argv},
	        {"config_hash", hex64(fnv1a64(effective))},
	        {"effective_config", effective},
	        {"seed", g.seed},
	        {"seed_paths", seed_paths}};
}

void write_json(const fs::path& p, const json& doc) { io::atomic_write(p, doc.dump(2) + "\n"); }

std::vector<double> parse_list(const std::vector<std::string>& items) {
	std::vector<double> out;
	for (const auto& s : items) out.push_back(io::parse_number(s));
	return out;
}

std::string level_tag(double theta) { return io::format_number(normalize_level(theta)); }

// ------------------------------------------------------------------ generate

struct GenerateArgs {
	std::string synthetic;
	std::size_t n = 1000;
	std::string mixture = "exact";
	std::vector<std::string> thetas{"0.05", "0.5", "0.95"};
	bool zero_noise = false;
	std::string series;
	bool synthetic_series = false;
	bool synthetic_trips = false;
	std::size_t days = 730;
	std::size_t vehicles = 60;
	double rate = 0.7;
	std::string censor = "none";
	double gamma = 0.0, c1 = 0.01, c2 = 0.33, alpha = 0.1;
	std::string name = "dataset";
};

int cmd_generate(const GenerateArgs& a, const Globals& g, const std::vector<std::string>& argv, const CLI::App& app) {
	const int sources = !a.synthetic.empty() + !a.series.empty() + a.synthetic_series + a.synthetic_trips;
	if (sources != 1) throw ConfigError("choose exactly one of --synthetic, --series, --synthetic-series, --synthetic-trips");
	const std::string data_path = "generate/data", censor_path = "generate/censor";
	CensoredDataset ds;
	if (!a.synthetic.empty()) {
		if (a.censor != "none") throw ConfigError("synthetic regression data is censored at zero by construction");
		SyntheticSpec spec;
		spec.noise = parse_noise(a.synthetic);
		spec.n = a.n;
		spec.seed = derive_seed(g.seed, data_path);
		spec.thetas = parse_list(a.thetas);
		if (a.mixture == "closed-form") {
			spec.mixture = MixtureQuantile::closed_form;
		} else if (a.mixture != "exact") {
			throw ConfigError("--mixture must be exact or closed-form");
		}
		spec.zero_noise = a.zero_noise;
		ds = gen_synthetic(spec);
	} else if (a.synthetic_trips) {
		const auto trips = gen_trip_table(a.days, a.vehicles, a.rate, 0.3, derive_seed(g.seed, data_path));
		if (a.censor != "fleet") throw ConfigError("a trip table is censored with --censor fleet");
		ds = censor_fleet(trips, a.alpha, derive_seed(g.seed, censor_path));
	} else {
		std::vector<double> counts;
		if (a.synthetic_series) {
			counts = gen_daily_series(a.days, 60.0, 0.3, 0.7, 0.15, derive_seed(g.seed, data_path));
		} else {
			counts = io::read_daily_series_csv(fs::path(a.series)).counts;
		}
		if (a.censor == "fleet") throw ConfigError("fleet censoring needs --synthetic-trips");
		const double gamma = a.censor == "partial" ? a.gamma : 0.0;
		ds = censor_partial(counts, gamma, a.c1, a.c2, derive_seed(g.seed, censor_path));
	}
	validate(ds);

	const fs::path out(g.out_dir);
	fs::create_directories(out);
	const fs::path csv = out / (a.name + ".csv");
	io::atomic_write(csv, io::dataset_csv(ds));
	json outputs = {csv.filename().string()};
	if (!ds.true_quantiles.empty()) {
		const fs::path truth = out / (a.name + ".truth.csv");
		io::atomic_write(truth, io::truth_csv(ds));
		outputs.push_back(truth.filename().string());
	}
	json m = manifest(argv, app, g, {{"data", data_path}, {"censor", censor_path}});
	m["outputs"] = outputs;
	m["stats"] = {{"rows", ds.size()},
	              {"censored", ds.censored_count()},
	              {"censored_fraction", ds.censored_fraction()},
	              {"side", ds.side == Side::left ? "left" : "right"}};
	write_json(out / (a.name + ".manifest.json"), m);
	std::cout << "wrote " << csv.string() << " (" << ds.size() << " rows, censored fraction "
	          << io::format_number(ds.censored_fraction()) << ")\n";
	return 0;
}

// ------------------------------------------------------- data preparation

struct PrepSettings {
	std::string split = "random";
	std::size_t lags = 7;
	std::uint64_t split_seed = 0;
};

struct Prepared {
	DatasetSplit split;
	// Unscaled test split for scoring in data units.
	CensoredDataset test_raw;
	double scale = 1.0;
	double impute_ratio = 1.0;
	bool series = false;
};

CensoredDataset load_dataset(const fs::path& file) {
	auto ds = io::read_dataset_csv(file);
	fs::path truth = file;
	truth.replace_extension(".truth.csv");
	if (fs::exists(truth)) {
		std::ifstream in(truth);
		io::read_truth_csv(in, ds);
	}
	return ds;
}

// Bare series get lag covariates, threshold imputation (when latent values
// allow it) and scaling by the train-observed mean.
Prepared prepare(const CensoredDataset& loaded, const PrepSettings& s) {
	Prepared p;
	p.series = loaded.n_features == 0;
	const CensoredDataset ds = p.series ? lag_dataset(loaded, s.lags) : loaded;
	SplitScheme scheme;
	if (s.split == "thirds") {
		scheme = SplitScheme::consecutive_thirds();
	} else if (s.split == "random") {
		scheme = SplitScheme::random(0.62, 0.15, 0.23, s.split_seed);
	} else {
		throw ConfigError("--split must be random or thirds");
	}
	p.split = split(ds, scheme);
	const bool open_thresholds = std::any_of(ds.tau.begin(), ds.tau.end(), [](double t) { return std::isinf(t); });
	if (open_thresholds) {
		if (!ds.y_star) throw UsageError("rows without thresholds need latent values for imputation");
		p.impute_ratio = latent_mean_ratio(p.split.train);
		p.split.train = impute_thresholds(p.impute_ratio, p.split.train);
		p.split.val = impute_thresholds(p.impute_ratio, p.split.val);
		p.split.test = impute_thresholds(p.impute_ratio, p.split.test);
	}
	p.test_raw = p.split.test;
	if (p.series) {
		p.scale = mean(p.split.train.y);
		p.split.train = rescale(p.split.train, p.scale);
		p.split.val = rescale(p.split.val, p.scale);
		p.split.test = rescale(p.split.test, p.scale);
	}
	return p;
}

// ---------------------------------------------------------------------- fit

struct FitArgs {
	std::string data;
	std::vector<std::string> models{"c-linear"};
	std::vector<std::string> thetas{"0.05", "0.5", "0.95"};
	std::vector<std::string> lrs{"0.01"};
	std::size_t inits = 1;
	std::string init = "ones";
	std::string split = "random";
	std::size_t lags = 7;
	std::size_t patience = 10;
	std::size_t max_epochs = 5000;
	double sigma = 1.0;
};

struct FitCell {
	std::string model;
	double theta;
	std::size_t init;
	double lr;
	std::string file;
};

std::string cell_file(const std::string& model, double theta, std::size_t init, double lr) {
	return model + "__theta-" + level_tag(theta) + "__init-" + std::to_string(init) + "__lr-" + io::format_number(lr) +
	       ".json";
}

int cmd_fit(const FitArgs& a, const Globals& g, const std::vector<std::string>& argv, const CLI::App& app) {
	if (a.data.empty()) throw ConfigError("--data is required");
	const auto loaded = load_dataset(a.data);
	PrepSettings ps;
	ps.split = a.split;
	ps.lags = a.lags;
	ps.split_seed = derive_seed(g.seed, "fit/split");
	const Prepared prep = prepare(loaded, ps);
	const auto& sp = prep.split;
	const Side side = sp.train.side;

	std::vector<FitCell> cells;
	for (const auto& m : a.models) {
		parse_model(m);
		for (double theta : parse_list(a.thetas))
			for (std::size_t k = 0; k < a.inits; ++k)
				for (double lr : parse_list(a.lrs)) cells.push_back({m, theta, k, lr, cell_file(m, theta, k, lr)});
	}
	const fs::path dir = fs::path(g.out_dir) / "fits";
	fs::create_directories(dir);
	std::vector<char> skipped(cells.size(), 0);
	const json base_manifest = manifest(argv, app, g, {{"split", "fit/split"}});

	parallel_for(cells.size(), g.jobs, [&](std::size_t i) {
		const auto& c = cells[i];
		const fs::path target = dir / c.file;
		if (!g.force && fs::exists(target)) {
			skipped[i] = 1;
			return;
		}
		const auto recipe = parse_model(c.model);
		const std::string stage = "fit/" + c.model + "/theta" + level_tag(c.theta) + "/init" + std::to_string(c.init);
		const InitScheme init =
		    a.init == "normal" ? InitScheme::standard_normal(derive_seed(g.seed, stage + "/weights")) : InitScheme::ones();
		if (a.init != "normal" && a.init != "ones") throw ConfigError("--init must be ones or normal");
		TrainConfig cfg;
		cfg.learning_rate = c.lr;
		cfg.patience = a.patience;
		cfg.max_epochs = a.max_epochs;
		cfg.seed = derive_seed(g.seed, stage + "/train");
		cfg.validate();

		FitResult result;
		if (recipe.loss == LossKind::tobit) {
			TobitConfig tc;
			tc.train = cfg;
			tc.sigma = a.sigma;
			tc.side = side;
			tc.init = init;
			result = tobit_fit(sp.train, sp.val, tc);
			result.loss.theta = c.theta;
		} else if (side == Side::right) {
			const auto wrapper = make_mirror(build_net(recipe, sp.train.n_features, init), c.theta);
			const auto& mw = dynamic_cast<const MirrorWrapper&>(*wrapper);
			auto mf = mirror_fit_predict(mw, recipe.loss, sp.train, sp.val, sp.val, cfg);
			result = std::move(mf.inner_fit);
			result.net = mf.wrapped;
			result.loss.theta = c.theta;
		} else {
			LossSpec loss;
			loss.kind = recipe.loss;
			loss.theta = c.theta;
			result = fit(build_net(recipe, sp.train.n_features, init), loss, sp.train, sp.val, cfg);
		}
		json doc = {{"cell", {{"model", c.model}, {"theta", c.theta}, {"init", c.init}, {"learning_rate", c.lr}}},
		            {"prep",
		             {{"data", a.data},
		              {"split", a.split},
		              {"split_seed", ps.split_seed},
		              {"lags", prep.series ? a.lags : 0},
		              {"scale", prep.scale},
		              {"impute_ratio", prep.impute_ratio}}},
		            {"fit", to_json(result)},
		            {"manifest", base_manifest}};
		doc["manifest"]["seed_paths"]["init"] = stage + "/weights";
		doc["manifest"]["seed_paths"]["train"] = stage + "/train";
		write_json(target, doc);
	});
	const auto n_skipped = static_cast<std::size_t>(std::count(skipped.begin(), skipped.end(), 1));
	std::cout << "fitted " << cells.size() - n_skipped << " cells, skipped " << n_skipped << " existing (of "
	          << cells.size() << ") in " << dir.string() << "\n";
	return 0;
}

// ----------------------------------------------------------------- evaluate

struct EvaluateArgs {
	std::string data;
	std::string fits;
	std::string subset = "both";
	double lower = 0.05;
	double upper = 0.95;
};

int cmd_evaluate(const EvaluateArgs& a, const Globals& g, const std::vector<std::string>& argv, const CLI::App& app) {
	if (a.data.empty()) throw ConfigError("--data is required");
	const fs::path dir = a.fits.empty() ? fs::path(g.out_dir) / "fits" : fs::path(a.fits);
	if (!fs::is_directory(dir)) throw IoError("no fit directory at " + dir.string());
	std::vector<fs::path> files;
	for (const auto& e : fs::directory_iterator(dir)) {
		if (e.path().extension() == ".json") files.push_back(e.path());
	}
	std::sort(files.begin(), files.end());
	if (files.empty()) throw IoError("no fit results in " + dir.string());

	std::vector<Subset> subsets;
	if (a.subset == "both") {
		subsets = {Subset::all_test, Subset::non_censored_test};
	} else {
		subsets = {parse_subset(a.subset)};
	}
	const auto loaded = load_dataset(a.data);
	const std::string dataset_name = fs::path(a.data).stem().string();

	// Predictions in data units, grouped by model/init/lr then theta.
	std::map<std::string, std::map<double, std::vector<double>>> groups;
	std::optional<Prepared> prep;
	for (const auto& f : files) {
		const json doc = json::parse(io::read_file(f));
		const auto& cell = doc.at("cell");
		const auto& pj = doc.at("prep");
		if (!prep) {
			PrepSettings ps;
			ps.split = pj.at("split").get<std::string>();
			ps.lags = std::max<std::size_t>(pj.at("lags").get<std::size_t>(), 1);
			ps.split_seed = pj.at("split_seed").get<std::uint64_t>();
			prep = prepare(loaded, ps);
		}
		const FitResult fit = fit_from_json(doc.at("fit"));
		const double theta = normalize_level(cell.at("theta").get<double>());
		std::vector<double> pred;
		if (fit.loss.kind == LossKind::tobit) {
			pred = tobit_quantiles(tobit_model(fit), prep->split.test, theta);
		} else {
			pred = fit.net->predict_all(prep->split.test);
		}
		for (auto& v : pred) v *= prep->scale;
		const std::string key = cell.at("model").get<std::string>() + "/init" +
		                        std::to_string(cell.at("init").get<std::size_t>()) + "/lr" +
		                        io::format_number(cell.at("learning_rate").get<double>());
		groups[key][theta] = std::move(pred);
	}

	const CensoredDataset& test = prep->test_raw;
	std::ostringstream csv;
	csv << report_csv_header() << '\n';
	json reports = json::array();
	auto emit = [&](const std::string& model, const std::string& target, const EvalReport& r) {
		csv << report_csv_row(dataset_name, model, target, r) << '\n';
		json j = to_json(r);
		j["dataset"] = dataset_name;
		j["model"] = model;
		j["target"] = target;
		reports.push_back(j);
	};
	const double lo = normalize_level(a.lower), hi = normalize_level(a.upper);
	for (const auto& [key, by_theta] : groups) {
		for (const auto& [theta, pred] : by_theta) {
			if (!find_true_quantiles(test, theta)) continue;
			Predictions p;
			p.point = PointPrediction{theta, clamp_to_threshold(pred, test)};
			for (Subset s : subsets) emit(key, "q" + level_tag(theta), subset_report(p, test, s));
		}
		if (by_theta.count(lo) && by_theta.count(hi)) {
			if (!test.y_star) {
				throw UsageError("interval metrics (ICP/MIL) need latent values y_star, which " + a.data +
				                 " does not carry");
			}
			Predictions p;
			p.interval = IntervalPrediction{by_theta.at(lo), by_theta.at(hi)};
			for (Subset s : subsets) emit(key, "interval" + level_tag(lo) + "-" + level_tag(hi), subset_report(p, test, s));
		}
	}
	if (reports.empty()) throw UsageError("nothing to evaluate: no ground-truth quantiles and no interval pair");
	const fs::path out(g.out_dir);
	fs::create_directories(out);
	io::atomic_write(out / "reports.csv", csv.str());
	json doc = {{"reports", reports}, {"manifest", manifest(argv, app, g, json::object())}};
	write_json(out / "reports.json", doc);
	std::cout << "wrote " << reports.size() << " report rows to " << (out / "reports.csv").string() << "\n";
	return 0;
}

// ---------------------------------------------------------------- replicate

struct ReplicateArgs {
	std::string table;
	std::size_t replicates = 0;
	bool zero_noise = false;
	bool full_grid = false;
};

int cmd_replicate(const ReplicateArgs& a, const Globals& g, const std::vector<std::string>& argv, const CLI::App& app) {
	ReplicateOptions opts;
	opts.seed = g.seed;
	opts.jobs = g.jobs;
	if (a.replicates > 0) opts.replicates = a.replicates;
	opts.zero_noise = a.zero_noise;
	opts.full_grid = a.full_grid;
	const TableRun run = replicate(a.table, opts);

	const fs::path dir = fs::path(g.out_dir) / run.table;
	fs::create_directories(dir);
	io::atomic_write(dir / "raw.csv", run.raw_csv);
	io::atomic_write(dir / "table.txt", run.rendered);
	json verdicts = json::array();
	for (const auto& v : run.verdicts) verdicts.push_back({{"id", v.id}, {"pass", v.pass}, {"detail", v.detail}});
	write_json(dir / "verdicts.json", verdicts);
	json m = manifest(argv, app, g, {{"root", run.table}});
	m["outputs"] = {"raw.csv", "table.txt", "verdicts.json"};
	write_json(dir / "manifest.json", m);

	std::cout << run.rendered << '\n';
	for (const auto& v : run.verdicts) std::cout << (v.pass ? "PASS " : "FAIL ") << v.id << ": " << v.detail << '\n';
	std::cout << "wall " << io::format_number(std::round(run.wall_seconds * 10) / 10) << " s, outputs in "
	          << dir.string() << '\n';
	return run.passed() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
	CLI::App app{"Censored quantile regression networks: data generation, fitting, evaluation, table replication"};
	app.require_subcommand(1);
	app.option_defaults()->always_capture_default();
	app.fallthrough();
	Globals g;
	app.add_option("--seed", g.seed, "master seed");
	app.add_option("--out-dir", g.out_dir, "output directory");
	app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
	app.add_flag("--force", g.force, "overwrite existing fit cells");
	app.add_option("--config", g.config, "JSON config file; command-line flags override it")->check(CLI::ExistingFile);

	GenerateArgs ga;
	auto* gen = app.add_subcommand("generate", "write a censored dataset and its manifest");
	gen->add_option("--synthetic", ga.synthetic, "noise: standard_gaussian, heteroskedastic, gaussian_mixture");
	gen->add_option("--n", ga.n, "rows for synthetic data");
	gen->add_option("--mixture", ga.mixture, "mixture ground truth: exact or closed-form");
	gen->add_option("--thetas", ga.thetas, "ground-truth quantile levels")->delimiter(',');
	gen->add_flag("--zero-noise", ga.zero_noise, "noiseless synthetic data");
	gen->add_option("--series", ga.series, "daily series CSV (date,count)");
	gen->add_flag("--synthetic-series", ga.synthetic_series, "use the built-in synthetic daily series");
	gen->add_flag("--synthetic-trips", ga.synthetic_trips, "use the built-in synthetic trip table");
	gen->add_option("--days", ga.days, "days for synthetic series / trips");
	gen->add_option("--vehicles", ga.vehicles, "vehicles in the synthetic trip table");
	gen->add_option("--rate", ga.rate, "trips per vehicle per day");
	gen->add_option("--censor", ga.censor, "none, partial or fleet");
	gen->add_option("--gamma", ga.gamma, "share of censored days (partial)");
	gen->add_option("--c1", ga.c1, "lower bound of the censoring depth (partial)");
	gen->add_option("--c2", ga.c2, "upper bound of the censoring depth (partial)");
	gen->add_option("--alpha", ga.alpha, "share of removed vehicles (fleet)");
	gen->add_option("--name", ga.name, "output base name");

	FitArgs fa;
	auto* fitc = app.add_subcommand("fit", "fit one result file per (model, theta, init, lr) cell");
	fitc->add_option("--data", fa.data, "dataset CSV written by generate");
	fitc->add_option("--models", fa.models, "comma separated model recipes")->delimiter(',');
	fitc->add_option("--thetas", fa.thetas, "quantile levels")->delimiter(',');
	fitc->add_option("--lrs", fa.lrs, "learning rates, one cell each")->delimiter(',');
	fitc->add_option("--inits", fa.inits, "initializations per cell");
	fitc->add_option("--init", fa.init, "ones or normal");
	fitc->add_option("--split", fa.split, "random (62/15/23) or thirds (consecutive)");
	fitc->add_option("--lags", fa.lags, "lag window for bare series");
	fitc->add_option("--patience", fa.patience, "early-stopping patience");
	fitc->add_option("--max-epochs", fa.max_epochs, "epoch cap");
	fitc->add_option("--sigma", fa.sigma, "Tobit noise scale");

	EvaluateArgs ea;
	auto* evalc = app.add_subcommand("evaluate", "score fit results on the test split");
	evalc->add_option("--data", ea.data, "dataset CSV the fits were trained on");
	evalc->add_option("--fits", ea.fits, "fit directory (default <out-dir>/fits)");
	evalc->add_option("--subset", ea.subset, "all, non_censored or both");
	evalc->add_option("--lower", ea.lower, "lower interval level");
	evalc->add_option("--upper", ea.upper, "upper interval level");

	ReplicateArgs ra;
	auto* rep = app.add_subcommand("replicate", "rerun a published table with verdicts");
	rep->add_option("table", ra.table, "t1, t2, t3 or t4-synthetic")->required();
	rep->add_option("--replicates", ra.replicates, "replicate seeds (table default when 0)");
	rep->add_flag("--zero-noise", ra.zero_noise, "t2 with noiseless data");
	rep->add_flag("--full-grid", ra.full_grid, "t4 with the published grid");

	std::vector<std::string> args(argv, argv + argc);
	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		return app.exit(e);
	}

	try {
		CLI::App* sub = app.get_subcommands().front();
		if (!g.config.empty()) {
			const json cfg = json::parse(io::read_file(g.config));
			apply_config(app, cfg);
			if (cfg.contains(sub->get_name())) apply_config(*sub, cfg[sub->get_name()]);
		}
		if (sub == gen) return cmd_generate(ga, g, args, app);
		if (sub == fitc) return cmd_fit(fa, g, args, app);
		if (sub == evalc) return cmd_evaluate(ea, g, args, app);
		return cmd_replicate(ra, g, args, app);
	} catch (const std::exception& e) {
		std::cerr << "error: " << e.what() << '\n';
		return 2;
	}
}
