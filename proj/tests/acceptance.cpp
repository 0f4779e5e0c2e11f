// Acceptance run: one PASS/FAIL line per criterion. Table criteria are
// recomputed here from the raw per-replicate CSVs rather than taken from the
// harness's own verdicts.

#include "cqr/datagen.hpp"
#include "cqr/experiments.hpp"
#include "cqr/io.hpp"
#include "gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

using namespace cqr;

namespace {

// Pinned tolerances.
constexpr double kCensorRate = 0.30, kCensorTol = 0.03, kCensorSeconds = 1.0;
constexpr double kTable1Tol = 0.05, kTable1Seconds = 5.0;
constexpr double kMedianR2 = 0.99, kMedianMae = 0.05, kTlLo = 0.85, kTlHi = 0.95, kTable2Seconds = 180.0;
constexpr double kHardTol = 0.15;
constexpr double kTobitMil = 3.290, kTobitMilTol = 0.005, kTobitIcp = 0.909, kTobitIcpTol = 0.03;
constexpr double kTable3Seconds = 120.0;
constexpr double kGradTol = 1e-5, kGradSeconds = 30.0;
constexpr int kGradConfigs = 100;
constexpr double kTruthIcp = 0.90, kTruthTol = 0.02;
constexpr double kFleetRatio = 0.60, kFleetTol = 0.02;
constexpr double kTable4Seconds = 600.0;

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
	std::printf("%s %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
	std::fflush(stdout);
	if (!pass) ++failures;
}

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
	char buf[512];
	std::snprintf(buf, sizeof buf, f, a, b, c, d);
	return buf;
}

struct Table {
	std::vector<std::string> header;
	std::vector<std::vector<std::string>> rows;

	std::size_t col(const std::string& name) const {
		for (std::size_t i = 0; i < header.size(); ++i)
			if (header[i] == name) return i;
		throw std::runtime_error("missing column " + name);
	}
};

Table parse(const std::string& csv) {
	Table t;
	std::istringstream in(csv);
	std::string line;
	std::getline(in, line);
	t.header = io::split_csv_line(line);
	while (std::getline(in, line))
		if (!line.empty()) t.rows.push_back(io::split_csv_line(line));
	return t;
}

// Mean of `value` over rows whose key columns match.
struct Means {
	std::map<std::vector<std::string>, std::pair<double, int>> acc;

	Means(const Table& t, const std::vector<std::string>& keys, const std::string& value) {
		std::vector<std::size_t> kc;
		for (const auto& k : keys) kc.push_back(t.col(k));
		const std::size_t vc = t.col(value);
		for (const auto& r : t.rows) {
			std::vector<std::string> key;
			for (std::size_t c : kc) key.push_back(r[c]);
			auto& a = acc[key];
			a.first += io::parse_number(r[vc]);
			a.second += 1;
		}
	}
	double operator()(const std::vector<std::string>& key) const {
		auto it = acc.find(key);
		if (it == acc.end()) {
			std::string k;
			for (const auto& s : key) k += s + "/";
			throw std::runtime_error("no rows for " + k);
		}
		return it->second.first / it->second.second;
	}
};

const std::vector<std::string> kNoises{"standard_gaussian", "heteroskedastic", "gaussian_mixture"};
const std::vector<std::string> kThetas{"0.05", "0.5", "0.95"};

void criterion1() {
	auto t0 = Clock::now();
	double pooled = 0.0;
	std::string per;
	for (Noise noise : {Noise::standard_gaussian, Noise::heteroskedastic, Noise::gaussian_mixture}) {
		double sum = 0.0;
		for (std::uint64_t s = 0; s < 20; ++s) {
			SyntheticSpec spec;
			spec.noise = noise;
			spec.seed = derive_seed(42, "acceptance/censoring/" + std::to_string(s));
			sum += gen_synthetic(spec).censored_fraction();
		}
		pooled += sum / 60.0;
		per += std::string(to_string(noise)) + fmt(" %.4f, ", sum / 20.0);
	}
	double secs = since(t0);
	report(1, std::abs(pooled - kCensorRate) <= kCensorTol && secs < kCensorSeconds,
	       fmt("censored fraction pooled over 3 noises x 20 seeds %.4f (0.30 +- 0.03), ", pooled) + "per noise " + per +
	           fmt("%.3f s", secs));
}

void criterion2() {
	auto t0 = Clock::now();
	double worst = 0.0, sg95 = 0.0;
	for (int ni = 0; ni < 3; ++ni) {
		for (int ti = 0; ti < 3; ++ti) {
			const double theta = std::stod(kThetas[ti]);
			double sum = 0.0;
			for (std::uint64_t s = 0; s < 20; ++s) {
				SyntheticSpec spec;
				spec.noise = static_cast<Noise>(ni);
				spec.seed = derive_seed(42, "acceptance/table1/" + std::to_string(s));
				spec.mixture = MixtureQuantile::closed_form;
				sum += zero_quantile_fraction(gen_synthetic(spec), theta);
			}
			const double gap = std::abs(sum / 20.0 - reference::table1[ni][ti]);
			worst = std::max(worst, gap);
			if (ni == 0 && ti == 2) sg95 = sum / 20.0;
		}
	}
	double secs = since(t0);
	report(2, worst <= kTable1Tol && secs < kTable1Seconds,
	       fmt("largest gap to the published zero-quantile shares %.1f pp (<= 5), gaussian 0.95 cell %.1f%%, %.2f s",
	           worst * 100, sg95 * 100, secs));
}

void criteria3and4(const TableRun& t2) {
	Table t = parse(t2.raw_csv);
	Means r2(t, {"noise", "theta", "model", "subset"}, "r2");
	Means mae(t, {"noise", "theta", "model", "subset"}, "mae");

	bool ok = true;
	std::string detail = "c-linear median R2/MAE";
	for (const auto& n : kNoises) {
		double r = r2({n, "0.5", "c-linear", "all"}), a = mae({n, "0.5", "c-linear", "all"});
		ok = ok && r >= kMedianR2 && a <= kMedianMae;
		detail += fmt(" %.4f/%.4f", r, a);
	}
	detail += "; tl-linear median R2";
	for (const auto& n : kNoises) {
		double r = r2({n, "0.5", "tl-linear", "all"});
		ok = ok && r >= kTlLo && r <= kTlHi;
		detail += fmt(" %.4f", r);
	}
	int violations = 0;
	std::string which;
	for (const auto& n : kNoises)
		for (const auto& th : kThetas)
			for (const char* sub : {"all", "non_censored"})
				for (const char* m : {"c-linear", "c-elu"}) {
					double aware = r2({n, th, m, sub}), unaware = r2({n, th, "tl-linear", sub});
					if (!(aware >= unaware)) {
						++violations;
						which += " " + n + "/" + th + "/" + sub + "/" + m + fmt(" %.3f<%.3f", aware, unaware);
					}
				}
	ok = ok && violations == 0 && t2.wall_seconds < kTable2Seconds;
	report(3, ok, detail + fmt("; aware >= unaware violated in %.0f of 36 comparisons", violations) + which +
	                  fmt("; %.1f s", t2.wall_seconds));

	double elu = r2({kNoises[0], "0.05", "c-elu", "all"}), lin = r2({kNoises[0], "0.05", "c-linear", "all"}),
	       tl = r2({kNoises[0], "0.05", "tl-linear", "all"});
	bool order = elu > lin && lin > tl;
	bool close = std::abs(elu - 0.690) <= kHardTol && std::abs(lin - 0.499) <= kHardTol &&
	             std::abs(tl - 0.220) <= kHardTol;
	report(4, order && close,
	       fmt("gaussian theta 0.05 R2 c-elu %.4f c-linear %.4f tl-linear %.4f", elu, lin, tl) +
	           (order ? ", strict order holds" : ", strict order fails") +
	           (close ? ", within 0.15 of published" : ", not within 0.15 of published"));
}

void criterion5(const TableRun& t3) {
	Table t = parse(t3.raw_csv);
	bool mil_ok = true;
	const std::size_t mc = t.col("mil"), modc = t.col("model");
	double lo = 1e9, hi = -1e9;
	for (const auto& r : t.rows)
		if (r[modc] == "tobit") {
			double v = io::parse_number(r[mc]);
			lo = std::min(lo, v);
			hi = std::max(hi, v);
			mil_ok = mil_ok && std::abs(v - kTobitMil) <= kTobitMilTol;
		}
	Means icp(t, {"noise", "model", "subset"}, "icp");
	double sg = icp({kNoises[0], "tobit", "all"});
	bool nc_ok = true;
	std::string nc;
	for (int ni = 1; ni < 3; ++ni) {
		double c = std::abs(icp({kNoises[ni], "c-linear", "non_censored"}) - 0.9);
		double b = std::abs(icp({kNoises[ni], "tobit", "non_censored"}) - 0.9);
		nc_ok = nc_ok && c <= b;
		nc += " " + kNoises[ni] + fmt(" %.4f vs %.4f", c, b);
	}
	bool ok = mil_ok && std::abs(sg - kTobitIcp) <= kTobitIcpTol && nc_ok && t3.wall_seconds < kTable3Seconds;
	report(5, ok, fmt("Tobit MIL range [%.5f, %.5f], Tobit gaussian ICP %.4f, non-censored |ICP-0.9| cqr vs tobit:", lo,
	                  hi, sg) +
	                  nc + fmt("; %.1f s", t3.wall_seconds));
}

void criterion6() {
	auto t0 = Clock::now();
	int cells = 0, bad = 0, configs = 0;
	double worst = 0.0;
	std::uint64_t seed = 5000;
	for (const auto& fam : gradcheck::families())
		for (LossKind kind : {LossKind::tilted, LossKind::censored_nll, LossKind::tobit}) {
			auto o = gradcheck::check(fam, kind, kGradConfigs, kGradTol, ++seed);
			++cells;
			configs += o.configs;
			worst = std::max(worst, o.worst);
			if (o.failures > 0 || o.configs < kGradConfigs) {
				++bad;
				std::printf("  gradient cell %s/%s: %d failures, worst %.2e\n", fam.name.c_str(),
				            std::string(to_string(kind)).c_str(), o.failures, o.worst);
			}
		}
	double secs = since(t0);
	report(6, bad == 0 && secs < kGradSeconds,
	       fmt("%.0f family x loss cells, %.0f configurations, worst relative error %.2e, %.2f s", cells, configs, worst,
	           secs));
}

void criterion7() {
	bool ok = true;
	std::string detail = "true (0.05, 0.95) pair ICP on 1e4 latent draws:";
	for (Noise noise : {Noise::standard_gaussian, Noise::heteroskedastic, Noise::gaussian_mixture}) {
		SyntheticSpec spec;
		spec.noise = noise;
		spec.n = 10000;
		spec.seed = derive_seed(42, "acceptance/truth");
		auto d = gen_synthetic(spec);
		std::size_t in = 0;
		for (std::size_t i = 0; i < d.size(); ++i) {
			double y = (*d.y_star)[i];
			in += y >= latent_quantile(noise, 0.05, d.row(i)) && y <= latent_quantile(noise, 0.95, d.row(i));
		}
		double icp = static_cast<double>(in) / d.size();
		ok = ok && std::abs(icp - kTruthIcp) <= kTruthTol;
		detail += " " + std::string(to_string(noise)) + fmt(" %.4f", icp);
	}
	report(7, ok, detail);
}

void criterion8() {
	auto trips = gen_trip_table(600, 60, 0.7, 0.3, derive_seed(42, "acceptance/trips"));
	auto c = censor_fleet(trips, 0.4, derive_seed(42, "acceptance/fleet"));
	double ratio = mean(c.y) / mean(*c.y_star);
	report(8, std::abs(ratio - kFleetRatio) <= kFleetTol, fmt("mean(y)/mean(y*) at alpha 0.4 = %.4f", ratio));
}

void criterion9(const TableRun& t4) {
	Table t = parse(t4.raw_csv);
	const std::size_t sc = t.col("scheme");
	Table partial{t.header, {}}, fleet{t.header, {}};
	for (const auto& r : t.rows) (r[sc] == "partial" ? partial : fleet).rows.push_back(r);

	Means icp(partial, {"gamma", "c1", "model", "subset"}, "icp");
	std::set<std::string> gammas, c1s;
	for (const auto& r : partial.rows) {
		gammas.insert(r[t.col("gamma")]);
		c1s.insert(r[t.col("c1")]);
	}
	bool partial_ok = true;
	std::string pd;
	for (const auto& g : gammas) {
		if (io::parse_number(g) < 0.3 - 1e-9) continue;
		int wins = 0;
		for (const auto& c : c1s) {
			bool both = true;
			for (const char* sub : {"all", "non_censored"})
				both = both && std::abs(icp({g, c, "c-linear", sub}) - 0.9) <= std::abs(icp({g, c, "tl-linear", sub}) - 0.9);
			wins += both;
		}
		partial_ok = partial_ok && wins >= 2;
		pd += " gamma " + g + fmt(" %.0f/3", wins);
	}

	Means ficp(fleet, {"model", "alpha"}, "icp");
	std::set<std::string> models, alphas;
	for (const auto& r : fleet.rows) {
		models.insert(r[t.col("model")]);
		alphas.insert(r[t.col("alpha")]);
	}
	bool fleet_ok = true;
	std::string fd;
	for (const auto& m : models) {
		double prev = 2.0;
		fd += " " + m;
		for (const auto& a : alphas) {
			double v = ficp({m, a});
			fleet_ok = fleet_ok && v < prev;
			prev = v;
			fd += fmt(" %.3f", v);
		}
	}
	report(9, partial_ok && fleet_ok && t4.wall_seconds < kTable4Seconds,
	       std::string("partial: c-linear no worse than tl-linear on both subsets in") + pd +
	           (partial_ok ? " (holds)" : " (fails)") + "; fleet mean ICP over alpha:" + fd +
	           (fleet_ok ? " (strictly decreasing)" : " (not strictly decreasing)") + fmt("; %.1f s", t4.wall_seconds));
}

void criterion10() {
	namespace fs = std::filesystem;
	const fs::path base = fs::temp_directory_path() / ("cqr_acceptance_" + std::to_string(::getpid()));
	std::string raw[2];
	bool ran = true;
	for (int i = 0; i < 2; ++i) {
		const fs::path dir = base / std::to_string(i);
		const std::string cmd = std::string(CQR_CLI) + " --seed 42 --out-dir " + dir.string() + " replicate t2 > " +
		                        (base / ("log" + std::to_string(i))).string() + " 2>&1";
		fs::create_directories(base);
		int rc = std::system(cmd.c_str());
		// the t2 verdicts may fail (exit 1); only errors (exit 2) break the run
		ran = ran && WIFEXITED(rc) && WEXITSTATUS(rc) <= 1;
		if (fs::exists(dir / "t2" / "raw.csv")) raw[i] = io::read_file(dir / "t2" / "raw.csv");
	}
	fs::remove_all(base);
	bool same = ran && !raw[0].empty() && raw[0] == raw[1];
	report(10, same, fmt("two `replicate t2 --seed 42` runs: raw CSV %.0f bytes, ", static_cast<double>(raw[0].size())) +
	                     (same ? "byte-identical" : "differ or missing"));
}

} // namespace

int main() {
	try {
		criterion1();
		criterion2();
		ReplicateOptions opts;
		criteria3and4(replicate_t2(opts));
		criterion5(replicate_t3(opts));
		criterion6();
		criterion7();
		criterion8();
		criterion9(replicate_t4_synthetic(opts));
		criterion10();
	} catch (const std::exception& e) {
		std::printf("FAIL: acceptance run aborted: %s\n", e.what());
		return 2;
	}
	std::printf("%d of 10 criteria failed\n", failures);
	return failures == 0 ? 0 : 1;
}
