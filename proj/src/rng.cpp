#include "cqr/rng.hpp"

#include "cqr/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace cqr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
	x += 0x9e3779b97f4a7c15ULL;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
	return x ^ (x >> 31);
}

} // namespace

std::uint64_t fnv1a64(std::string_view text) {
	std::uint64_t h = 0xcbf29ce484222325ULL;
	for (unsigned char c : text) {
		h ^= c;
		h *= 0x100000001b3ULL;
	}
	return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage_path) {
	return splitmix64(splitmix64(master) ^ fnv1a64(stage_path));
}

double Rng::uniform() {
	return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
	if (n == 0) throw UsageError("Rng::below requires n > 0");
	const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
	std::uint64_t x;
	do {
		x = engine_();
	} while (x >= limit);
	return x % n;
}

double Rng::normal() {
	// Marsaglia polar method.
	if (has_spare_) {
		has_spare_ = false;
		return spare_;
	}
	double u, v, s;
	do {
		u = 2.0 * uniform() - 1.0;
		v = 2.0 * uniform() - 1.0;
		s = u * u + v * v;
	} while (s >= 1.0 || s == 0.0);
	const double f = std::sqrt(-2.0 * std::log(s) / s);
	spare_ = v * f;
	has_spare_ = true;
	return u * f;
}

std::uint64_t Rng::poisson(double lambda) {
	if (lambda < 0.0 || !std::isfinite(lambda)) throw DomainError("poisson rate must be finite and >= 0");
	if (lambda == 0.0) return 0;
	if (lambda < 30.0) {
		const double limit = std::exp(-lambda);
		std::uint64_t k = 0;
		double p = uniform();
		while (p > limit) {
			++k;
			p *= uniform();
		}
		return k;
	}
	// PTRS transformed rejection (Hormann 1993).
	const double slam = std::sqrt(lambda);
	const double loglam = std::log(lambda);
	const double b = 0.931 + 2.53 * slam;
	const double a = -0.059 + 0.02483 * b;
	const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
	const double vr = 0.9277 - 3.6224 / (b - 2.0);
	for (;;) {
		const double u = uniform() - 0.5;
		const double v = uniform();
		const double us = 0.5 - std::fabs(u);
		const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
		if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
		if (k < 0.0 || (us < 0.013 && v > us)) continue;
		const double lhs = std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b);
		const double rhs = -lambda + k * loglam - std::lgamma(k + 1.0);
		if (lhs <= rhs) return static_cast<std::uint64_t>(k);
	}
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
	if (k > n) throw UsageError("cannot sample more items than available");
	std::vector<std::size_t> pool(n);
	std::iota(pool.begin(), pool.end(), std::size_t{0});
	for (std::size_t i = 0; i < k; ++i) {
		const auto j = i + static_cast<std::size_t>(below(n - i));
		std::swap(pool[i], pool[j]);
	}
	pool.resize(k);
	return pool;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
	return sample_without_replacement(n, n);
}

} // namespace cqr
