#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cqr {

// Child seed for a named stage: splitmix64 finalizer over the master seed
// folded with the FNV-1a hash of the stage path. Adding a new stage path
// never changes existing streams.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage_path);

// 64-bit FNV-1a; stable across platforms, used for seeds and config hashes.
std::uint64_t fnv1a64(std::string_view text);

// Seeded random stream. All variates are produced from the raw 64-bit engine
// output so sequences are identical across standard library implementations.
class Rng {
public:
	explicit Rng(std::uint64_t seed) : engine_(seed) {}

	std::uint64_t next_u64() { return engine_(); }
	// Uniform on [0,1) with 53 random bits.
	double uniform();
	double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
	// Uniform integer in [0, n).
	std::uint64_t below(std::uint64_t n);
	double normal();
	double normal(double mean, double sd) { return mean + sd * normal(); }
	bool bernoulli(double p) { return uniform() < p; }
	std::uint64_t poisson(double lambda);

	// k distinct indices from [0, n), in selection order.
	std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);
	std::vector<std::size_t> permutation(std::size_t n);

private:
	std::mt19937_64 engine_;
	bool has_spare_ = false;
	double spare_ = 0.0;
};

} // namespace cqr
