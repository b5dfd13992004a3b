#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace rcl {

// Seeded generator whose sampling routines are defined here rather than
// by the standard library distributions, so streams are identical across
// toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::size_t below(std::size_t n);

    // Standard normal via Box-Muller; caches the second variate.
    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates permutation of [0, n).
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Mixes a base seed with stream identifiers (epoch, batch, ...) into an
// independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace rcl
