#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mlink {

/// Seeded random source. Every piece of randomness in the toolkit flows
/// through one of these, constructed from an explicit seed; there is no
/// ambient randomness anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    /// Beta(alpha, beta) via the two-gamma construction.
    double beta(double alpha, double beta) {
        double x = std::gamma_distribution<double>(alpha, 1.0)(engine_);
        double y = std::gamma_distribution<double>(beta, 1.0)(engine_);
        double s = x + y;
        return s > 0.0 ? x / s : 0.5;
    }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Derive an independent child seed (for per-component streams).
    std::uint64_t fork() { return engine_() ^ 0x9e3779b97f4a7c15ull; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace mlink
