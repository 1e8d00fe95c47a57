#pragma once

#include <cmath>
#include <cstdint>

namespace sfgnn {

/// Counter-based deterministic random stream. A draw is a pure function of
/// (seed, counter), so streams are trivially serializable and replayable,
/// and substreams derived with different keys are statistically independent.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0)
        : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    /// Derive an independent stream keyed off this one (counter untouched).
    RngStream substream(std::uint64_t key) const {
        return RngStream(mix(seed_ ^ mix(key + 0x632be59bd9b4e019ULL)));
    }

    std::uint64_t next_u64() {
        ++counter_;
        return mix(seed_ + 0x9e3779b97f4a7c15ULL * counter_);
    }

    /// Uniform in [0, 1).
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_uniform();
    }

    /// Integer uniform in [0, n). n must be > 0.
    std::uint64_t next_index(std::uint64_t n) {
        // 128-bit multiply avoids modulo bias.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller.
    double next_gaussian() {
        double u1 = next_uniform();
        double u2 = next_uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi_ * u2);
    }

    /// Gumbel(0,1) via inverse CDF; uniforms clamped away from {0,1} so the
    /// double log stays finite.
    double next_gumbel() {
        double u = next_uniform();
        if (u < 1e-12) u = 1e-12;
        if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
        return -std::log(-std::log(u));
    }

    bool next_coin() { return (next_u64() & 1u) != 0; }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static constexpr double pi_ = 3.141592653589793238462643383279502884;

    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace sfgnn
