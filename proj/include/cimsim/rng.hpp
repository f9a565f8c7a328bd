#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cimsim {

// Deterministic xoshiro256** generator with cheap substream derivation.
// The standard library distributions are implementation-defined, so all
// sampling used by the simulator lives here; identical seeds give
// bit-identical trajectories on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    // Independent stream addressed by id (cell coordinate, epoch, ...).
    Rng substream(std::uint64_t id) const {
        std::uint64_t x = seed_ ^ (0x9E3779B97F4A7C15ULL + id);
        x = splitmix64(x);
        return Rng(x ^ splitmix64(x));
    }

    Rng substream(std::uint64_t a, std::uint64_t b) const {
        return substream(a * 0x100000001B3ULL + b + 1);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // One standard normal draw (Box-Muller, no caching so that the
    // stream position is a pure function of the number of calls).
    double gaussian() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t seed() const { return seed_; }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_;
    std::uint64_t state_[4];
};

} // namespace cimsim
