#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace illmtsc {

// Deterministic random source shared by the simulator, channel and trainer.
// std::mt19937_64 is bit-exact across platforms, but the standard leaves the
// distribution algorithms implementation-defined, so sampling is done here:
// uniforms from the raw 64-bit stream, normals via Box-Muller, Poisson via
// Knuth's product method. Golden fixtures depend on this exact procedure.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal. One value per call; draws two uniforms each time so
    // the stream position never depends on call parity.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Poisson count for small means (arrival rates per second are << 1).
    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        int count = -1;
        double product = 1.0;
        do {
            product *= uniform();
            ++count;
        } while (product > limit);
        return count;
    }

    std::uint64_t next_u64() { return engine_(); }

    // Derives an independent child seed, for splitting one top-level seed
    // into per-subsystem streams (sim / channel / policy).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr double kPi = 3.14159265358979323846;
    std::mt19937_64 engine_;
};

}  // namespace illmtsc
