#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "ivi/error.hpp"

namespace ivi {

// Seeded random source. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard; the uniform and normal transforms below are written out
// by hand (std::normal_distribution is implementation-defined) so that streams
// are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Marsaglia polar method; the spare deviate is cached.
    double normal() {
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

    double normal(double mean, double std) { return mean + std * normal(); }

    // Exponential with the given mean, by inversion.
    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

    // An independent child stream, derived with splitmix64 so that siblings do not
    // overlap in practice.
    Rng split() { return Rng(splitmix64(engine_())); }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// n draws from N(mean, std^2 I), returned row-major as n x mean.size().
inline std::vector<double> gaussian_sample(Rng& rng, std::size_t n, std::span<const double> mean, double std) {
    if (!(std >= 0.0)) throw ConfigError("gaussian_sample: std must be >= 0");
    std::vector<double> out(n * mean.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < mean.size(); ++d) out[i * mean.size() + d] = mean[d] + std * rng.normal();
    return out;
}

}  // namespace ivi
