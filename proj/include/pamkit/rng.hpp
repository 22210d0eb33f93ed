#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace pamkit {

// Master seed plus stream index. Every Monte Carlo shard derives its
// generator from (master, stream) alone, so results do not depend on
// thread scheduling.
struct SeedSpec {
    std::uint64_t master = 0x9e3779b97f4a7c15ULL;
    std::uint64_t stream = 0;

    SeedSpec with_stream(std::uint64_t s) const { return {master, s}; }
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
} // namespace detail

// Deterministic per-stream generator. Gaussian draws use Box-Muller on
// explicit 53-bit uniforms instead of std::normal_distribution, so the
// byte stream is fixed by the standard-mandated mt19937_64 output alone.
class StreamRng {
public:
    explicit StreamRng(SeedSpec seed) {
        std::uint64_t s = seed.master;
        detail::splitmix64(s);
        s ^= 0xd1b54a32d192ed03ULL * (seed.stream + 1);
        std::seed_seq seq{static_cast<std::uint32_t>(detail::splitmix64(s)),
                          static_cast<std::uint32_t>(detail::splitmix64(s)),
                          static_cast<std::uint32_t>(detail::splitmix64(s)),
                          static_cast<std::uint32_t>(detail::splitmix64(s)),
                          static_cast<std::uint32_t>(detail::splitmix64(s)),
                          static_cast<std::uint32_t>(detail::splitmix64(s))};
        engine_.seed(seq);
    }

    std::uint64_t bits() { return engine_(); }

    // Uniform on (0,1]: never returns 0, safe under log.
    double uniform_pos() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1p-53;
    }

    // Uniform on [0,1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double c = std::cos(6.283185307179586476925286766559 * u2);
        double s = std::sin(6.283185307179586476925286766559 * u2);
        spare_ = r * s;
        have_spare_ = true;
        return r * c;
    }

    // Gamma(shape, rate) by Marsaglia-Tsang, boosted for shape < 1.
    double gamma(double shape, double rate) {
        if (shape <= 0.0 || rate <= 0.0)
            throw std::invalid_argument("gamma: shape and rate must be positive");
        if (shape < 1.0) {
            double u = uniform_pos();
            return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            double u = uniform_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace pamkit
