#ifndef POWERCAST_RNG_HPP
#define POWERCAST_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

// Deterministic sampling helpers. std::*_distribution output is
// implementation-defined, so everything here draws from the fully specified
// mt19937_64 stream directly; results are bit-identical across toolchains.
namespace powercast::rng {

inline std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Independent generator for (seed, stream); distinct streams never collide.
inline std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream = 0) {
    return std::mt19937_64(mix(seed) ^ mix(stream * 0x100000001b3ULL + 0xcbf29ce484222325ULL));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(g);
}

/// Unbiased index in [0, n) by rejection.
inline std::size_t uniform_index(std::mt19937_64& g, std::size_t n) {
    const std::uint64_t limit = ~0ULL - ~0ULL % n;
    std::uint64_t draw = g();
    while (draw >= limit) draw = g();
    return static_cast<std::size_t>(draw % n);
}

/// Standard normal via Box-Muller on the deterministic uniform stream.
inline double normal(std::mt19937_64& g) {
    double u1 = uniform_unit(g);
    while (u1 <= 0.0) u1 = uniform_unit(g);
    const double u2 = uniform_unit(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out,
                                          std::size_t count, std::mt19937_64& g) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> values(count);
    for (double& v : values) v = uniform_range(g, -limit, limit);
    return values;
}

template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& g) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[uniform_index(g, i)]);
    }
}

} // namespace powercast::rng

#endif
