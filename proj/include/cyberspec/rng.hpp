#pragma once

// Deterministic random sources.
//
// Two flavours are used across the library:
//  * counter-based draws (hash of a key tuple) where a value must not depend
//    on evaluation order, e.g. per-bin sensor noise;
//  * a sequential engine (std::mt19937_64) for training-time randomness.
// Conversions to floating point are done here rather than through
// <random> distributions so that outputs are identical across standard
// library implementations.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <string_view>

namespace cyberspec {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Combines an arbitrary number of 64-bit keys into one well-mixed value.
constexpr std::uint64_t hash_keys(std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (auto k : keys) h = splitmix64(h ^ splitmix64(k));
    return h;
}

/// FNV-1a; used to turn sensor ids into RNG keys.
constexpr std::uint64_t hash_string(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Uniform in [0, 1) with 53 bits of precision.
constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform in (0, 1]; safe as a log() argument.
constexpr double to_unit_open_low(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

/// Standard normal from a single 64-bit key (Box-Muller over two derived words).
inline double normal_from_key(std::uint64_t key) noexcept {
    const double u1 = to_unit_open_low(splitmix64(key));
    const double u2 = to_unit(splitmix64(key ^ 0x5851f42d4c957f2dULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Thin wrapper over mt19937_64 with portable conversions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform() { return to_unit(engine_()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
    std::size_t index(std::size_t n) {
        const auto bound = static_cast<std::uint64_t>(n);
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t x = engine_();
            const auto m = static_cast<unsigned __int128>(x) * bound;
            if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::size_t>(m >> 64);
        }
    }

    double normal() {
        const double u1 = to_unit_open_low(engine_());
        const double u2 = to_unit(engine_());
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::size_t>(last - first);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = index(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace cyberspec
