#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fedsplit/errors.hpp"

namespace fedsplit {

// splitmix64 finalizer. Used both as a bit mixer for seed derivation and as
// the engine behind deterministic per-stream RNGs.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and up to three
// context values (round, client ordinal, salt). Same inputs, same stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = mix64(base);
    s = mix64(s ^ mix64(a + 0x1d8af066u));
    s = mix64(s ^ mix64(b + 0x2f0c7b9du));
    s = mix64(s ^ mix64(c + 0x3a1e4c55u));
    return s;
}

// FNV-1a 64-bit over a byte string.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic RNG with fully specified output, independent of the standard
// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Unbiased uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ContractError("Rng::below: n must be positive");
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            std::uint64_t x = engine_();
            if (x >= threshold) return x % n;
        }
    }

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace fedsplit
