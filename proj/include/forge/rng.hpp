#pragma once

#include <cstdint>

namespace forge {

/// splitmix64: portable 64-bit stream, easy to reproduce in any language.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Uniform in [0, bound) by rejection, no modulo bias.
inline std::uint64_t uniform_below(std::uint64_t& state, std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t x = splitmix64(state);
        if (x >= threshold) return x % bound;
    }
}

}  // namespace forge
