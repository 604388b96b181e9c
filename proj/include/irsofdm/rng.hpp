#pragma once

#include <cstdint>
#include <random>

namespace irsofdm {

// splitmix64 finalizer; used to derive independent per-trial / per-purpose
// seeds from a single master seed so that adding trials never perturbs
// earlier ones.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t substream = 0) {
    return mix64(mix64(master ^ mix64(stream)) ^ mix64(substream));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace irsofdm
