#pragma once

#include <cstdint>
#include <random>

namespace trajrisk {

// splitmix64 step; used to derive independent substream seeds so that
// replicates, batch sampling and probe draws never share a stream.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic substream seed from (root, tag, index).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag,
                                 std::uint64_t index = 0) {
    std::uint64_t s = root;
    splitmix64(s);
    s ^= tag * 0xd6e8feb86659fd93ULL;
    splitmix64(s);
    s ^= index;
    return splitmix64(s);
}

namespace seed_tag {
inline constexpr std::uint64_t data = 0x01;
inline constexpr std::uint64_t batches = 0x02;
inline constexpr std::uint64_t probes = 0x03;
inline constexpr std::uint64_t replicate = 0x04;
}  // namespace seed_tag

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace trajrisk
