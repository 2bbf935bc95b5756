#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ict {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a list of keys
/// (iteration, role, ...). Order of keys matters.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

// Role constants for per-role streams.
namespace role {
inline constexpr std::uint64_t proxy = 0x70726f7879ULL;
inline constexpr std::uint64_t sampling = 0x73616d706cULL;
inline constexpr std::uint64_t minibatch = 0x6d696e6962ULL;
inline constexpr std::uint64_t dataset = 0x6461746173ULL;
}  // namespace role

}  // namespace ict
