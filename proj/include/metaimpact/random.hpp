#pragma once

#include <cstdint>
#include <random>

namespace metaimpact {

using Rng = std::mt19937_64;

/// splitmix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed splitting rule used everywhere randomness is consumed:
///   sub_seed(master, stream, index) = mix64(mix64(master ^ mix64(stream)) + index)
/// Streams are fixed small integers (see Stream); index is usually a stock or
/// bootstrap replicate number. Work split by (stream, index) is therefore
/// reproducible regardless of how it is scheduled across threads.
constexpr std::uint64_t sub_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) noexcept
{
    return mix64(mix64(master ^ mix64(stream)) + index);
}

enum class Stream : std::uint64_t {
    Market = 1,
    LatentFlow = 2,
    Orders = 3,
    StockLevels = 4,
    DailyNoise = 5,
    Intraday = 6,
    Violations = 7,
    Bootstrap = 8,
};

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index)
{
    return Rng(sub_seed(master, static_cast<std::uint64_t>(stream), index));
}

} // namespace metaimpact
