#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace pairsem {

/// 64-bit Mersenne Twister. Its raw output sequence is fixed by the standard,
/// and the helpers below avoid the implementation-defined std distributions,
/// so seeded runs are reproducible across standard libraries.
using Rng = std::mt19937_64;

/// Uniform integer in [0, n), n > 0, by rejection.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n)
{
    const std::uint64_t limit = Rng::max() - Rng::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

/// Uniform double in [0, 1).
inline double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi)
{
    return lo + static_cast<std::size_t>(uniform_below(rng, hi - lo + 1));
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[uniform_below(rng, i)]);
    }
}

/// k distinct indices from [0, n) in random order (partial Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k)
{
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    k = std::min(k, n);
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(idx[i], idx[i + uniform_below(rng, n - i)]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace pairsem
