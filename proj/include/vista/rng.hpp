#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace vista {

namespace detail {

inline constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline constexpr uint64_t splitmix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline constexpr uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace detail

// Deterministic counter-based generator. A stream is identified by
// (root seed, tag, lane); all randomness in the project flows from one
// root seed through named sub-streams, so any draw is reproducible from
// integers alone and no generator state ever needs to be checkpointed.
class Rng {
public:
    Rng(uint64_t seed, std::string_view tag, uint64_t lane = 0)
        : state_(detail::splitmix(detail::splitmix(seed ^ detail::fnv1a(tag)) + lane)) {}

    uint64_t next_u64() {
        state_ += detail::kGolden;
        return detail::splitmix(state_);
    }

    // Uniform in [0, bound). Lemire multiply-shift; bias is < 2^-32 for the
    // bounds used here and the mapping is fully deterministic.
    uint64_t next_below(uint64_t bound) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from {0,...,n-1}, returned in increasing order.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
        shuffle(pool);
        pool.resize(static_cast<size_t>(k));
        std::sort(pool.begin(), pool.end());
        return pool;
    }

private:
    uint64_t state_;
};

}  // namespace vista
