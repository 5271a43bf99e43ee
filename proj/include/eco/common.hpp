#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eco {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for content addressing and deterministic per-key seeding.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : data) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

inline long long round_half_up(double x) {
    return static_cast<long long>(std::floor(x + 0.5));
}

inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::string_view salt = {}) {
    if (!salt.empty()) seed = fnv1a64(salt, seed ^ kFnvOffset);
    return std::mt19937_64(seed);
}

// Uniform in [lo, hi) without std::uniform_real_distribution so streams are
// stable across standard library implementations.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

std::string iso8601_now();

std::string trim(std::string_view s);

}  // namespace eco
