#include "objdisc/rng.hpp"

#include <cmath>
#include <numbers>

namespace objdisc {

double next_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t next_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = rng.max() / n * n;
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % n;
}

double next_normal(std::mt19937_64& rng) {
    // 1 - u lies in (0, 1], keeping the logarithm finite
    const double u1 = 1.0 - next_uniform(rng);
    const double u2 = next_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace objdisc
