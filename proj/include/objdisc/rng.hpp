#ifndef OBJDISC_RNG_HPP
#define OBJDISC_RNG_HPP

#include <cstdint>
#include <random>

namespace objdisc {

// Uniform double in [0,1) built from raw engine output, so the stream is
// pinned by this code rather than by the standard library's distribution.
double next_uniform(std::mt19937_64& rng);

// Uniform integer in [0, n), rejecting the biased tail of the raw draw.
std::uint64_t next_below(std::mt19937_64& rng, std::uint64_t n);

// Standard normal via the cosine branch of Box-Muller over pinned uniforms;
// one value per call, two uniforms consumed.
double next_normal(std::mt19937_64& rng);

}  // namespace objdisc

#endif
