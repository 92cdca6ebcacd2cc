#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace mismatch_lasso {

// Stream tags keep the substreams of one master seed disjoint.
enum class Stream : std::uint64_t {
    latent = 1,
    outputs = 2,
    superimposed = 3,  // + branch index
    width = 64,
    power_iteration = 65,
    monte_carlo = 66,
    experiment = 128,
    model_setup = 129,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Seed of the substream (seed, tag, counter). Rows of a sample set use the
// row index as counter, so row i never depends on how many rows are drawn.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                           std::uint64_t counter) noexcept {
    return splitmix64(splitmix64(seed ^ splitmix64(tag)) + splitmix64(counter + 0x632BE59BD9B4E019ULL));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream tag,
                                           std::uint64_t counter) noexcept {
    return derive_seed(seed, static_cast<std::uint64_t>(tag), counter);
}

// SplitMix64 as a UniformRandomBitGenerator.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

// Engine for substream (seed, tag, counter).
inline SplitMix64 substream(std::uint64_t seed, Stream tag, std::uint64_t counter = 0) {
    return SplitMix64(derive_seed(seed, tag, counter));
}

// 53-bit uniform on [0, 1).
inline double uniform01(SplitMix64& eng) noexcept {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double standard_normal(SplitMix64& eng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    return nd(eng);
}

}  // namespace mismatch_lasso
