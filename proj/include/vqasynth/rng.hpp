#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace vqasynth {

// xoshiro256** 1.0 (Blackman & Vigna), seeded through splitmix64. Every
// seeded shuffle or sample in the pipeline goes through this generator so
// results are reproducible across platforms and standard libraries.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    static constexpr std::string_view kName = "xoshiro256**/splitmix64";

    explicit Xoshiro256(std::uint64_t seed);

    std::uint64_t next();
    result_type operator()() { return next(); }

    // Unbiased integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    // Uniform double in [0, 1).
    double uniform();

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

private:
    std::uint64_t s_[4];
};

// Fisher-Yates, walking from the back.
template <typename T>
void shuffle(std::span<T> items, Xoshiro256& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

}  // namespace vqasynth
