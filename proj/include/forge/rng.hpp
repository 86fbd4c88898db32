#pragma once

#include <cstdint>
#include <random>

namespace forge {

// Seeded uniform sampler with a platform-independent stream (raw engine
// bits, no std distribution objects).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double unit() { return (eng_() >> 11) * 0x1.0p-53; }  // [0,1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

}  // namespace forge
