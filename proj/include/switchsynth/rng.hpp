#pragma once

#include <cstdint>
#include <random>

namespace switchsynth {

// Independent stream per (seed, stream) pair so that draws never depend on scheduling order.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        eng_.seed(seq);
    }

    double normal() { return normal_(eng_); }
    double uniform() { return uniform_(eng_); }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace switchsynth
