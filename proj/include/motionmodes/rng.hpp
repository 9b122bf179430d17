#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "motionmodes/flow.hpp"

namespace motionmodes {

/// Counter-based seed split (SplitMix64 finalizer over seed and counter).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t counter);

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    /// Index drawn proportionally to nonnegative weights.
    std::size_t categorical(std::span<const double> weights);
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

FlowField normal_field(const FlowShape& shape, Rng& rng);

}  // namespace motionmodes
