#include "motionmodes/rng.hpp"

#include <numeric>

namespace motionmodes {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::size_t Rng::categorical(std::span<const double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (weights.empty() || !(total > 0.0)) throw InvalidArgument("categorical needs positive total weight");
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (u < weights[i]) return i;
        u -= weights[i];
    }
    return weights.size() - 1;
}

FlowField normal_field(const FlowShape& shape, Rng& rng) {
    FlowField f(shape);
    for (double& v : f.data()) v = rng.normal();
    return f;
}

}  // namespace motionmodes
