#pragma once

#include <cstdint>
#include <string>

#include "motionmodes/energies.hpp"

namespace motionmodes {

struct GradcheckOptions {
    int trials = 100;
    std::uint64_t seed = 0;
    FlowShape shape{3, 8, 8};
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Offsets shorter than this are excluded from the comparison (norm kinks).
    double kink_radius = 1e-3;
};

struct GradcheckTrial {
    int modes = 0;
    double error = 0.0;  // ||fd - analytic||_inf / ||analytic||_inf
    bool passed = false;
};

struct GradcheckReport {
    std::vector<GradcheckTrial> trials;
    int passed = 0;
    double worst = 0.0;
    double tolerance = 0.0;

    bool ok() const { return passed == static_cast<int>(trials.size()); }
    std::string summary() const;
};

/// Central finite differences of combined_energy against combined_energy_gradient on
/// random fields, random masks and |X| = trial % 3.
GradcheckReport run_gradcheck(const GuidanceConfig& cfg, const GradcheckOptions& opt = {});

/// Error of one comparison, as in GradcheckTrial.
double gradient_error(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                      const GuidanceConfig& cfg, double step, double kink_radius);

}  // namespace motionmodes
