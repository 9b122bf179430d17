#pragma once

#include <span>
#include <string>

#include "json.hpp"

#include "motionmodes/flow.hpp"

namespace motionmodes {

/// Guidance constants. `tau_object` defaults to a value that assumes
/// pixel offsets at 320p and is usually lowered for small grids.
struct GuidanceConfig {
    double lambda_d = 3.0;
    double lambda_c = 0.2;
    double lambda_o = 0.025;
    double lambda_s = 0.1;
    double tau_object = 40.0;
    double tau_diversity = 1.0;
    double e_phi = 1e-4;
    DistanceWeights diversity_weights{0.25, 0.75};
    DistanceWeights smoothness_weights{0.75, 0.25};
    double e_angle = 1e-6;

    void validate() const;
    bool all_disabled() const { return lambda_d == 0 && lambda_c == 0 && lambda_o == 0 && lambda_s == 0; }
    bool operator==(const GuidanceConfig&) const = default;
};

nlohmann::json to_json(const GuidanceConfig& cfg);
/// Rejects unknown keys; missing keys keep their defaults.
GuidanceConfig guidance_from_json(const nlohmann::json& doc);

/// softplus((a + e)^-1 - tau), linear beyond z = 30.
double soft_inverse(double a, double tau, double e);
/// d/da of soft_inverse.
double soft_inverse_derivative(double a, double tau, double e);

/// w_mag * | |a| - |b| | + w_angle * (1 - a.b / (max(|a|,e) max(|b|,e)))
double offset_distance(Vec2 a, Vec2 b, const DistanceWeights& w, double e_angle);

struct DistanceGradient {
    double value = 0.0;
    Vec2 d_a;
    Vec2 d_b;
};
DistanceGradient offset_distance_gradient(Vec2 a, Vec2 b, const DistanceWeights& w, double e_angle);

/// E_c: mean offset magnitude over all frames and background pixels.
double camera_energy(const FlowField& x, const ObjectMask& m);
/// E_o: soft inverse of the gap between mean magnitudes inside and outside the object.
double object_energy(const FlowField& x, const ObjectMask& m, const GuidanceConfig& cfg);
/// E_d: summed per-mode repulsion, each a mask-weighted mean over (k, i, j).
double diversity_energy(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                        const GuidanceConfig& cfg);
/// E_s: mask-weighted mean distance between consecutive frames; needs F >= 2.
double smoothness_energy(const FlowField& x, const ObjectMask& m, const GuidanceConfig& cfg);

struct EnergyTerms {
    double diversity = 0.0;
    double camera = 0.0;
    double object = 0.0;
    double smoothness = 0.0;

    double combined(const GuidanceConfig& cfg) const {
        return cfg.lambda_d * diversity + cfg.lambda_c * camera + cfg.lambda_o * object +
               cfg.lambda_s * smoothness;
    }
};

/// All four terms, independent of the lambdas. E_s is reported as 0 for single-frame fields.
EnergyTerms energy_terms(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                         const GuidanceConfig& cfg);

double combined_energy(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                       const GuidanceConfig& cfg);

/// Unweighted gradients of each term.
struct EnergyTermGradients {
    FlowField diversity;
    FlowField camera;
    FlowField object;
    FlowField smoothness;
};

FlowField camera_energy_gradient(const FlowField& x, const ObjectMask& m, double e_angle);
FlowField object_energy_gradient(const FlowField& x, const ObjectMask& m, const GuidanceConfig& cfg);
FlowField diversity_energy_gradient(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                                    const GuidanceConfig& cfg);
FlowField smoothness_energy_gradient(const FlowField& x, const ObjectMask& m, const GuidanceConfig& cfg);

/// Gradient of each term with a nonzero lambda; disabled terms are zero fields.
EnergyTermGradients energy_term_gradients(const FlowField& x, const ObjectMask& m,
                                          std::span<const FlowField> modes, const GuidanceConfig& cfg);

/// Exact gradient of combined_energy with respect to every offset entry.
FlowField combined_energy_gradient(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                                   const GuidanceConfig& cfg);

}  // namespace motionmodes
