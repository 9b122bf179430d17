#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "motionmodes/energies.hpp"
#include "motionmodes/flow.hpp"

namespace motionmodes {

/// Discrete schedule over t = 0..T with cumulative signal fraction alpha_bar(t).
///
/// Reverse-step coefficients follow the ancestral parameterization:
///   alpha_t = abar_t / abar_{t-1},  beta_t = 1 - alpha_t
///   a_t = 1 / sqrt(alpha_t),  b_t = beta_t / (sqrt(alpha_t) sqrt(1 - abar_t))
///   sigma_t^2 = beta~_t + variance_mix * (beta_t - beta~_t),
///   beta~_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t
/// variance_mix = 0 is the posterior ("small") variance, 1 the forward ("large") one.
class NoiseSchedule {
public:
    static constexpr int kDefaultSteps = 25;
    static constexpr double kDefaultVarianceMix = 0.6;
    static constexpr double kAlphaBarFloor = 1e-8;

    /// abar(t) = cos^2((t/T) * pi/2 * 0.995)
    static NoiseSchedule cosine(int steps = kDefaultSteps, double variance_mix = kDefaultVarianceMix);
    /// abar must start at 1, be strictly decreasing and stay in [0, 1].
    static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar, double variance_mix = kDefaultVarianceMix);

    int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
    double alpha_bar(int t) const;
    double a(int t) const { return coeff(a_, t); }
    double b(int t) const { return coeff(b_, t); }
    double sigma(int t) const { return coeff(sigma_, t); }
    double variance_mix() const { return variance_mix_; }

private:
    NoiseSchedule(std::vector<double> alpha_bar, double variance_mix);
    double coeff(const std::vector<double>& c, int t) const;

    std::vector<double> alpha_bar_;
    std::vector<double> a_, b_, sigma_;  // indexed by t, entry 0 unused
    double variance_mix_;
};

/// Noise-prediction network eps(x_t, t) with its vector-Jacobian product.
/// Conditioning (the scene) is held by the implementation.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual FlowShape shape() const = 0;
    virtual FlowField predict_eps(const FlowField& x_t, int t) const = 0;
    /// J_eps(x_t)^T * cotangent
    virtual FlowField vjp(const FlowField& x_t, int t, const FlowField& cotangent) const = 0;
};

struct GuidedSamplerConfig {
    int guided_steps = 20;
    double guidance_scale = 1.0;
    bool through_denoiser = true;
    std::uint64_t seed = 0;
    /// Guidance gradients are clipped to clip_factor * sqrt(dimension) in norm.
    double clip_factor = 10.0;
    /// Form the step mean from the shifted x_t' instead of x_t (ablation variant).
    bool shift_mean = false;

    void validate(const NoiseSchedule& sched) const;
};

/// sqrt(abar) x0 + sqrt(1 - abar) eps
FlowField add_noise(const FlowField& x0, int t, const FlowField& eps, const NoiseSchedule& sched);
/// (x_t - sqrt(1 - abar) eps_hat) / sqrt(abar), abar clamped below at 1e-8
FlowField predict_x0(const FlowField& x_t, int t, const FlowField& eps_hat, const NoiseSchedule& sched);
/// a_t x_t - b_t eps_hat + sigma_t z
FlowField reverse_step(const FlowField& x_t, int t, const FlowField& eps_hat, const NoiseSchedule& sched,
                       const FlowField& z);

/// True when step t (counted down from T) lies in the first `guided_steps` reverse steps.
bool in_guidance_window(int t, const GuidedSamplerConfig& gcfg, const NoiseSchedule& sched);

struct StepTelemetry {
    int t = 0;
    bool guided = false;
    EnergyTerms terms;
    double energy = 0.0;
    double grad_norm = 0.0;  // before clipping
    double clip_scale = 1.0;
    double gamma = 0.0;
};

/// One reverse step with energy guidance: the denoiser is re-evaluated at
/// x_t' = x_t - gamma * grad_{x_t} E(x0_hat(x_t)) while the mean keeps a_t x_t
/// (a_t x_t' when gcfg.shift_mean is set).
FlowField guided_step(const FlowField& x_t, int t, const Denoiser& denoiser, const ObjectMask& m,
                      std::span<const FlowField> modes, const GuidanceConfig& cfg, const GuidedSamplerConfig& gcfg,
                      const NoiseSchedule& sched, const FlowField& z, StepTelemetry* telemetry = nullptr);

/// Gradient of E(x0_hat(x_t)) with respect to x_t, before clipping.
FlowField guidance_gradient(const FlowField& x_t, int t, const FlowField& eps_hat, const Denoiser& denoiser,
                            const ObjectMask& m, std::span<const FlowField> modes, const GuidanceConfig& cfg,
                            bool through_denoiser, const NoiseSchedule& sched, StepTelemetry* telemetry = nullptr);

struct SampleResult {
    FlowField x0;
    double energy = 0.0;
    EnergyTerms terms;
    std::vector<StepTelemetry> telemetry;
};

/// Starting noise x_T for a given sample seed.
FlowField initial_noise(const FlowShape& shape, std::uint64_t seed);

/// Full reverse loop from x_T ~ N(0, I) (or the given start) to x_0.
SampleResult sample(const Denoiser& denoiser, const ObjectMask& m, std::span<const FlowField> modes,
                    const GuidanceConfig& cfg, const GuidedSamplerConfig& gcfg, const NoiseSchedule& sched,
                    const std::optional<FlowField>& start = std::nullopt);

nlohmann::json to_json(const StepTelemetry& step);

}  // namespace motionmodes
