#include "motionmodes/diffusion.hpp"

#include <cmath>
#include <numbers>

#include "motionmodes/rng.hpp"

namespace motionmodes {

NoiseSchedule NoiseSchedule::cosine(int steps, double variance_mix) {
    if (steps < 1) throw InvalidArgument("schedule needs at least one step");
    std::vector<double> ab(steps + 1);
    for (int t = 0; t <= steps; ++t) {
        const double c = std::cos((static_cast<double>(t) / steps) * std::numbers::pi / 2.0 * 0.995);
        ab[t] = c * c;
    }
    ab[0] = 1.0;
    return NoiseSchedule(std::move(ab), variance_mix);
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar, double variance_mix) {
    return NoiseSchedule(std::move(alpha_bar), variance_mix);
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar, double variance_mix)
    : alpha_bar_(std::move(alpha_bar)), variance_mix_(variance_mix) {
    if (alpha_bar_.size() < 2) throw InvalidArgument("schedule needs at least one step");
    if (alpha_bar_[0] != 1.0) throw InvalidArgument("alpha_bar(0) must be 1");
    for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
        if (!(alpha_bar_[t] >= 0.0) || !(alpha_bar_[t] < alpha_bar_[t - 1])) {
            throw InvalidArgument("alpha_bar must be strictly decreasing within [0, 1]");
        }
    }
    if (!(variance_mix >= 0.0 && variance_mix <= 1.0)) throw InvalidArgument("variance_mix must lie in [0, 1]");
    const std::size_t n = alpha_bar_.size();
    a_.assign(n, 0.0);
    b_.assign(n, 0.0);
    sigma_.assign(n, 0.0);
    for (std::size_t t = 1; t < n; ++t) {
        const double ab = std::max(alpha_bar_[t], kAlphaBarFloor);
        const double ab_prev = std::max(alpha_bar_[t - 1], kAlphaBarFloor);
        const double alpha = ab / ab_prev;
        const double beta = 1.0 - alpha;
        a_[t] = 1.0 / std::sqrt(alpha);
        b_[t] = beta / (std::sqrt(alpha) * std::sqrt(1.0 - ab));
        const double beta_tilde = (1.0 - alpha_bar_[t - 1]) / (1.0 - ab) * beta;
        sigma_[t] = std::sqrt(beta_tilde + variance_mix * (beta - beta_tilde));
    }
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > steps()) throw InvalidArgument("timestep " + std::to_string(t) + " outside [0, T]");
    return alpha_bar_[t];
}

double NoiseSchedule::coeff(const std::vector<double>& c, int t) const {
    if (t < 1 || t > steps()) throw InvalidArgument("reverse step " + std::to_string(t) + " outside [1, T]");
    return c[t];
}

void GuidedSamplerConfig::validate(const NoiseSchedule& sched) const {
    if (guided_steps < 0 || guided_steps > sched.steps()) throw InvalidArgument("guided_steps must lie in [0, T]");
    if (!(guidance_scale >= 0.0) || !std::isfinite(guidance_scale)) throw InvalidArgument("guidance_scale must be >= 0");
    if (!(clip_factor > 0.0)) throw InvalidArgument("clip_factor must be > 0");
}

FlowField add_noise(const FlowField& x0, int t, const FlowField& eps, const NoiseSchedule& sched) {
    require_same_shape(x0, eps, "add_noise");
    const double ab = sched.alpha_bar(t);
    FlowField out = std::sqrt(ab) * x0;
    out.axpy(std::sqrt(1.0 - ab), eps);
    return out;
}

FlowField predict_x0(const FlowField& x_t, int t, const FlowField& eps_hat, const NoiseSchedule& sched) {
    require_same_shape(x_t, eps_hat, "predict_x0");
    const double ab = std::max(sched.alpha_bar(t), NoiseSchedule::kAlphaBarFloor);
    FlowField out = x_t;
    out.axpy(-std::sqrt(1.0 - ab), eps_hat);
    out *= 1.0 / std::sqrt(ab);
    return out;
}

FlowField reverse_step(const FlowField& x_t, int t, const FlowField& eps_hat, const NoiseSchedule& sched,
                       const FlowField& z) {
    require_same_shape(x_t, eps_hat, "reverse_step");
    require_same_shape(x_t, z, "reverse_step");
    FlowField out = sched.a(t) * x_t;
    out.axpy(-sched.b(t), eps_hat);
    out.axpy(sched.sigma(t), z);
    return out;
}

bool in_guidance_window(int t, const GuidedSamplerConfig& gcfg, const NoiseSchedule& sched) {
    return t > sched.steps() - gcfg.guided_steps;
}

namespace {

void require_finite(const FlowField& g, const char* term) {
    if (!g.all_finite()) throw NumericalError(std::string("non-finite guidance gradient from ") + term);
}

}  // namespace

FlowField guidance_gradient(const FlowField& x_t, int t, const FlowField& eps_hat, const Denoiser& denoiser,
                            const ObjectMask& m, std::span<const FlowField> modes, const GuidanceConfig& cfg,
                            bool through_denoiser, const NoiseSchedule& sched, StepTelemetry* telemetry) {
    const FlowField x0 = predict_x0(x_t, t, eps_hat, sched);
    const auto terms = energy_term_gradients(x0, m, modes, cfg);
    require_finite(terms.diversity, "E_d");
    require_finite(terms.camera, "E_c");
    require_finite(terms.object, "E_o");
    require_finite(terms.smoothness, "E_s");
    FlowField g_x0(x0.shape());
    g_x0.axpy(cfg.lambda_d, terms.diversity);
    g_x0.axpy(cfg.lambda_c, terms.camera);
    g_x0.axpy(cfg.lambda_o, terms.object);
    g_x0.axpy(cfg.lambda_s, terms.smoothness);

    // x0 = (x_t - sqrt(1-ab) eps(x_t)) / sqrt(ab)
    const double ab = std::max(sched.alpha_bar(t), NoiseSchedule::kAlphaBarFloor);
    FlowField g = g_x0;
    if (through_denoiser) g.axpy(-std::sqrt(1.0 - ab), denoiser.vjp(x_t, t, g_x0));
    g *= 1.0 / std::sqrt(ab);
    if (!g.all_finite()) throw NumericalError("non-finite guidance gradient from the denoiser VJP");

    if (telemetry) {
        telemetry->terms = energy_terms(x0, m, modes, cfg);
        telemetry->energy = telemetry->terms.combined(cfg);
    }
    return g;
}

FlowField guided_step(const FlowField& x_t, int t, const Denoiser& denoiser, const ObjectMask& m,
                      std::span<const FlowField> modes, const GuidanceConfig& cfg, const GuidedSamplerConfig& gcfg,
                      const NoiseSchedule& sched, const FlowField& z, StepTelemetry* telemetry) {
    const FlowField eps = denoiser.predict_eps(x_t, t);
    const bool guided = in_guidance_window(t, gcfg, sched) && gcfg.guidance_scale > 0 && !cfg.all_disabled();
    if (telemetry) {
        *telemetry = StepTelemetry{};
        telemetry->t = t;
        telemetry->guided = guided;
    }
    if (!guided) return reverse_step(x_t, t, eps, sched, z);

    FlowField g = guidance_gradient(x_t, t, eps, denoiser, m, modes, cfg, gcfg.through_denoiser, sched, telemetry);
    const double norm = g.norm();
    const double limit = gcfg.clip_factor * std::sqrt(static_cast<double>(g.size()));
    const double clip = norm > limit ? limit / norm : 1.0;
    FlowField shifted = x_t;
    shifted.axpy(-gcfg.guidance_scale * clip, g);
    if (telemetry) {
        telemetry->grad_norm = norm;
        telemetry->clip_scale = clip;
        telemetry->gamma = gcfg.guidance_scale;
    }
    return reverse_step(gcfg.shift_mean ? shifted : x_t, t, denoiser.predict_eps(shifted, t), sched, z);
}

FlowField initial_noise(const FlowShape& shape, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0));
    return normal_field(shape, rng);
}

SampleResult sample(const Denoiser& denoiser, const ObjectMask& m, std::span<const FlowField> modes,
                    const GuidanceConfig& cfg, const GuidedSamplerConfig& gcfg, const NoiseSchedule& sched,
                    const std::optional<FlowField>& start) {
    cfg.validate();
    gcfg.validate(sched);
    const FlowShape shape = denoiser.shape();
    FlowField x = start ? *start : initial_noise(shape, gcfg.seed);
    if (x.shape() != shape) throw InvalidArgument("starting noise does not match the denoiser shape");

    Rng step_rng(derive_seed(gcfg.seed, 1));
    SampleResult result;
    for (int t = sched.steps(); t >= 1; --t) {
        const FlowField z = normal_field(shape, step_rng);
        StepTelemetry tel;
        x = guided_step(x, t, denoiser, m, modes, cfg, gcfg, sched, z, &tel);
        if (tel.guided) result.telemetry.push_back(tel);
    }
    if (!x.all_finite()) throw NumericalError("sampler produced non-finite values");
    result.terms = energy_terms(x, m, modes, cfg);
    result.energy = result.terms.combined(cfg);
    result.x0 = std::move(x);
    return result;
}

nlohmann::json to_json(const StepTelemetry& s) {
    return {{"t", s.t},
            {"guided", s.guided},
            {"E", s.energy},
            {"E_d", s.terms.diversity},
            {"E_c", s.terms.camera},
            {"E_o", s.terms.object},
            {"E_s", s.terms.smoothness},
            {"grad_norm", s.grad_norm},
            {"clip_scale", s.clip_scale},
            {"gamma", s.gamma}};
}

}  // namespace motionmodes
