#include "motionmodes/energies.hpp"

#include <algorithm>
#include <cmath>

namespace motionmodes {

namespace {

constexpr double kSoftplusLinearFrom = 30.0;

double softplus(double z) {
    if (z > kSoftplusLinearFrom) return z;
    return std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

enum class Region { Object, Background };

bool in_region(const ObjectMask& m, int i, int j, Region r) {
    return m.inside(i, j) == (r == Region::Object);
}

// Mean offset magnitude over all frames and the pixels of one region.
double region_mean_magnitude(const FlowField& x, const ObjectMask& m, Region r) {
    m.require_compatible(x);
    const std::size_t pixels = r == Region::Object ? m.object_pixels() : m.background_pixels();
    double acc = 0.0;
    for (int k = 0; k < x.frames(); ++k) {
        for (int i = 0; i < x.height(); ++i) {
            for (int j = 0; j < x.width(); ++j) {
                if (in_region(m, i, j, r)) acc += x.at(k, i, j).norm();
            }
        }
    }
    return acc / (static_cast<double>(pixels) * x.frames());
}

// Gradient of region_mean_magnitude, scaled by `scale` and added into `out`.
void add_region_mean_magnitude_gradient(const FlowField& x, const ObjectMask& m, Region r, double scale,
                                        double e_angle, FlowField& out) {
    const std::size_t pixels = r == Region::Object ? m.object_pixels() : m.background_pixels();
    const double w = scale / (static_cast<double>(pixels) * x.frames());
    for (int k = 0; k < x.frames(); ++k) {
        for (int i = 0; i < x.height(); ++i) {
            for (int j = 0; j < x.width(); ++j) {
                if (!in_region(m, i, j, r)) continue;
                const Vec2 v = x.at(k, i, j);
                const double n = v.norm();
                if (n < e_angle) continue;  // subgradient 0 at the kink
                const std::size_t idx = out.index(k, i, j);
                out.data()[idx] += w * v.x / n;
                out.data()[idx + 1] += w * v.y / n;
            }
        }
    }
}

void check_modes(const FlowField& x, std::span<const FlowField> modes) {
    for (const auto& mode : modes) require_same_shape(x, mode, "diversity energy");
}

double mask_normalizer(const ObjectMask& m, int frame_terms) {
    return static_cast<double>(m.object_pixels()) * frame_terms;
}

double signum(double v) { return (v > 0) - (v < 0); }

}  // namespace

void GuidanceConfig::validate() const {
    for (double l : {lambda_d, lambda_c, lambda_o, lambda_s}) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("guidance weights must be finite and >= 0");
    }
    if (!std::isfinite(tau_object) || !std::isfinite(tau_diversity)) {
        throw InvalidArgument("activation thresholds must be finite");
    }
    if (!(e_phi > 0.0)) throw InvalidArgument("e_phi must be > 0");
    if (!(e_angle > 0.0)) throw InvalidArgument("e_angle must be > 0");
    diversity_weights.validate();
    smoothness_weights.validate();
}

double soft_inverse(double a, double tau, double e) {
    if (!(a >= 0.0)) throw InvalidArgument("soft_inverse needs a >= 0");
    return softplus(1.0 / (a + e) - tau);
}

double soft_inverse_derivative(double a, double tau, double e) {
    if (!(a >= 0.0)) throw InvalidArgument("soft_inverse needs a >= 0");
    const double inv = 1.0 / (a + e);
    const double z = inv - tau;
    const double dz = z > kSoftplusLinearFrom ? 1.0 : sigmoid(z);
    return -dz * inv * inv;
}

double offset_distance(Vec2 a, Vec2 b, const DistanceWeights& w, double e_angle) {
    const double na = a.norm(), nb = b.norm();
    const double cosine = std::clamp(a.dot(b) / (std::max(na, e_angle) * std::max(nb, e_angle)), -1.0, 1.0);
    return w.w_mag * std::abs(na - nb) + w.w_angle * (1.0 - cosine);
}

DistanceGradient offset_distance_gradient(Vec2 a, Vec2 b, const DistanceWeights& w, double e_angle) {
    const double na = a.norm(), nb = b.norm();
    const double ca = std::max(na, e_angle), cb = std::max(nb, e_angle);
    const double ab = a.dot(b);
    const double cosine = std::clamp(ab / (ca * cb), -1.0, 1.0);  // rounding can overshoot

    DistanceGradient g;
    g.value = w.w_mag * std::abs(na - nb) + w.w_angle * (1.0 - cosine);

    // Unit vectors, zero below the clamp (where the clamped norm is constant).
    const Vec2 ua = na >= e_angle ? a * (1.0 / na) : Vec2{};
    const Vec2 ub = nb >= e_angle ? b * (1.0 / nb) : Vec2{};

    const double s = signum(na - nb);
    g.d_a = ua * (w.w_mag * s);
    g.d_b = ub * (-w.w_mag * s);

    // d cos / da = b / (ca cb) - ab / (ca^2 cb) * d ca / da
    const Vec2 dcos_da = b * (1.0 / (ca * cb)) - ua * (ab / (ca * ca * cb));
    const Vec2 dcos_db = a * (1.0 / (ca * cb)) - ub * (ab / (ca * cb * cb));
    g.d_a = g.d_a - dcos_da * w.w_angle;
    g.d_b = g.d_b - dcos_db * w.w_angle;
    return g;
}

double camera_energy(const FlowField& x, const ObjectMask& m) {
    return region_mean_magnitude(x, m, Region::Background);
}

double object_energy(const FlowField& x, const ObjectMask& m, const GuidanceConfig& cfg) {
    const double gap = region_mean_magnitude(x, m, Region::Background) - region_mean_magnitude(x, m, Region::Object);
    return soft_inverse(std::abs(gap), cfg.tau_object, cfg.e_phi);
}

double diversity_energy(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                        const GuidanceConfig& cfg) {
    m.require_compatible(x);
    check_modes(x, modes);
    const double norm = mask_normalizer(m, x.frames());
    double total = 0.0;
    for (const FlowField& other : modes) {
        double acc = 0.0;
        for (int k = 0; k < x.frames(); ++k) {
            for (int i = 0; i < x.height(); ++i) {
                for (int j = 0; j < x.width(); ++j) {
                    if (!m.inside(i, j)) continue;
                    const double d = offset_distance(x.at(k, i, j), other.at(k, i, j), cfg.diversity_weights,
                                                     cfg.e_angle);
                    acc += soft_inverse(d, cfg.tau_diversity, cfg.e_phi);
                }
            }
        }
        total += acc / norm;
    }
    return total;
}

double smoothness_energy(const FlowField& x, const ObjectMask& m, const GuidanceConfig& cfg) {
    m.require_compatible(x);
    if (x.frames() < 2) throw InvalidArgument("smoothness energy needs at least 2 frames");
    double acc = 0.0;
    for (int k = 0; k + 1 < x.frames(); ++k) {
        for (int i = 0; i < x.height(); ++i) {
            for (int j = 0; j < x.width(); ++j) {
                if (!m.inside(i, j)) continue;
                acc += offset_distance(x.at(k, i, j), x.at(k + 1, i, j), cfg.smoothness_weights, cfg.e_angle);
            }
        }
    }
    return acc / mask_normalizer(m, x.frames() - 1);
}

EnergyTerms energy_terms(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                         const GuidanceConfig& cfg) {
    EnergyTerms t;
    t.diversity = diversity_energy(x, m, modes, cfg);
    t.camera = camera_energy(x, m);
    t.object = object_energy(x, m, cfg);
    t.smoothness = x.frames() >= 2 ? smoothness_energy(x, m, cfg) : 0.0;
    return t;
}

double combined_energy(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                       const GuidanceConfig& cfg) {
    double e = 0.0;
    if (cfg.lambda_d != 0) e += cfg.lambda_d * diversity_energy(x, m, modes, cfg);
    if (cfg.lambda_c != 0) e += cfg.lambda_c * camera_energy(x, m);
    if (cfg.lambda_o != 0) e += cfg.lambda_o * object_energy(x, m, cfg);
    if (cfg.lambda_s != 0) e += cfg.lambda_s * smoothness_energy(x, m, cfg);
    return e;
}

FlowField camera_energy_gradient(const FlowField& x, const ObjectMask& m, double e_angle) {
    m.require_compatible(x);
    FlowField g(x.shape());
    add_region_mean_magnitude_gradient(x, m, Region::Background, 1.0, e_angle, g);
    return g;
}

FlowField object_energy_gradient(const FlowField& x, const ObjectMask& m, const GuidanceConfig& cfg) {
    m.require_compatible(x);
    const double gap = region_mean_magnitude(x, m, Region::Background) - region_mean_magnitude(x, m, Region::Object);
    const double outer = soft_inverse_derivative(std::abs(gap), cfg.tau_object, cfg.e_phi) * signum(gap);
    FlowField g(x.shape());
    if (outer == 0.0) return g;
    add_region_mean_magnitude_gradient(x, m, Region::Background, outer, cfg.e_angle, g);
    add_region_mean_magnitude_gradient(x, m, Region::Object, -outer, cfg.e_angle, g);
    return g;
}

FlowField diversity_energy_gradient(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                                    const GuidanceConfig& cfg) {
    m.require_compatible(x);
    check_modes(x, modes);
    FlowField g(x.shape());
    const double inv_norm = 1.0 / mask_normalizer(m, x.frames());
    auto gd = g.data();
    for (const FlowField& other : modes) {
        for (int k = 0; k < x.frames(); ++k) {
            for (int i = 0; i < x.height(); ++i) {
                for (int j = 0; j < x.width(); ++j) {
                    if (!m.inside(i, j)) continue;
                    const auto dg = offset_distance_gradient(x.at(k, i, j), other.at(k, i, j),
                                                             cfg.diversity_weights, cfg.e_angle);
                    const double outer =
                        soft_inverse_derivative(dg.value, cfg.tau_diversity, cfg.e_phi) * inv_norm;
                    const std::size_t idx = g.index(k, i, j);
                    gd[idx] += outer * dg.d_a.x;
                    gd[idx + 1] += outer * dg.d_a.y;
                }
            }
        }
    }
    return g;
}

FlowField smoothness_energy_gradient(const FlowField& x, const ObjectMask& m, const GuidanceConfig& cfg) {
    m.require_compatible(x);
    if (x.frames() < 2) throw InvalidArgument("smoothness energy needs at least 2 frames");
    FlowField g(x.shape());
    const double inv_norm = 1.0 / mask_normalizer(m, x.frames() - 1);
    auto gd = g.data();
    for (int k = 0; k + 1 < x.frames(); ++k) {
        for (int i = 0; i < x.height(); ++i) {
            for (int j = 0; j < x.width(); ++j) {
                if (!m.inside(i, j)) continue;
                const auto dg =
                    offset_distance_gradient(x.at(k, i, j), x.at(k + 1, i, j), cfg.smoothness_weights, cfg.e_angle);
                const std::size_t a = g.index(k, i, j), b = g.index(k + 1, i, j);
                gd[a] += inv_norm * dg.d_a.x;
                gd[a + 1] += inv_norm * dg.d_a.y;
                gd[b] += inv_norm * dg.d_b.x;
                gd[b + 1] += inv_norm * dg.d_b.y;
            }
        }
    }
    return g;
}

EnergyTermGradients energy_term_gradients(const FlowField& x, const ObjectMask& m,
                                          std::span<const FlowField> modes, const GuidanceConfig& cfg) {
    EnergyTermGradients g{FlowField(x.shape()), FlowField(x.shape()), FlowField(x.shape()), FlowField(x.shape())};
    if (cfg.lambda_d != 0) g.diversity = diversity_energy_gradient(x, m, modes, cfg);
    if (cfg.lambda_c != 0) g.camera = camera_energy_gradient(x, m, cfg.e_angle);
    if (cfg.lambda_o != 0) g.object = object_energy_gradient(x, m, cfg);
    if (cfg.lambda_s != 0) g.smoothness = smoothness_energy_gradient(x, m, cfg);
    return g;
}

FlowField combined_energy_gradient(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                                   const GuidanceConfig& cfg) {
    const auto terms = energy_term_gradients(x, m, modes, cfg);
    FlowField g(x.shape());
    g.axpy(cfg.lambda_d, terms.diversity);
    g.axpy(cfg.lambda_c, terms.camera);
    g.axpy(cfg.lambda_o, terms.object);
    g.axpy(cfg.lambda_s, terms.smoothness);
    return g;
}

// JSON ---------------------------------------------------------------------

namespace {

nlohmann::json weights_json(const DistanceWeights& w) { return {{"w_mag", w.w_mag}, {"w_angle", w.w_angle}}; }

double get_number(const nlohmann::json& doc, const char* key) {
    const auto& v = doc.at(key);
    if (!v.is_number()) throw ConfigError(std::string("guidance field '") + key + "' must be a number");
    return v.get<double>();
}

DistanceWeights weights_from_json(const nlohmann::json& doc, const char* field) {
    if (!doc.is_object()) throw ConfigError(std::string("guidance field '") + field + "' must be an object");
    DistanceWeights w;
    for (const auto& [key, value] : doc.items()) {
        if (key != "w_mag" && key != "w_angle") {
            throw ConfigError(std::string("unknown key '") + key + "' in " + field);
        }
    }
    if (doc.contains("w_mag")) w.w_mag = get_number(doc, "w_mag");
    if (doc.contains("w_angle")) w.w_angle = get_number(doc, "w_angle");
    return w;
}

}  // namespace

nlohmann::json to_json(const GuidanceConfig& cfg) {
    return {
        {"schema_version", 1},
        {"lambda_d", cfg.lambda_d},
        {"lambda_c", cfg.lambda_c},
        {"lambda_o", cfg.lambda_o},
        {"lambda_s", cfg.lambda_s},
        {"tau_object", cfg.tau_object},
        {"tau_diversity", cfg.tau_diversity},
        {"e_phi", cfg.e_phi},
        {"diversity_weights", weights_json(cfg.diversity_weights)},
        {"smoothness_weights", weights_json(cfg.smoothness_weights)},
        {"e_angle", cfg.e_angle},
    };
}

GuidanceConfig guidance_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("guidance config must be a JSON object");
    GuidanceConfig cfg;
    struct Field {
        const char* name;
        double* target;
    };
    const Field scalars[] = {
        {"lambda_d", &cfg.lambda_d},       {"lambda_c", &cfg.lambda_c},
        {"lambda_o", &cfg.lambda_o},       {"lambda_s", &cfg.lambda_s},
        {"tau_object", &cfg.tau_object},   {"tau_diversity", &cfg.tau_diversity},
        {"e_phi", &cfg.e_phi},             {"e_angle", &cfg.e_angle},
    };
    for (const auto& [key, value] : doc.items()) {
        bool known = key == "schema_version" || key == "diversity_weights" || key == "smoothness_weights";
        for (const auto& f : scalars) known = known || key == f.name;
        if (!known) throw ConfigError("unknown guidance key '" + key + "'");
    }
    if (doc.contains("schema_version") && doc.at("schema_version") != 1) {
        throw ConfigError("unsupported guidance schema_version");
    }
    for (const auto& f : scalars) {
        if (doc.contains(f.name)) *f.target = get_number(doc, f.name);
    }
    if (doc.contains("diversity_weights")) {
        cfg.diversity_weights = weights_from_json(doc.at("diversity_weights"), "diversity_weights");
    }
    if (doc.contains("smoothness_weights")) {
        cfg.smoothness_weights = weights_from_json(doc.at("smoothness_weights"), "smoothness_weights");
    }
    try {
        cfg.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

}  // namespace motionmodes
