#include "motionmodes/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "motionmodes/rng.hpp"

namespace motionmodes {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

Vec2 direction(double angle_deg) {
    return {std::cos(angle_deg * kDegToRad), std::sin(angle_deg * kDegToRad)};
}

Vec2 rotate(Vec2 p, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * p.x - s * p.y, s * p.x + c * p.y};
}

PixelPos mask_center(const MaskParams& p) {
    if (p.shape == MaskParams::Shape::Disk) return p.center;
    return {(p.row0 + p.row1) / 2.0, (p.col0 + p.col1) / 2.0};
}

ObjectMask make_mask(const SceneParams& p) {
    if (p.mask.shape == MaskParams::Shape::Disk) {
        if (!(p.mask.radius > 0)) throw InvalidArgument("disk mask radius must be > 0");
        return ObjectMask::disk(p.height, p.width, p.mask.center.row, p.mask.center.col, p.mask.radius);
    }
    if (p.mask.row0 > p.mask.row1 || p.mask.col0 > p.mask.col1) throw InvalidArgument("rect mask is empty");
    return ObjectMask::rect(p.height, p.width, p.mask.row0, p.mask.col0, p.mask.row1, p.mask.col1);
}

}  // namespace

const char* family_name(MotionFamily f) {
    switch (f) {
        case MotionFamily::Translation: return "translation";
        case MotionFamily::Rotation: return "rotation";
        case MotionFamily::Hinge: return "hinge";
        case MotionFamily::Oscillation: return "oscillation";
        case MotionFamily::CameraPan: return "camera_pan";
    }
    return "?";
}

MotionFamily family_from_name(const std::string& name) {
    for (auto f : {MotionFamily::Translation, MotionFamily::Rotation, MotionFamily::Hinge, MotionFamily::Oscillation,
                   MotionFamily::CameraPan}) {
        if (name == family_name(f)) return f;
    }
    throw ConfigError("unknown motion family '" + name + "'");
}

FlowField motion_term_flow(const MotionTerm& term, const FlowShape& shape, const ObjectMask& mask,
                           PixelPos center) {
    mask.require_compatible(FlowField(shape));
    FlowField f(shape);
    if (term.family == MotionFamily::Hinge) {
        int r0 = shape.height, r1 = -1, c0 = shape.width, c1 = -1;
        for (int i = 0; i < shape.height; ++i) {
            for (int j = 0; j < shape.width; ++j) {
                if (!mask.inside(i, j)) continue;
                r0 = std::min(r0, i);
                r1 = std::max(r1, i);
                c0 = std::min(c0, j);
                c1 = std::max(c1, j);
            }
        }
        if (term.pivot.row < r0 || term.pivot.row > r1 || term.pivot.col < c0 || term.pivot.col > c1) {
            throw InvalidArgument("hinge pivot lies outside the mask bounding box");
        }
    }
    if (term.family == MotionFamily::Oscillation && !(term.period > 0)) {
        throw InvalidArgument("oscillation period must be > 0");
    }
    const Vec2 dir = direction(term.angle_deg);
    for (int k = 0; k < shape.frames; ++k) {
        for (int i = 0; i < shape.height; ++i) {
            for (int j = 0; j < shape.width; ++j) {
                const bool in = mask.inside(i, j);
                Vec2 o;
                switch (term.family) {
                    case MotionFamily::Translation:
                        if (in) o = dir * (k * term.speed);
                        break;
                    case MotionFamily::CameraPan:
                        o = dir * (k * term.speed);
                        break;
                    case MotionFamily::Rotation:
                        if (in) {
                            const Vec2 p{j - center.col, i - center.row};
                            o = rotate(p, k * term.omega) - p;
                        }
                        break;
                    case MotionFamily::Hinge:
                        if (in) {
                            const Vec2 p{j - term.pivot.col, i - term.pivot.row};
                            o = rotate(p, k * term.omega) - p;
                        }
                        break;
                    case MotionFamily::Oscillation:
                        if (in) o = dir * (term.amplitude * std::sin(2.0 * std::numbers::pi * k / term.period));
                        break;
                }
                f.set(k, i, j, o);
            }
        }
    }
    return f;
}

std::vector<FlowField> SceneSpec::means() const {
    std::vector<FlowField> out;
    out.reserve(bank.size());
    for (const auto& b : bank) out.push_back(b.mean);
    return out;
}

SceneSpec build_motion_bank(const SceneParams& params) {
    if (params.frames < 1 || params.height < 1 || params.width < 1) throw InvalidArgument("scene grid must be positive");
    if (!(params.jitter >= 0.0)) throw InvalidArgument("jitter must be >= 0");
    if (params.modes.empty()) throw InvalidArgument("scene has no motion modes");
    SceneSpec scene;
    scene.params = params;
    scene.jitter = params.jitter;
    scene.mask = make_mask(params);
    const FlowShape shape{params.frames, params.height, params.width};
    const PixelPos center = mask_center(params.mask);

    double total = 0.0;
    std::set<std::string> labels;
    for (const auto& mode : params.modes) {
        if (!(mode.weight > 0)) throw InvalidArgument("mode '" + mode.label + "' needs a positive weight");
        if (!labels.insert(mode.label).second) throw InvalidArgument("duplicate mode label '" + mode.label + "'");
        if (mode.motion.empty()) throw InvalidArgument("mode '" + mode.label + "' has no motion terms");
        total += mode.weight;
    }
    for (const auto& mode : params.modes) {
        FlowField mean(shape);
        for (const auto& term : mode.motion) mean += motion_term_flow(term, shape, scene.mask, center);
        scene.bank.push_back({mode.label, mode.weight / total, std::move(mean)});
    }
    return scene;
}

void MixturePrior::validate() const {
    if (means.empty() || means.size() != weights.size()) throw InvalidArgument("mixture needs matching weights and means");
    for (double w : weights) {
        if (!(w > 0)) throw InvalidArgument("mixture weights must be positive");
    }
    if (std::abs(std::accumulate(weights.begin(), weights.end(), 0.0) - 1.0) > 1e-9) {
        throw InvalidArgument("mixture weights must sum to 1");
    }
    for (const auto& m : means) require_same_shape(means.front(), m, "mixture");
    if (!(jitter >= 0)) throw InvalidArgument("mixture jitter must be >= 0");
}

MixturePrior to_prior(const SceneSpec& scene) {
    MixturePrior p;
    for (const auto& b : scene.bank) {
        p.weights.push_back(b.weight);
        p.means.push_back(b.mean);
    }
    p.jitter = scene.jitter;
    p.validate();
    return p;
}

namespace {

struct NoisedMarginal {
    double ab;   // alpha_bar
    double sab;  // sqrt(alpha_bar)
    double v;    // per-coordinate variance of x_t given a component
};

NoisedMarginal marginal(const MixturePrior& prior, int t, const NoiseSchedule& sched) {
    const double ab = sched.alpha_bar(t);
    return {ab, std::sqrt(ab), ab * prior.jitter * prior.jitter + (1.0 - ab)};
}

FlowField responsibility_mean(const MixturePrior& prior, const std::vector<double>& gamma) {
    FlowField mean(prior.shape());
    for (std::size_t i = 0; i < gamma.size(); ++i) mean.axpy(gamma[i], prior.means[i]);
    return mean;
}

}  // namespace

std::vector<double> responsibilities(const MixturePrior& prior, const FlowField& x_t, int t,
                                     const NoiseSchedule& sched) {
    const auto nm = marginal(prior, t, sched);
    const std::size_t K = prior.means.size();
    std::vector<double> logit(K);
    const auto x = x_t.data();
    for (std::size_t i = 0; i < K; ++i) {
        require_same_shape(x_t, prior.means[i], "responsibilities");
        const auto mu = prior.means[i].data();
        double sq = 0.0;
        for (std::size_t n = 0; n < x.size(); ++n) {
            const double d = x[n] - nm.sab * mu[n];
            sq += d * d;
        }
        logit[i] = std::log(prior.weights[i]) - sq / (2.0 * nm.v);
    }
    const double top = *std::max_element(logit.begin(), logit.end());
    double z = 0.0;
    for (double& l : logit) {
        l = std::exp(l - top);
        z += l;
    }
    for (double& l : logit) l /= z;
    return logit;
}

FlowField exact_eps(const MixturePrior& prior, const FlowField& x_t, int t, const NoiseSchedule& sched) {
    const auto nm = marginal(prior, t, sched);
    const auto gamma = responsibilities(prior, x_t, t, sched);
    FlowField out = x_t;
    out.axpy(-nm.sab, responsibility_mean(prior, gamma));
    out *= std::sqrt(1.0 - nm.ab) / nm.v;
    return out;
}

FlowField exact_vjp(const MixturePrior& prior, const FlowField& x_t, int t, const NoiseSchedule& sched,
                    const FlowField& cotangent) {
    require_same_shape(x_t, cotangent, "exact_vjp");
    const auto nm = marginal(prior, t, sched);
    const auto gamma = responsibilities(prior, x_t, t, sched);
    const FlowField mean = responsibility_mean(prior, gamma);
    // J = sqrt(1-ab)/v (I - (ab/v) sum_i gamma_i (mu_i - mean)(mu_i - mean)^T), symmetric.
    FlowField out = cotangent;
    const double c = nm.ab / nm.v;
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        if (gamma[i] == 0.0) continue;
        FlowField diff = prior.means[i] - mean;
        const double proj = diff.dot(cotangent);
        out.axpy(-c * gamma[i] * proj, diff);
    }
    out *= std::sqrt(1.0 - nm.ab) / nm.v;
    return out;
}

FlowField sample_prior(const MixturePrior& prior, std::uint64_t seed, std::size_t* component) {
    prior.validate();
    Rng rng(seed);
    const std::size_t i = rng.categorical(prior.weights);
    if (component) *component = i;
    FlowField out = prior.means[i];
    for (double& v : out.data()) v += prior.jitter * rng.normal();
    return out;
}

MixtureDenoiser::MixtureDenoiser(MixturePrior prior, NoiseSchedule sched)
    : prior_(std::move(prior)), sched_(std::move(sched)) {
    prior_.validate();
}

FlowField MixtureDenoiser::predict_eps(const FlowField& x_t, int t) const {
    return exact_eps(prior_, x_t, t, sched_);
}

FlowField MixtureDenoiser::vjp(const FlowField& x_t, int t, const FlowField& cotangent) const {
    return exact_vjp(prior_, x_t, t, sched_, cotangent);
}

// JSON ---------------------------------------------------------------------

namespace {

void reject_unknown(const nlohmann::json& doc, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!doc.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
T get_or(const nlohmann::json& doc, const char* key, T fallback, const std::string& where) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("bad value for '") + key + "' in " + where);
    }
}

nlohmann::json term_json(const MotionTerm& t) {
    nlohmann::json j{{"family", family_name(t.family)}};
    switch (t.family) {
        case MotionFamily::Translation:
        case MotionFamily::CameraPan:
            j["angle_deg"] = t.angle_deg;
            j["speed"] = t.speed;
            break;
        case MotionFamily::Rotation: j["omega"] = t.omega; break;
        case MotionFamily::Hinge:
            j["omega"] = t.omega;
            j["pivot"] = {t.pivot.row, t.pivot.col};
            break;
        case MotionFamily::Oscillation:
            j["angle_deg"] = t.angle_deg;
            j["amplitude"] = t.amplitude;
            j["period"] = t.period;
            break;
    }
    return j;
}

MotionTerm term_from_json(const nlohmann::json& j) {
    const std::string where = "motion term";
    reject_unknown(j, {"family", "angle_deg", "speed", "omega", "pivot", "amplitude", "period"}, where);
    if (!j.contains("family") || !j.at("family").is_string()) throw ConfigError("motion term needs a family name");
    MotionTerm t;
    t.family = family_from_name(j.at("family").get<std::string>());
    t.angle_deg = get_or(j, "angle_deg", 0.0, where);
    t.speed = get_or(j, "speed", 0.0, where);
    t.omega = get_or(j, "omega", 0.0, where);
    t.amplitude = get_or(j, "amplitude", 0.0, where);
    t.period = get_or(j, "period", 0.0, where);
    if (j.contains("pivot")) {
        const auto p = get_or(j, "pivot", std::vector<double>{}, where);
        if (p.size() != 2) throw ConfigError("hinge pivot must be [row, col]");
        t.pivot = {p[0], p[1]};
    } else if (t.family == MotionFamily::Hinge) {
        throw ConfigError("hinge needs a pivot");
    }
    return t;
}

}  // namespace

nlohmann::json to_json(const SceneParams& p) {
    nlohmann::json mask;
    if (p.mask.shape == MaskParams::Shape::Disk) {
        mask = {{"shape", "disk"}, {"center", {p.mask.center.row, p.mask.center.col}}, {"radius", p.mask.radius}};
    } else {
        mask = {{"shape", "rect"}, {"rows", {p.mask.row0, p.mask.row1}}, {"cols", {p.mask.col0, p.mask.col1}}};
    }
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& m : p.modes) {
        nlohmann::json motion = nlohmann::json::array();
        for (const auto& t : m.motion) motion.push_back(term_json(t));
        modes.push_back({{"label", m.label}, {"weight", m.weight}, {"motion", motion}});
    }
    return {{"schema_version", 1}, {"frames", p.frames}, {"height", p.height}, {"width", p.width},
            {"mask", mask},        {"jitter", p.jitter}, {"modes", modes}};
}

SceneParams scene_params_from_json(const nlohmann::json& doc) {
    const std::string where = "scene";
    reject_unknown(doc, {"schema_version", "frames", "height", "width", "mask", "jitter", "modes"}, where);
    if (get_or(doc, "schema_version", 1, where) != 1) throw ConfigError("unsupported scene schema_version");
    SceneParams p;
    p.frames = get_or(doc, "frames", p.frames, where);
    p.height = get_or(doc, "height", p.height, where);
    p.width = get_or(doc, "width", p.width, where);
    p.jitter = get_or(doc, "jitter", p.jitter, where);
    if (doc.contains("mask")) {
        const auto& m = doc.at("mask");
        reject_unknown(m, {"shape", "center", "radius", "rows", "cols"}, "mask");
        const auto shape = get_or(m, "shape", std::string("disk"), "mask");
        if (shape == "disk") {
            p.mask.shape = MaskParams::Shape::Disk;
            const auto c = get_or(m, "center", std::vector<double>{p.height / 2.0, p.width / 2.0}, "mask");
            if (c.size() != 2) throw ConfigError("mask center must be [row, col]");
            p.mask.center = {c[0], c[1]};
            p.mask.radius = get_or(m, "radius", p.mask.radius, "mask");
        } else if (shape == "rect") {
            p.mask.shape = MaskParams::Shape::Rect;
            const auto rows = get_or(m, "rows", std::vector<int>{}, "mask");
            const auto cols = get_or(m, "cols", std::vector<int>{}, "mask");
            if (rows.size() != 2 || cols.size() != 2) throw ConfigError("rect mask needs rows and cols ranges");
            p.mask.row0 = rows[0];
            p.mask.row1 = rows[1];
            p.mask.col0 = cols[0];
            p.mask.col1 = cols[1];
        } else {
            throw ConfigError("unknown mask shape '" + shape + "'");
        }
    } else {
        p.mask.center = {p.height / 2.0, p.width / 2.0};
    }
    if (!doc.contains("modes") || !doc.at("modes").is_array()) throw ConfigError("scene needs a 'modes' array");
    for (const auto& m : doc.at("modes")) {
        reject_unknown(m, {"label", "weight", "motion"}, "mode");
        ModeParams mode;
        mode.label = get_or(m, "label", std::string{}, "mode");
        if (mode.label.empty()) throw ConfigError("mode needs a label");
        mode.weight = get_or(m, "weight", 1.0, "mode");
        if (!m.contains("motion") || !m.at("motion").is_array()) throw ConfigError("mode needs a 'motion' array");
        for (const auto& t : m.at("motion")) mode.motion.push_back(term_from_json(t));
        p.modes.push_back(std::move(mode));
    }
    return p;
}

}  // namespace motionmodes
