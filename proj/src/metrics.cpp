#include "motionmodes/metrics.hpp"

#include <cstdio>
#include <limits>
#include <set>

namespace motionmodes {

double masked_mean_distance(const FlowField& a, const FlowField& b, const ObjectMask& m, const GuidanceConfig& cfg) {
    require_same_shape(a, b, "masked_mean_distance");
    m.require_compatible(a);
    double acc = 0.0;
    for (int k = 0; k < a.frames(); ++k) {
        for (int i = 0; i < a.height(); ++i) {
            for (int j = 0; j < a.width(); ++j) {
                if (m.inside(i, j)) acc += offset_distance(a.at(k, i, j), b.at(k, i, j), cfg.diversity_weights, cfg.e_angle);
            }
        }
    }
    return acc / (static_cast<double>(m.object_pixels()) * a.frames());
}

double coverage_threshold(const SceneSpec& scene, const GuidanceConfig& cfg) {
    if (scene.bank.size() < 2) return std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scene.bank.size(); ++i) {
        for (std::size_t j = i + 1; j < scene.bank.size(); ++j) {
            best = std::min(best, masked_mean_distance(scene.bank[i].mean, scene.bank[j].mean, scene.mask, cfg));
        }
    }
    return 0.5 * best;
}

std::pair<int, double> match_bank(const FlowField& x, const SceneSpec& scene, const GuidanceConfig& cfg,
                                  double threshold) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scene.bank.size(); ++i) {
        const double d = masked_mean_distance(x, scene.bank[i].mean, scene.mask, cfg);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return {best_d < threshold ? best : -1, best_d};
}

MetricsReport compute_metrics(std::span<const FlowField> modes, const ObjectMask& m, const GuidanceConfig& cfg,
                              const SceneSpec* scene, std::span<const int> sample_indices) {
    if (modes.empty()) throw InvalidArgument("metrics need at least one mode");
    if (!sample_indices.empty() && sample_indices.size() != modes.size()) {
        throw InvalidArgument("one sample index per mode required");
    }
    cfg.validate();
    MetricsReport r;
    const double n = static_cast<double>(modes.size());
    const double threshold = scene ? coverage_threshold(*scene, cfg) : 0.0;
    std::set<int> seen;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        ModeMetrics mm;
        mm.diversity = diversity_energy(modes[i], m, modes, cfg);
        std::vector<FlowField> others;
        for (std::size_t j = 0; j < modes.size(); ++j) {
            if (j != i) others.push_back(modes[j]);
        }
        mm.diversity_cross = diversity_energy(modes[i], m, others, cfg);
        mm.camera = camera_energy(modes[i], m);
        mm.object = object_energy(modes[i], m, cfg);
        if (scene) {
            std::tie(mm.matched, mm.match_distance) = match_bank(modes[i], *scene, cfg, threshold);
            if (mm.matched >= 0 && seen.insert(mm.matched).second &&
                seen.size() == scene->bank.size()) {
                r.samples_to_full_coverage = (sample_indices.empty() ? static_cast<int>(i) : sample_indices[i]) + 1;
            }
        }
        r.diversity += mm.diversity / n;
        r.diversity_cross += mm.diversity_cross / n;
        r.camera_raw += mm.camera / n;
        r.object_raw += mm.object / n;
        r.per_mode.push_back(mm);
    }
    r.camera = kCameraMetricScale * r.camera_raw;
    r.object = kObjectMetricScale * r.object_raw;
    r.focus = 0.5 * (r.camera + r.object);
    r.tradeoff = 0.5 * (r.diversity + r.focus);
    if (scene) r.coverage = static_cast<double>(seen.size()) / static_cast<double>(scene->bank.size());
    return r;
}

MetricsReport compute_metrics(const ModeSet& set, const ObjectMask& m, const GuidanceConfig& cfg,
                              const SceneSpec* scene) {
    std::vector<int> indices;
    for (const auto& mode : set.modes) indices.push_back(mode.sample_index);
    const auto flows = set.flows();
    return compute_metrics(flows, m, cfg, scene, indices);
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json per_mode = nlohmann::json::array();
    for (const auto& mm : r.per_mode) {
        nlohmann::json j{{"E_d", mm.diversity}, {"E_d_cross", mm.diversity_cross}, {"E_c", mm.camera},
                         {"E_o", mm.object}};
        if (r.coverage) {
            j["matched"] = mm.matched;
            j["match_distance"] = mm.match_distance;
        }
        per_mode.push_back(j);
    }
    nlohmann::json doc{{"schema_version", 1},
                       {"modes", r.per_mode.size()},
                       {"E_d", r.diversity},
                       {"E_d_cross", r.diversity_cross},
                       {"E_c_raw", r.camera_raw},
                       {"E_c", r.camera},
                       {"E_o_raw", r.object_raw},
                       {"E_o", r.object},
                       {"E_f", r.focus},
                       {"E", r.tradeoff},
                       {"per_mode", per_mode}};
    if (r.coverage) doc["coverage"] = *r.coverage;
    doc["samples_to_full_coverage"] = r.samples_to_full_coverage ? nlohmann::json(*r.samples_to_full_coverage)
                                                                  : nlohmann::json(nullptr);
    return doc;
}

std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-20s %12s %12s %10s %10s %10s %12s\n", "method", "E_d", "E_d_cross", "E_c",
                  "E_o", "E_f", "E");
    out += buf;
    for (const auto& [name, r] : rows) {
        std::snprintf(buf, sizeof buf, "%-20s %12.4f %12.4f %10.4f %10.4f %10.4f %12.4f\n", name.c_str(), r.diversity,
                      r.diversity_cross, r.camera, r.object, r.focus, r.tradeoff);
        out += buf;
    }
    return out;
}

}  // namespace motionmodes
