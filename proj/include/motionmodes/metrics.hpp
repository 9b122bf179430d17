#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "motionmodes/discovery.hpp"
#include "motionmodes/energies.hpp"
#include "motionmodes/priors.hpp"

namespace motionmodes {

inline constexpr double kCameraMetricScale = 0.1;
inline constexpr double kObjectMetricScale = 0.01;

struct ModeMetrics {
    double diversity = 0.0;        // E_d(x, m, X), self term included
    double diversity_cross = 0.0;  // E_d(x, m, X \ {x})
    double camera = 0.0;
    double object = 0.0;
    int matched = -1;  // bank index, or -1
    double match_distance = 0.0;
};

struct MetricsReport {
    double diversity = 0.0;        // mean over modes, self term included
    double diversity_cross = 0.0;  // mean over modes, self term excluded
    double camera_raw = 0.0;
    double camera = 0.0;  // scaled
    double object_raw = 0.0;
    double object = 0.0;  // scaled
    double focus = 0.0;      // 0.5 (camera + object)
    double tradeoff = 0.0;   // 0.5 (diversity + focus)
    std::vector<ModeMetrics> per_mode;
    std::optional<double> coverage;
    /// 1-based count of samples drawn when the last unseen bank label was first matched.
    std::optional<int> samples_to_full_coverage;
};

/// Mean over frames and object pixels of offset_distance under the diversity weights.
double masked_mean_distance(const FlowField& a, const FlowField& b, const ObjectMask& m, const GuidanceConfig& cfg);

/// 0.5 x the smallest pairwise masked_mean_distance between bank means.
double coverage_threshold(const SceneSpec& scene, const GuidanceConfig& cfg);

/// Nearest bank mean and its distance; index is -1 when the distance is not below the threshold.
std::pair<int, double> match_bank(const FlowField& x, const SceneSpec& scene, const GuidanceConfig& cfg,
                                  double threshold);

/// `sample_indices` (0-based draw positions) feed samples_to_full_coverage; when empty
/// the modes are taken to be consecutive draws.
MetricsReport compute_metrics(std::span<const FlowField> modes, const ObjectMask& m, const GuidanceConfig& cfg,
                              const SceneSpec* scene = nullptr, std::span<const int> sample_indices = {});
MetricsReport compute_metrics(const ModeSet& set, const ObjectMask& m, const GuidanceConfig& cfg,
                              const SceneSpec* scene = nullptr);

nlohmann::json to_json(const MetricsReport& r);
/// Plain-text table with the columns of the usual comparison table.
std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace motionmodes
