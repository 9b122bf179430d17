#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "motionmodes/diffusion.hpp"
#include "motionmodes/flow.hpp"

namespace motionmodes {

enum class MotionFamily { Translation, Rotation, Hinge, Oscillation, CameraPan };

const char* family_name(MotionFamily f);
MotionFamily family_from_name(const std::string& name);

/// One analytic motion term. Which parameters apply depends on the family:
///   translation  k*speed*(cos a, sin a) inside the mask
///   rotation     R(k*omega) p - p about the mask center, inside the mask
///   hinge        R(k*omega) (p - pivot) - (p - pivot), inside the mask
///   oscillation  amplitude * sin(2 pi k / period) * (cos a, sin a), inside the mask
///   camera_pan   k*speed*(cos a, sin a) over the whole grid
/// Angles are in degrees in image coordinates (x right, y down).
struct MotionTerm {
    MotionFamily family = MotionFamily::Translation;
    double angle_deg = 0.0;
    double speed = 0.0;
    double omega = 0.0;
    double amplitude = 0.0;
    double period = 0.0;
    PixelPos pivot;
};

struct ModeParams {
    std::string label;
    double weight = 1.0;
    std::vector<MotionTerm> motion;  // summed
};

struct MaskParams {
    enum class Shape { Disk, Rect };
    Shape shape = Shape::Disk;
    PixelPos center{16, 16};  // disk center
    double radius = 8.0;
    int row0 = 0, row1 = 0, col0 = 0, col1 = 0;  // rect, inclusive
};

/// Serializable scene description: grid, mask geometry, and motion families.
struct SceneParams {
    int frames = 8;
    int height = 32;
    int width = 32;
    MaskParams mask;
    double jitter = 0.25;
    std::vector<ModeParams> modes;
};

nlohmann::json to_json(const SceneParams& p);
SceneParams scene_params_from_json(const nlohmann::json& doc);

struct BankMode {
    std::string label;
    double weight = 0.0;
    FlowField mean;
};

/// Materialized scene: mask and mean flows of every mode.
struct SceneSpec {
    SceneParams params;
    ObjectMask mask;
    std::vector<BankMode> bank;
    double jitter = 0.25;

    FlowShape shape() const { return {params.frames, params.height, params.width}; }
    std::vector<FlowField> means() const;
};

SceneSpec build_motion_bank(const SceneParams& params);
/// Mean flow of one motion term on the given grid.
FlowField motion_term_flow(const MotionTerm& term, const FlowShape& shape, const ObjectMask& mask,
                           PixelPos mask_center);

/// Isotropic Gaussian mixture sum_i w_i N(mu_i, s^2 I) over flow fields.
struct MixturePrior {
    std::vector<double> weights;
    std::vector<FlowField> means;
    double jitter = 0.25;

    void validate() const;
    FlowShape shape() const { return means.front().shape(); }
};

MixturePrior to_prior(const SceneSpec& scene);

/// Posterior component probabilities of x_t under the noised mixture.
std::vector<double> responsibilities(const MixturePrior& prior, const FlowField& x_t, int t,
                                     const NoiseSchedule& sched);
/// sqrt(1-abar) (x_t - sqrt(abar) sum_i gamma_i mu_i) / v, v = abar s^2 + 1 - abar
FlowField exact_eps(const MixturePrior& prior, const FlowField& x_t, int t, const NoiseSchedule& sched);
/// J^T u with J the Jacobian of exact_eps; O(K D).
FlowField exact_vjp(const MixturePrior& prior, const FlowField& x_t, int t, const NoiseSchedule& sched,
                    const FlowField& cotangent);
/// Draws a component by weight and adds s * N(0, I).
FlowField sample_prior(const MixturePrior& prior, std::uint64_t seed, std::size_t* component = nullptr);

class MixtureDenoiser final : public Denoiser {
public:
    MixtureDenoiser(MixturePrior prior, NoiseSchedule sched);

    FlowShape shape() const override { return prior_.shape(); }
    FlowField predict_eps(const FlowField& x_t, int t) const override;
    FlowField vjp(const FlowField& x_t, int t, const FlowField& cotangent) const override;

    const MixturePrior& prior() const { return prior_; }

private:
    MixturePrior prior_;
    NoiseSchedule sched_;
};

}  // namespace motionmodes
