#pragma once

#include <cstdint>
#include <vector>

#include "motionmodes/diffusion.hpp"
#include "motionmodes/priors.hpp"

namespace motionmodes {

struct TrainingConfig {
    int hidden = 24;
    int epochs = 12;
    int steps_per_epoch = 25;
    int batch_size = 8;
    int heldout_size = 32;
    double learning_rate = 3e-3;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Held-out diffusion loss before training and after every epoch.
struct TrainingReport {
    double initial_loss = 0.0;
    std::vector<double> epoch_loss;
    std::size_t parameters = 0;

    double final_loss() const { return epoch_loss.empty() ? initial_loss : epoch_loss.back(); }
};

/// Per-pixel residual network
///   h   = tanh(conv3x3(W1, [x_t, mask, row, col]) + b1 + e_t)
///   eps = skip_t * x_t + conv3x3(W2, h) + b2
/// with one input/output channel per (frame, component). e_t is a learned
/// per-step embedding added to every hidden channel.
class SmallConvDenoiser final : public Denoiser {
public:
    SmallConvDenoiser(FlowShape shape, ObjectMask mask, int steps, int hidden, std::uint64_t seed);

    FlowShape shape() const override { return shape_; }
    FlowField predict_eps(const FlowField& x_t, int t) const override;
    FlowField vjp(const FlowField& x_t, int t, const FlowField& cotangent) const override;

    std::size_t parameter_count() const { return params_.size(); }
    std::vector<double>& parameters() { return params_; }
    const std::vector<double>& parameters() const { return params_; }

    /// Adds d<cotangent, eps>/d(params) to grad; returns the eps prediction.
    FlowField accumulate_gradient(const FlowField& x_t, int t, const FlowField& cotangent,
                                  std::vector<double>& grad) const;

private:
    struct Cache;
    Cache forward(const FlowField& x_t, int t) const;
    FlowField backward(const Cache& c, int t, const FlowField& cotangent, std::vector<double>* grad) const;

    FlowShape shape_;
    ObjectMask mask_;
    int steps_;
    int hidden_;
    int in_channels_, out_channels_;
    std::size_t w1_, b1_, temb_, w2_, b2_, skip_;  // offsets into params_
    std::vector<double> params_;
};

/// Mean over a batch of w(t) * mean_D ||eps_hat - eps||^2 with w(t) = 1.
struct NoisingExample {
    FlowField x0;
    int t = 1;
    FlowField eps;
};
std::vector<NoisingExample> noising_batch(const MixturePrior& prior, const NoiseSchedule& sched, std::size_t count,
                                          std::uint64_t seed);
double diffusion_loss(const Denoiser& den, const std::vector<NoisingExample>& batch, const NoiseSchedule& sched);

/// Adam on the diffusion loss with fresh noising batches per step. Throws
/// NumericalError if the held-out loss after the first epoch exceeds the initial one.
SmallConvDenoiser train_small_denoiser(const SceneSpec& scene, const NoiseSchedule& sched, const TrainingConfig& cfg,
                                       TrainingReport* report = nullptr);

}  // namespace motionmodes
