#include "motionmodes/learned.hpp"

#include <algorithm>
#include <cmath>

#include "motionmodes/errors.hpp"
#include "motionmodes/rng.hpp"

namespace motionmodes {

void TrainingConfig::validate() const {
    if (hidden < 1) throw ConfigError("hidden width must be >= 1");
    if (epochs < 1 || steps_per_epoch < 1) throw ConfigError("training needs at least one epoch and one step");
    if (batch_size < 1 || heldout_size < 1) throw ConfigError("batch sizes must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
}

namespace {

// Planar [channel][row][col] buffers. Flow channel c = 2k + component.
using Planes = std::vector<double>;

void flow_to_planes(const FlowField& x, double* out) {
    const std::size_t hw = static_cast<std::size_t>(x.height()) * x.width();
    const auto d = x.data();
    for (int k = 0; k < x.frames(); ++k) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t n = 2 * (k * hw + p);
            out[(2 * k) * hw + p] = d[n];
            out[(2 * k + 1) * hw + p] = d[n + 1];
        }
    }
}

FlowField planes_to_flow(const FlowShape& shape, const double* in) {
    FlowField x(shape);
    const std::size_t hw = static_cast<std::size_t>(shape.height) * shape.width;
    auto d = x.data();
    for (int k = 0; k < shape.frames; ++k) {
        for (std::size_t p = 0; p < hw; ++p) {
            const std::size_t n = 2 * (k * hw + p);
            d[n] = in[(2 * k) * hw + p];
            d[n + 1] = in[(2 * k + 1) * hw + p];
        }
    }
    return x;
}

// out[o] += sum_c W[o][c] (*) in[c], zero padding, 3x3 kernel.
void conv3x3(const double* w, const double* in, double* out, int cin, int cout, int h, int wd) {
    const std::size_t hw = static_cast<std::size_t>(h) * wd;
    for (int o = 0; o < cout; ++o) {
        double* dst = out + o * hw;
        for (int c = 0; c < cin; ++c) {
            const double* src = in + c * hw;
            const double* k = w + (static_cast<std::size_t>(o) * cin + c) * 9;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const double kv = k[(dy + 1) * 3 + (dx + 1)];
                    if (kv == 0.0) continue;
                    const int j0 = std::max(0, -dx), j1 = std::min(wd, wd - dx);
                    for (int i = std::max(0, -dy); i < std::min(h, h - dy); ++i) {
                        double* row = dst + static_cast<std::size_t>(i) * wd;
                        const double* srow = src + static_cast<std::size_t>(i + dy) * wd + dx;
                        for (int j = j0; j < j1; ++j) row[j] += kv * srow[j];
                    }
                }
            }
        }
    }
}

// Given dL/dout, accumulates dL/dW (if gw) and dL/din (if gin).
void conv3x3_backward(const double* w, const double* in, const double* gout, double* gw, double* gin, int cin,
                      int cout, int h, int wd) {
    const std::size_t hw = static_cast<std::size_t>(h) * wd;
    for (int o = 0; o < cout; ++o) {
        const double* go = gout + o * hw;
        for (int c = 0; c < cin; ++c) {
            const double* src = in + c * hw;
            const std::size_t kbase = (static_cast<std::size_t>(o) * cin + c) * 9;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int kk = (dy + 1) * 3 + (dx + 1);
                    const double kv = w[kbase + kk];
                    const int j0 = std::max(0, -dx), j1 = std::min(wd, wd - dx);
                    double acc = 0.0;
                    for (int i = std::max(0, -dy); i < std::min(h, h - dy); ++i) {
                        const double* grow = go + static_cast<std::size_t>(i) * wd;
                        const std::size_t sofs = static_cast<std::size_t>(i + dy) * wd + dx;
                        if (gw) {
                            const double* srow = src + sofs;
                            for (int j = j0; j < j1; ++j) acc += grow[j] * srow[j];
                        }
                        if (gin) {
                            double* girow = gin + c * hw + sofs;
                            for (int j = j0; j < j1; ++j) girow[j] += kv * grow[j];
                        }
                    }
                    if (gw) gw[kbase + kk] += acc;
                }
            }
        }
    }
}

}  // namespace

struct SmallConvDenoiser::Cache {
    Planes input;   // in_channels x H x W
    Planes hidden;  // tanh activations
    FlowField eps;
};

SmallConvDenoiser::SmallConvDenoiser(FlowShape shape, ObjectMask mask, int steps, int hidden, std::uint64_t seed)
    : shape_(shape), mask_(std::move(mask)), steps_(steps), hidden_(hidden) {
    if (shape_.frames < 1 || shape_.height < 1 || shape_.width < 1) throw InvalidArgument("empty denoiser shape");
    if (mask_.height() != shape_.height || mask_.width() != shape_.width) {
        throw InvalidArgument("mask does not match the denoiser grid");
    }
    if (steps_ < 1 || hidden_ < 1) throw InvalidArgument("steps and hidden width must be >= 1");
    out_channels_ = 2 * shape_.frames;
    in_channels_ = out_channels_ + 3;

    std::size_t n = 0;
    const auto take = [&n](std::size_t count) {
        const std::size_t at = n;
        n += count;
        return at;
    };
    w1_ = take(static_cast<std::size_t>(hidden_) * in_channels_ * 9);
    b1_ = take(hidden_);
    temb_ = take(static_cast<std::size_t>(steps_ + 1) * hidden_);
    w2_ = take(static_cast<std::size_t>(out_channels_) * hidden_ * 9);
    b2_ = take(out_channels_);
    skip_ = take(steps_ + 1);
    params_.assign(n, 0.0);

    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(9.0 * in_channels_);
    const double s2 = 0.1 / std::sqrt(9.0 * hidden_);
    for (std::size_t i = w1_; i < b1_; ++i) params_[i] = s1 * rng.normal();
    for (std::size_t i = w2_; i < b2_; ++i) params_[i] = s2 * rng.normal();
}

SmallConvDenoiser::Cache SmallConvDenoiser::forward(const FlowField& x_t, int t) const {
    if (x_t.shape() != shape_) throw InvalidArgument("input does not match the denoiser shape");
    if (t < 1 || t > steps_) throw InvalidArgument("timestep out of range");
    const int h = shape_.height, w = shape_.width;
    const std::size_t hw = static_cast<std::size_t>(h) * w;

    Cache c;
    c.input.assign(in_channels_ * hw, 0.0);
    flow_to_planes(x_t, c.input.data());
    double* cond = c.input.data() + out_channels_ * hw;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const std::size_t p = static_cast<std::size_t>(i) * w + j;
            cond[p] = mask_.inside(i, j) ? 1.0 : 0.0;
            cond[hw + p] = (i + 0.5) / h - 0.5;
            cond[2 * hw + p] = (j + 0.5) / w - 0.5;
        }
    }

    c.hidden.assign(hidden_ * hw, 0.0);
    for (int o = 0; o < hidden_; ++o) {
        const double bias = params_[b1_ + o] + params_[temb_ + static_cast<std::size_t>(t) * hidden_ + o];
        std::fill_n(c.hidden.data() + o * hw, hw, bias);
    }
    conv3x3(params_.data() + w1_, c.input.data(), c.hidden.data(), in_channels_, hidden_, h, w);
    for (double& v : c.hidden) v = std::tanh(v);

    Planes out(out_channels_ * hw);
    const double skip = params_[skip_ + t];
    for (int o = 0; o < out_channels_; ++o) {
        for (std::size_t p = 0; p < hw; ++p) out[o * hw + p] = params_[b2_ + o] + skip * c.input[o * hw + p];
    }
    conv3x3(params_.data() + w2_, c.hidden.data(), out.data(), hidden_, out_channels_, h, w);
    c.eps = planes_to_flow(shape_, out.data());
    return c;
}

FlowField SmallConvDenoiser::backward(const Cache& c, int t, const FlowField& cotangent,
                                      std::vector<double>* grad) const {
    require_same_shape(c.eps, cotangent, "denoiser backward");
    const int h = shape_.height, w = shape_.width;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    double* g = grad ? grad->data() : nullptr;

    Planes gout(out_channels_ * hw);
    flow_to_planes(cotangent, gout.data());

    Planes gin(in_channels_ * hw, 0.0);
    const double skip = params_[skip_ + t];
    for (std::size_t n = 0; n < out_channels_ * hw; ++n) gin[n] = skip * gout[n];
    if (g) {
        double gs = 0.0;
        for (std::size_t n = 0; n < out_channels_ * hw; ++n) gs += gout[n] * c.input[n];
        g[skip_ + t] += gs;
        for (int o = 0; o < out_channels_; ++o) {
            double gb = 0.0;
            for (std::size_t p = 0; p < hw; ++p) gb += gout[o * hw + p];
            g[b2_ + o] += gb;
        }
    }

    Planes ghidden(hidden_ * hw, 0.0);
    conv3x3_backward(params_.data() + w2_, c.hidden.data(), gout.data(), g ? g + w2_ : nullptr, ghidden.data(),
                     hidden_, out_channels_, h, w);
    for (std::size_t n = 0; n < ghidden.size(); ++n) ghidden[n] *= 1.0 - c.hidden[n] * c.hidden[n];
    if (g) {
        for (int o = 0; o < hidden_; ++o) {
            double gb = 0.0;
            for (std::size_t p = 0; p < hw; ++p) gb += ghidden[o * hw + p];
            g[b1_ + o] += gb;
            g[temb_ + static_cast<std::size_t>(t) * hidden_ + o] += gb;
        }
    }
    conv3x3_backward(params_.data() + w1_, c.input.data(), ghidden.data(), g ? g + w1_ : nullptr, gin.data(),
                     in_channels_, hidden_, h, w);
    return planes_to_flow(shape_, gin.data());
}

FlowField SmallConvDenoiser::predict_eps(const FlowField& x_t, int t) const { return forward(x_t, t).eps; }

FlowField SmallConvDenoiser::vjp(const FlowField& x_t, int t, const FlowField& cotangent) const {
    return backward(forward(x_t, t), t, cotangent, nullptr);
}

FlowField SmallConvDenoiser::accumulate_gradient(const FlowField& x_t, int t, const FlowField& cotangent,
                                                 std::vector<double>& grad) const {
    if (grad.size() != params_.size()) throw InvalidArgument("gradient buffer does not match the parameters");
    Cache c = forward(x_t, t);
    backward(c, t, cotangent, &grad);
    return std::move(c.eps);
}

std::vector<NoisingExample> noising_batch(const MixturePrior& prior, const NoiseSchedule& sched, std::size_t count,
                                          std::uint64_t seed) {
    prior.validate();
    Rng rng(seed);
    std::vector<NoisingExample> batch;
    batch.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        NoisingExample ex;
        ex.x0 = sample_prior(prior, rng.engine()());
        ex.t = 1 + static_cast<int>(rng.uniform() * sched.steps()) % sched.steps();
        ex.eps = normal_field(prior.shape(), rng);
        batch.push_back(std::move(ex));
    }
    return batch;
}

double diffusion_loss(const Denoiser& den, const std::vector<NoisingExample>& batch, const NoiseSchedule& sched) {
    if (batch.empty()) throw InvalidArgument("empty noising batch");
    double total = 0.0;
    for (const auto& ex : batch) {
        const FlowField diff = den.predict_eps(add_noise(ex.x0, ex.t, ex.eps, sched), ex.t) - ex.eps;
        double sq = 0.0;
        for (double v : diff.data()) sq += v * v;
        total += sq / static_cast<double>(diff.size());
    }
    return total / static_cast<double>(batch.size());
}

SmallConvDenoiser train_small_denoiser(const SceneSpec& scene, const NoiseSchedule& sched, const TrainingConfig& cfg,
                                       TrainingReport* report) {
    cfg.validate();
    if (scene.bank.empty()) throw InvalidArgument("training needs a nonempty motion bank");
    const MixturePrior prior = to_prior(scene);
    SmallConvDenoiser net(scene.shape(), scene.mask, sched.steps(), cfg.hidden, derive_seed(cfg.seed, 0));

    const auto heldout = noising_batch(prior, sched, cfg.heldout_size, derive_seed(cfg.seed, 1));
    TrainingReport rep;
    rep.parameters = net.parameter_count();
    rep.initial_loss = diffusion_loss(net, heldout, sched);

    auto& theta = net.parameters();
    const std::size_t n = theta.size();
    std::vector<double> grad(n), m1(n, 0.0), m2(n, 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int s = 0; s < cfg.steps_per_epoch; ++s) {
            const auto batch = noising_batch(prior, sched, cfg.batch_size,
                                             derive_seed(cfg.seed, 2 + static_cast<std::uint64_t>(step)));
            std::fill(grad.begin(), grad.end(), 0.0);
            for (const auto& ex : batch) {
                const FlowField x_t = add_noise(ex.x0, ex.t, ex.eps, sched);
                // d/d eps_hat of mean_D ||eps_hat - eps||^2 / B
                FlowField g = net.predict_eps(x_t, ex.t) - ex.eps;
                g *= 2.0 / (static_cast<double>(g.size()) * cfg.batch_size);
                net.accumulate_gradient(x_t, ex.t, g, grad);
            }
            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < n; ++i) {
                m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                theta[i] -= cfg.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + adam_eps);
            }
        }
        const double loss = diffusion_loss(net, heldout, sched);
        if (!std::isfinite(loss)) throw NumericalError("denoiser training produced a non-finite loss");
        rep.epoch_loss.push_back(loss);
        if (epoch == 0 && loss > rep.initial_loss) {
            throw NumericalError("denoiser training diverged: held-out loss rose from " +
                                 std::to_string(rep.initial_loss) + " to " + std::to_string(loss));
        }
    }
    if (report) *report = std::move(rep);
    return net;
}

}  // namespace motionmodes
