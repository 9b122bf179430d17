#include "motionmodes/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "motionmodes/rng.hpp"

namespace motionmodes {

double gradient_error(const FlowField& x, const ObjectMask& m, std::span<const FlowField> modes,
                      const GuidanceConfig& cfg, double step, double kink_radius) {
    const FlowField analytic = combined_energy_gradient(x, m, modes, cfg);
    FlowField probe = x;
    auto p = probe.data();
    const auto g = analytic.data();
    double diff = 0.0, scale = 0.0;
    for (std::size_t n = 0; n < p.size(); ++n) {
        const std::size_t v = n & ~std::size_t{1};
        if (std::hypot(p[v], p[v + 1]) < kink_radius) continue;
        const double saved = p[n];
        p[n] = saved + step;
        const double up = combined_energy(probe, m, modes, cfg);
        p[n] = saved - step;
        const double down = combined_energy(probe, m, modes, cfg);
        p[n] = saved;
        const double fd = (up - down) / (2.0 * step);
        diff = std::max(diff, std::abs(fd - g[n]));
        scale = std::max(scale, std::abs(g[n]));
    }
    if (scale == 0.0) return diff;
    return diff / scale;
}

namespace {

ObjectMask random_mask(const FlowShape& s, Rng& rng) {
    const auto pick = [&](int n) { return static_cast<int>(rng.uniform() * n) % n; };
    while (true) {
        int r0 = pick(s.height), r1 = pick(s.height), c0 = pick(s.width), c1 = pick(s.width);
        if (r0 > r1) std::swap(r0, r1);
        if (c0 > c1) std::swap(c0, c1);
        const long area = static_cast<long>(r1 - r0 + 1) * (c1 - c0 + 1);
        if (area < static_cast<long>(s.height) * s.width) return ObjectMask::rect(s.height, s.width, r0, c0, r1, c1);
    }
}

}  // namespace

GradcheckReport run_gradcheck(const GuidanceConfig& cfg, const GradcheckOptions& opt) {
    cfg.validate();
    if (opt.trials < 0) throw InvalidArgument("trial count must be >= 0");
    if (opt.shape.height * opt.shape.width < 2) throw InvalidArgument("gradcheck grid needs at least 2 pixels");
    GradcheckReport report;
    report.tolerance = opt.tolerance;
    for (int t = 0; t < opt.trials; ++t) {
        Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(t)));
        const ObjectMask m = random_mask(opt.shape, rng);
        FlowField x = 2.0 * normal_field(opt.shape, rng);
        std::vector<FlowField> modes;
        const int k = t % 3;
        for (int i = 0; i < k; ++i) modes.push_back(2.0 * normal_field(opt.shape, rng));
        GradcheckTrial trial;
        trial.modes = k;
        trial.error = gradient_error(x, m, modes, cfg, opt.step, opt.kink_radius);
        trial.passed = trial.error < opt.tolerance;
        report.passed += trial.passed;
        report.worst = std::max(report.worst, trial.error);
        report.trials.push_back(trial);
    }
    return report;
}

std::string GradcheckReport::summary() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d/%zu within %g (worst %.3e)", passed, trials.size(), tolerance, worst);
    return buf;
}

}  // namespace motionmodes
