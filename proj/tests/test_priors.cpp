#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "motionmodes/priors.hpp"

using namespace motionmodes;

namespace {

// log sum_i w_i N(x; sqrt(ab) mu_i, v I), long double.
long double log_marginal(const MixturePrior& p, const std::vector<long double>& x, double ab) {
    const long double v = ab * p.jitter * p.jitter + (1.0L - ab);
    std::vector<long double> terms;
    for (std::size_t i = 0; i < p.means.size(); ++i) {
        long double sq = 0;
        for (std::size_t d = 0; d < x.size(); ++d) {
            const long double r = x[d] - std::sqrt(static_cast<long double>(ab)) * p.means[i].data()[d];
            sq += r * r;
        }
        terms.push_back(std::log(static_cast<long double>(p.weights[i])) - sq / (2 * v));
    }
    long double mx = terms[0];
    for (auto t : terms) mx = std::max(mx, t);
    long double s = 0;
    for (auto t : terms) s += std::exp(t - mx);
    return mx + std::log(s);
}

// -sqrt(1-ab) * grad log p by central differences.
std::vector<double> numerical_eps(const MixturePrior& p, const FlowField& x, double ab) {
    std::vector<long double> xl(x.data().begin(), x.data().end());
    std::vector<double> out(xl.size());
    const long double h = 1e-5L;
    for (std::size_t d = 0; d < xl.size(); ++d) {
        auto up = xl, dn = xl;
        up[d] += h;
        dn[d] -= h;
        out[d] = static_cast<double>(-std::sqrt(1.0L - ab) * (log_marginal(p, up, ab) - log_marginal(p, dn, ab)) / (2 * h));
    }
    return out;
}

MixturePrior pixel_prior(std::vector<Vec2> means, std::vector<double> weights, double s) {
    MixturePrior p;
    p.jitter = s;
    p.weights = std::move(weights);
    for (Vec2 m : means) p.means.push_back(FlowField::constant({1, 1, 1}, m));
    return p;
}

}  // namespace

TEST_CASE("translation bank means") {
    SceneParams sp = mmtest::translation_scene({0});
    sp.frames = 4;
    const SceneSpec scene = build_motion_bank(sp);
    const FlowField& mu = scene.bank[0].mean;
    for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) {
                const Vec2 expect = scene.mask.inside(i, j) ? Vec2{static_cast<double>(k), 0.0} : Vec2{};
                CHECK(mu.at(k, i, j).x == doctest::Approx(expect.x).epsilon(1e-12));
                CHECK(std::abs(mu.at(k, i, j).y) < 1e-12);
            }
}

TEST_CASE("rotation fixes the mask center") {
    SceneParams sp;
    ModeParams mp;
    mp.label = "spin";
    MotionTerm r;
    r.family = MotionFamily::Rotation;
    r.omega = 0.3;
    mp.motion = {r};
    sp.modes = {mp};
    const SceneSpec scene = build_motion_bank(sp);
    for (int k = 0; k < sp.frames; ++k) CHECK(scene.bank[0].mean.at(k, 16, 16).norm() < 1e-12);
    // a point at radius 4 moves along the circle
    const Vec2 o = scene.bank[0].mean.at(2, 16, 20);
    CHECK(std::hypot(4 + o.x, o.y) == doctest::Approx(4.0));
}

TEST_CASE("camera pan magnitude and the focus hooks") {
    SceneParams sp = mmtest::translation_scene({0, 90});
    ModeParams pan;
    pan.label = "pan";
    MotionTerm p;
    p.family = MotionFamily::CameraPan;
    p.speed = 2;
    pan.motion = {p};
    sp.modes.push_back(pan);
    MotionTerm osc;
    osc.family = MotionFamily::Oscillation;
    osc.amplitude = 2;
    osc.period = 4;
    ModeParams bob;
    bob.label = "bob";
    bob.motion = {osc};
    sp.modes.push_back(bob);
    const SceneSpec scene = build_motion_bank(sp);
    CHECK(camera_energy(scene.bank[2].mean, scene.mask) == doctest::Approx(2.0 * (sp.frames - 1) / 2.0));
    for (int i : {0, 1, 3}) CHECK(camera_energy(scene.bank[i].mean, scene.mask) == 0.0);
    CHECK(scene.bank[3].mean.at(1, 16, 16).x == doctest::Approx(2.0));
    CHECK(scene.bank[3].mean.at(2, 16, 16).norm() < 1e-12);
}

TEST_CASE("translation means are smooth in time") {
    GuidanceConfig cfg;
    for (double v : {0.5, 1.0, 2.0}) {
        const SceneSpec scene = build_motion_bank(mmtest::translation_scene({30}, v));
        const double expect = 0.75 * v + 0.25 / (scene.params.frames - 1);
        CHECK(smoothness_energy(scene.bank[0].mean, scene.mask, cfg) == doctest::Approx(expect));
    }
}

TEST_CASE("bank validation") {
    SceneParams sp = mmtest::translation_scene({0, 90});
    sp.modes[0].weight = 3;
    const SceneSpec scene = build_motion_bank(sp);
    CHECK(scene.bank[0].weight == doctest::Approx(0.75));
    CHECK(scene.bank[1].weight == doctest::Approx(0.25));

    SceneParams dup = sp;
    dup.modes[1].label = dup.modes[0].label;
    CHECK_THROWS_AS(build_motion_bank(dup), InvalidArgument);
    SceneParams neg = sp;
    neg.modes[0].weight = 0;
    CHECK_THROWS_AS(build_motion_bank(neg), InvalidArgument);
    SceneParams hinge = sp;
    hinge.modes[0].motion[0].family = MotionFamily::Hinge;
    hinge.modes[0].motion[0].omega = 0.1;
    hinge.modes[0].motion[0].pivot = {1, 1};
    CHECK_THROWS_AS(build_motion_bank(hinge), InvalidArgument);
    hinge.modes[0].motion[0].pivot = {16, 8};
    CHECK_NOTHROW(build_motion_bank(hinge));
}

TEST_CASE("scene json round trip and strictness") {
    SceneParams sp = mmtest::translation_scene({0, 45});
    sp.mask.shape = MaskParams::Shape::Rect;
    sp.mask.row0 = 10;
    sp.mask.row1 = 20;
    sp.mask.col0 = 5;
    sp.mask.col1 = 25;
    const nlohmann::json j = to_json(sp);
    CHECK(to_json(scene_params_from_json(j)) == j);
    nlohmann::json bad = j;
    bad["modes"][0]["motion"][0]["spede"] = 1;
    CHECK_THROWS_AS(scene_params_from_json(bad), ConfigError);
    bad = j;
    bad["modes"][0]["motion"][0]["family"] = "teleport";
    CHECK_THROWS_AS(scene_params_from_json(bad), ConfigError);
}

TEST_CASE("responsibilities are a stable distribution") {
    const NoiseSchedule sched = NoiseSchedule::cosine();
    const MixturePrior p = to_prior(build_motion_bank(mmtest::translation_scene({0, 90, 180})));
    for (double scale : {1.0, 100.0, 1e4}) {
        const FlowField x = mmtest::random_field(p.shape(), 3, scale);
        for (int t : {1, 12, 25}) {
            const auto g = responsibilities(p, x, t, sched);
            double s = 0;
            for (double v : g) {
                CHECK(v >= 0.0);
                CHECK(std::isfinite(v));
                s += v;
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("exact noise prediction") {
    const NoiseSchedule half = NoiseSchedule::from_alpha_bar({1.0, 0.5, 0.05});
    SUBCASE("near point mass recovers the true noise") {
        const MixturePrior p = pixel_prior({{1.0, -2.0}}, {1.0}, 1e-9);
        const FlowField eps = FlowField::constant({1, 1, 1}, {0.3, 0.7});
        const FlowField xt = add_noise(p.means[0], 1, eps, half);
        const FlowField e = exact_eps(p, xt, 1, half);
        CHECK(e.data()[0] == doctest::Approx(0.3).epsilon(1e-9));
        CHECK(e.data()[1] == doctest::Approx(0.7).epsilon(1e-9));
    }
    SUBCASE("equidistant point splits responsibility evenly") {
        const MixturePrior p = pixel_prior({{3, 0}, {-3, 0}}, {0.5, 0.5}, 0.1);
        const FlowField x = FlowField::constant({1, 1, 1}, {0.0, 1.0});
        const auto g = responsibilities(p, x, 1, half);
        CHECK(g[0] == doctest::Approx(0.5));
        CHECK(g[1] == doctest::Approx(0.5));
        const FlowField e = exact_eps(p, x, 1, half);
        CHECK(e.data()[0] == doctest::Approx(0.0));
        CHECK(e.data()[1] > 0.0);
    }
    SUBCASE("two components on one pixel against the numerical score") {
        const MixturePrior p = pixel_prior({{3, 3}, {-3, -3}}, {0.5, 0.5}, 0.1);
        const FlowField x = FlowField::constant({1, 1, 1}, {0.4, 0.4});
        const FlowField e = exact_eps(p, x, 1, half);
        const auto ref = numerical_eps(p, x, 0.5);
        for (std::size_t d = 0; d < 2; ++d) CHECK(e.data()[d] == doctest::Approx(ref[d]).epsilon(1e-6));
    }
}

TEST_CASE("exact vjp") {
    const NoiseSchedule sched = NoiseSchedule::cosine();
    SUBCASE("single component is a scaled identity") {
        const MixturePrior p = to_prior(build_motion_bank(mmtest::translation_scene({0})));
        const FlowField x = mmtest::random_field(p.shape(), 1), u = mmtest::random_field(p.shape(), 2);
        const double ab = sched.alpha_bar(10);
        const double c = std::sqrt(1 - ab) / (ab * p.jitter * p.jitter + 1 - ab);
        const FlowField j = exact_vjp(p, x, 10, sched, u);
        for (std::size_t n = 0; n < u.size(); ++n) CHECK(j.data()[n] == doctest::Approx(c * u.data()[n]).epsilon(1e-12));
    }
    SUBCASE("linear in the cotangent and matching directional differences") {
        MixturePrior p = pixel_prior({{1, 0}, {-1, 0.5}, {0, -1}}, {0.2, 0.5, 0.3}, 0.3);
        mmtest::Rng rng(4);
        for (int trial = 0; trial < 20; ++trial) {
            const FlowField x = normal_field({1, 1, 1}, rng), u = normal_field({1, 1, 1}, rng),
                            w = normal_field({1, 1, 1}, rng), dir = normal_field({1, 1, 1}, rng);
            const int t = 1 + trial % 25;
            const FlowField lin = exact_vjp(p, x, t, sched, 2.0 * u + (-3.0) * w);
            const FlowField sum = 2.0 * exact_vjp(p, x, t, sched, u) + (-3.0) * exact_vjp(p, x, t, sched, w);
            for (std::size_t n = 0; n < 2; ++n) CHECK(lin.data()[n] == doctest::Approx(sum.data()[n]).epsilon(1e-12));
            const double h = 1e-5;
            const FlowField fd = (1.0 / (2 * h)) * (exact_eps(p, x + h * dir, t, sched) - exact_eps(p, x - h * dir, t, sched));
            CHECK(exact_vjp(p, x, t, sched, u).dot(dir) == doctest::Approx(fd.dot(u)).epsilon(1e-6));
        }
    }
}

TEST_CASE("prior sampling") {
    MixturePrior p = pixel_prior({{1, 0}, {0, 2}, {-3, 1}}, {0.2, 0.3, 0.5}, 0.0);
    std::size_t comp = 99;
    const FlowField a = sample_prior(p, 5, &comp);
    REQUIRE(comp < 3);
    CHECK(a == p.means[comp]);
    CHECK(sample_prior(p, 5) == a);

    std::vector<int> counts(3, 0);
    for (std::uint64_t s = 0; s < 10000; ++s) {
        sample_prior(p, derive_seed(77, s), &comp);
        ++counts[comp];
    }
    for (int i = 0; i < 3; ++i) {
        const double expect = 10000 * p.weights[i];
        CHECK(std::abs(counts[i] - expect) <= 3 * std::sqrt(expect * (1 - p.weights[i])));
    }
}
