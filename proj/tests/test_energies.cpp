#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "motionmodes/energies.hpp"
#include "motionmodes/gradcheck.hpp"

using namespace motionmodes;

namespace {

// Independent long-double softplus(1/(a+e) - tau).
double ref_soft_inverse(long double a, long double tau, long double e) {
    const long double z = 1.0L / (a + e) - tau;
    return static_cast<double>(z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)));
}

const ObjectMask kMask = ObjectMask::rect(6, 7, 1, 2, 3, 5);
const FlowShape kShape{3, 6, 7};

Vec2 rotate(Vec2 v, double a) { return {std::cos(a) * v.x - std::sin(a) * v.y, std::sin(a) * v.x + std::cos(a) * v.y}; }

FlowField rotate_field(FlowField x, double a) {
    for (int k = 0; k < x.frames(); ++k)
        for (int i = 0; i < x.height(); ++i)
            for (int j = 0; j < x.width(); ++j) x.set(k, i, j, rotate(x.at(k, i, j), a));
    return x;
}

}  // namespace

TEST_CASE("soft inverse reference values") {
    CHECK(soft_inverse(0.0, 1.0, 1e-4) == doctest::Approx(9999.0).epsilon(1e-12));
    CHECK(soft_inverse(1e12, 1.0, 1e-4) == doctest::Approx(0.31326168751822286).epsilon(1e-9));
    CHECK(soft_inverse(1.0, 1.0, 1e-4) == doctest::Approx(0.69310).epsilon(1e-5));
    for (double a : {0.0, 1e-3, 0.02, 0.3, 1.0, 4.0, 100.0}) {
        for (double tau : {0.0, 1.0, 4.0, 40.0}) {
            CHECK(soft_inverse(a, tau, 1e-4) == doctest::Approx(ref_soft_inverse(a, tau, 1e-4)).epsilon(1e-12));
        }
    }
}

TEST_CASE("soft inverse derivative matches differences") {
    for (double a : {0.01, 0.2, 0.9, 3.0}) {
        const double h = 1e-6 * std::max(a, 1.0);
        const double fd = (soft_inverse(a + h, 1.0, 1e-4) - soft_inverse(a - h, 1.0, 1e-4)) / (2 * h);
        CHECK(soft_inverse_derivative(a, 1.0, 1e-4) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("offset distance") {
    const DistanceWeights div{0.25, 0.75};
    CHECK(offset_distance({1, 0}, {1, 0}, div, 1e-6) == 0.0);
    CHECK(offset_distance({1, 0}, {0, 1}, div, 1e-6) == doctest::Approx(0.75));
    CHECK(offset_distance({2, 0}, {1, 0}, div, 1e-6) == doctest::Approx(0.25));
    CHECK(offset_distance({0, 0}, {1, 0}, div, 1e-6) == doctest::Approx(1.0));
    mmtest::Rng rng(1);
    for (int n = 0; n < 50; ++n) {
        const Vec2 a{rng.normal(), rng.normal()}, b{rng.normal(), rng.normal()};
        CHECK(offset_distance(a, b, div, 1e-6) == doctest::Approx(offset_distance(b, a, div, 1e-6)));
        CHECK(offset_distance(a, b, div, 1e-6) >= 0.0);
        const auto g = offset_distance_gradient(a, b, div, 1e-6);
        const double h = 1e-6;
        const double fdx = (offset_distance({a.x + h, a.y}, b, div, 1e-6) - offset_distance({a.x - h, a.y}, b, div, 1e-6)) / (2 * h);
        CHECK(g.d_a.x == doctest::Approx(fdx).epsilon(1e-5));
    }
}

TEST_CASE("camera energy") {
    CHECK(camera_energy(FlowField(kShape), kMask) == 0.0);
    CHECK(camera_energy(FlowField::constant(kShape, {3, 4}), kMask) == doctest::Approx(5.0));
    CHECK(camera_energy(mmtest::constant_over(kShape, kMask, {0, 0}, {3, 4}), kMask) == doctest::Approx(5.0));
}

TEST_CASE("object energy") {
    GuidanceConfig cfg;
    CHECK(object_energy(FlowField::constant(kShape, {1, 1}), kMask, cfg) == doctest::Approx(9960.0).epsilon(1e-9));
    CHECK(object_energy(FlowField(kShape), kMask, cfg) == doctest::Approx(9960.0).epsilon(1e-9));
    const double gap40 = object_energy(mmtest::constant_over(kShape, kMask, {40, 0}, {0, 0}), kMask, cfg);
    CHECK(gap40 == doctest::Approx(ref_soft_inverse(40, 40, 1e-4)).epsilon(1e-9));
    CHECK(gap40 < 1e-17);
}

TEST_CASE("diversity energy") {
    GuidanceConfig cfg;
    const FlowField x = FlowField::constant(kShape, {1, 0});
    CHECK(diversity_energy(x, kMask, {}, cfg) == 0.0);
    CHECK(diversity_energy(x, kMask, std::vector{x}, cfg) == doctest::Approx(9999.0).epsilon(1e-12));
    const FlowField y = FlowField::constant(kShape, {0, 1});
    CHECK(diversity_energy(x, kMask, std::vector{y}, cfg) ==
          doctest::Approx(static_cast<double>(ref_soft_inverse(0.75, 1, 1e-4))).epsilon(1e-12));
    CHECK(diversity_energy(x, kMask, std::vector{y}, cfg) == doctest::Approx(0.87354).epsilon(1e-5));
    CHECK(diversity_energy(x, kMask, std::vector{y, x}, cfg) ==
          doctest::Approx(diversity_energy(x, kMask, std::vector{y}, cfg) + 9999.0));
}

TEST_CASE("smoothness energy") {
    GuidanceConfig cfg;
    const FlowShape s{2, 6, 7};
    CHECK(std::abs(smoothness_energy(FlowField::constant(s, {2, -1}), kMask, cfg)) < 1e-12);
    FlowField grow(s), turn(s);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 7; ++j) {
            grow.set(0, i, j, {1, 0});
            grow.set(1, i, j, {2, 0});
            turn.set(0, i, j, {1, 0});
            turn.set(1, i, j, {0, 1});
        }
    CHECK(smoothness_energy(grow, kMask, cfg) == doctest::Approx(0.75));
    CHECK(smoothness_energy(turn, kMask, cfg) == doctest::Approx(0.25));
    CHECK_THROWS_AS(smoothness_energy(FlowField(FlowShape{1, 6, 7}), kMask, cfg), InvalidArgument);
}

TEST_CASE("combined energy") {
    GuidanceConfig off;
    off.lambda_c = off.lambda_d = off.lambda_o = off.lambda_s = 0;
    const FlowField r = mmtest::random_field(kShape, 4);
    CHECK(combined_energy(r, kMask, std::vector{r}, off) == 0.0);
    CHECK(combined_energy_gradient(r, kMask, std::vector{r}, off).norm() == 0.0);
    // zero vectors carry the full angle term of E_s: 0.025 * 9960 + 0.1 * 0.25
    CHECK(combined_energy(FlowField(kShape), kMask, {}, GuidanceConfig{}) == doctest::Approx(249.025).epsilon(1e-9));
    GuidanceConfig conly = off;
    conly.lambda_c = 1;
    CHECK(combined_energy(FlowField::constant(kShape, {3, 4}), kMask, {}, conly) == doctest::Approx(5.0));

    GuidanceConfig cfg;
    const FlowField m1 = mmtest::random_field(kShape, 5);
    const auto t = energy_terms(r, kMask, std::vector{m1}, cfg);
    CHECK(combined_energy(r, kMask, std::vector{m1}, cfg) ==
          doctest::Approx(3.0 * t.diversity + 0.2 * t.camera + 0.025 * t.object + 0.1 * t.smoothness).epsilon(1e-15));
    CHECK(t.diversity >= 0);
    CHECK(t.camera >= 0);
    CHECK(t.object >= 0);
    CHECK(t.smoothness >= 0);
}

TEST_CASE("camera gradient at a single background pixel") {
    GuidanceConfig conly;
    conly.lambda_d = conly.lambda_o = conly.lambda_s = 0;
    conly.lambda_c = 1;
    FlowField x = mmtest::constant_over(kShape, kMask, {0, 0}, {3, 4});
    const FlowField g = combined_energy_gradient(x, kMask, {}, conly);
    const double n_bg = static_cast<double>(kMask.background_pixels()) * kShape.frames;
    CHECK(g.at(1, 0, 0).x == doctest::Approx(0.6 / n_bg));
    CHECK(g.at(1, 0, 0).y == doctest::Approx(0.8 / n_bg));
    CHECK(g.at(1, 2, 3).norm() == 0.0);
}

TEST_CASE("rotating every offset leaves rotation-invariant energies unchanged") {
    GuidanceConfig cfg;
    const FlowField x = mmtest::random_field(kShape, 8, 2.0);
    const FlowField y = mmtest::random_field(kShape, 9, 2.0);
    for (double a : {0.3, 1.7, -2.2}) {
        const FlowField xr = rotate_field(x, a), yr = rotate_field(y, a);
        CHECK(camera_energy(xr, kMask) == doctest::Approx(camera_energy(x, kMask)).epsilon(1e-12));
        CHECK(smoothness_energy(xr, kMask, cfg) == doctest::Approx(smoothness_energy(x, kMask, cfg)).epsilon(1e-10));
        CHECK(diversity_energy(xr, kMask, std::vector{yr}, cfg) ==
              doctest::Approx(diversity_energy(x, kMask, std::vector{y}, cfg)).epsilon(1e-10));
    }
}

TEST_CASE("repulsion weakens as a mode is pushed away along a fixed direction") {
    GuidanceConfig cfg;
    const FlowField base = FlowField::constant(kShape, {1, 0});
    double prev = std::numeric_limits<double>::infinity();
    for (double s : {1.0, 1.2, 1.5, 2.0, 3.0, 5.0}) {
        const double e = diversity_energy(FlowField::constant(kShape, {s, 0}), kMask, std::vector{base}, cfg);
        CHECK(e <= prev);
        prev = e;
    }
}

TEST_CASE("directional derivatives of the combined energy") {
    GuidanceConfig cfg;
    cfg.tau_object = 4;
    mmtest::Rng rng(21);
    int ok = 0;
    for (int n = 0; n < 100; ++n) {
        const FlowField x = 2.0 * normal_field(kShape, rng);
        const std::vector<FlowField> modes{2.0 * normal_field(kShape, rng)};
        const FlowField v = normal_field(kShape, rng);
        const double h = 1e-5;
        const double fd = (combined_energy(x + h * v, kMask, modes, cfg) - combined_energy(x - h * v, kMask, modes, cfg)) / (2 * h);
        const double an = combined_energy_gradient(x, kMask, modes, cfg).dot(v);
        ok += std::abs(fd - an) <= 1e-4 * std::max(std::abs(an), 1e-8);
    }
    CHECK(ok == 100);
}

TEST_CASE("gradient check harness") {
    const GradcheckReport r = run_gradcheck(GuidanceConfig{}, GradcheckOptions{});
    CHECK(r.ok());
    CHECK(r.summary().rfind("100/100 within 0.0001", 0) == 0);
}

TEST_CASE("guidance config json") {
    GuidanceConfig cfg;
    cfg.tau_object = 4;
    cfg.lambda_s = 0;
    CHECK(guidance_from_json(to_json(cfg)) == cfg);
    CHECK_THROWS_AS(guidance_from_json(nlohmann::json{{"lambda_x", 1}}), ConfigError);
    CHECK_THROWS_AS(guidance_from_json(nlohmann::json{{"lambda_c", -1}}), ConfigError);
}
