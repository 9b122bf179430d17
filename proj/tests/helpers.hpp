#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "motionmodes/flow.hpp"
#include "motionmodes/priors.hpp"
#include "motionmodes/rng.hpp"

namespace mmtest {

using namespace motionmodes;

// Fresh directory under the system temp dir, removed at scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("mm_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline FlowField random_field(const FlowShape& s, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    return scale * normal_field(s, rng);
}

inline FlowField constant_over(const FlowShape& s, const ObjectMask& m, Vec2 inside, Vec2 outside) {
    FlowField x(s);
    for (int k = 0; k < s.frames; ++k)
        for (int i = 0; i < s.height; ++i)
            for (int j = 0; j < s.width; ++j) x.set(k, i, j, m.inside(i, j) ? inside : outside);
    return x;
}

inline SceneParams translation_scene(const std::vector<double>& angles, double speed = 1.0, double jitter = 0.25) {
    SceneParams sp;
    sp.jitter = jitter;
    for (std::size_t a = 0; a < angles.size(); ++a) {
        ModeParams mp;
        mp.label = "t" + std::to_string(a);
        MotionTerm t;
        t.angle_deg = angles[a];
        t.speed = speed;
        mp.motion = {t};
        sp.modes.push_back(mp);
    }
    return sp;
}

}  // namespace mmtest
