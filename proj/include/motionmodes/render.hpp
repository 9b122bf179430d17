#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "motionmodes/flow.hpp"

namespace motionmodes {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    std::array<std::uint8_t, 3> pixel(int row, int col) const {
        const std::size_t n = 3 * (static_cast<std::size_t>(row) * width + col);
        return {rgb[n], rgb[n + 1], rgb[n + 2]};
    }
};

/// HSV color wheel: hue from atan2(dy, dx), saturation from magnitude over the
/// field's largest magnitude (all frames), full value. Zero flow is white.
RgbImage render_color(const FlowField& field, int frame);

/// Color of a single offset at a given normalization magnitude.
std::array<std::uint8_t, 3> flow_color(Vec2 offset, double max_magnitude);

void write_png(const RgbImage& image, const std::filesystem::path& path);

/// One SVG document per mode. For every stride-th object pixel, a trajectory
/// through p + x_{k,p}, k = 0..F-1, drawn as per-frame segments on a blue→red ramp.
std::vector<std::string> render_trajectories(std::span<const FlowField> modes, const ObjectMask& mask,
                                             int stride, int scale = 8);

}  // namespace motionmodes
