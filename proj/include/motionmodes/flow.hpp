#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "motionmodes/errors.hpp"

namespace motionmodes {

struct Vec2 {
    double x = 0.0;  // column direction (dx)
    double y = 0.0;  // row direction (dy)

    double norm() const { return std::hypot(x, y); }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    bool operator==(const Vec2&) const = default;
};

struct FlowShape {
    int frames = 0;
    int height = 0;
    int width = 0;

    std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
    std::size_t vectors() const { return static_cast<std::size_t>(frames) * pixels(); }
    std::size_t entries() const { return 2 * vectors(); }
    bool operator==(const FlowShape&) const = default;
};

std::string to_string(const FlowShape& shape);

/// Continuous pixel position, 0-based (row, col).
struct PixelPos {
    double row = 0.0;
    double col = 0.0;

    bool operator==(const PixelPos&) const = default;
};

/// Per-frame, per-pixel cumulative 2D offsets (pixels) from each pixel's
/// position in frame 0. Layout is [frame][row][col][dx,dy].
class FlowField {
public:
    FlowField() = default;
    /// Zero field of the given shape.
    explicit FlowField(FlowShape shape);
    FlowField(FlowShape shape, std::vector<double> data);

    static FlowField constant(FlowShape shape, Vec2 offset);

    const FlowShape& shape() const { return shape_; }
    int frames() const { return shape_.frames; }
    int height() const { return shape_.height; }
    int width() const { return shape_.width; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(int k, int i, int j) const {
        return 2 * ((static_cast<std::size_t>(k) * shape_.height + i) * shape_.width + j);
    }
    Vec2 at(int k, int i, int j) const {
        const std::size_t n = index(k, i, j);
        return {data_[n], data_[n + 1]};
    }
    void set(int k, int i, int j, Vec2 v) {
        const std::size_t n = index(k, i, j);
        data_[n] = v.x;
        data_[n + 1] = v.y;
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool all_finite() const;
    bool operator==(const FlowField&) const = default;

    FlowField& operator+=(const FlowField& o);
    FlowField& operator-=(const FlowField& o);
    FlowField& operator*=(double s);
    /// this += alpha * o
    FlowField& axpy(double alpha, const FlowField& o);

    double dot(const FlowField& o) const;
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }

private:
    FlowShape shape_;
    std::vector<double> data_;
};

FlowField operator+(FlowField a, const FlowField& b);
FlowField operator-(FlowField a, const FlowField& b);
FlowField operator*(double s, FlowField a);

void require_same_shape(const FlowField& a, const FlowField& b, const char* what);

/// Binary object region; 1 marks the object. Both regions must be nonempty.
class ObjectMask {
public:
    ObjectMask() = default;
    ObjectMask(int height, int width, std::vector<std::uint8_t> data);

    static ObjectMask disk(int height, int width, double center_row, double center_col, double radius);
    static ObjectMask rect(int height, int width, int row0, int col0, int row1, int col1);

    int height() const { return height_; }
    int width() const { return width_; }
    bool inside(int i, int j) const { return data_[static_cast<std::size_t>(i) * width_ + j] != 0; }
    std::size_t object_pixels() const { return object_count_; }
    std::size_t background_pixels() const { return data_.size() - object_count_; }
    const std::vector<std::uint8_t>& values() const { return data_; }

    ObjectMask complement() const;
    /// Mean position of the object pixels.
    PixelPos centroid() const;

    void require_compatible(const FlowField& x) const;
    bool operator==(const ObjectMask&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> data_;
    std::size_t object_count_ = 0;
};

/// Convex weights of the magnitude and angle terms of the offset distance.
struct DistanceWeights {
    double w_mag = 0.25;
    double w_angle = 0.75;

    void validate() const;
    bool operator==(const DistanceWeights&) const = default;
};

}  // namespace motionmodes
