#include "motionmodes/flow.hpp"

#include <algorithm>
#include <numeric>

namespace motionmodes {

std::string to_string(const FlowShape& shape) {
    return std::to_string(shape.frames) + "x" + std::to_string(shape.height) + "x" +
           std::to_string(shape.width);
}

namespace {

void validate_shape(const FlowShape& shape) {
    if (shape.frames < 1 || shape.height < 1 || shape.width < 1) {
        throw InvalidArgument("flow shape must be positive, got " + to_string(shape));
    }
}

}  // namespace

FlowField::FlowField(FlowShape shape) : shape_(shape) {
    validate_shape(shape);
    data_.assign(shape.entries(), 0.0);
}

FlowField::FlowField(FlowShape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    validate_shape(shape);
    if (data_.size() != shape.entries()) {
        throw InvalidArgument("flow payload has " + std::to_string(data_.size()) + " entries, shape " +
                              to_string(shape) + " needs " + std::to_string(shape.entries()));
    }
    if (!all_finite()) throw InvalidArgument("flow field contains non-finite entries");
}

FlowField FlowField::constant(FlowShape shape, Vec2 offset) {
    FlowField f(shape);
    for (std::size_t n = 0; n < f.data_.size(); n += 2) {
        f.data_[n] = offset.x;
        f.data_[n + 1] = offset.y;
    }
    return f;
}

bool FlowField::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const FlowField& a, const FlowField& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw InvalidArgument(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                              to_string(b.shape()));
    }
}

FlowField& FlowField::operator+=(const FlowField& o) {
    require_same_shape(*this, o, "flow +=");
    for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += o.data_[n];
    return *this;
}

FlowField& FlowField::operator-=(const FlowField& o) {
    require_same_shape(*this, o, "flow -=");
    for (std::size_t n = 0; n < data_.size(); ++n) data_[n] -= o.data_[n];
    return *this;
}

FlowField& FlowField::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

FlowField& FlowField::axpy(double alpha, const FlowField& o) {
    require_same_shape(*this, o, "flow axpy");
    for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += alpha * o.data_[n];
    return *this;
}

double FlowField::dot(const FlowField& o) const {
    require_same_shape(*this, o, "flow dot");
    double acc = 0.0;
    for (std::size_t n = 0; n < data_.size(); ++n) acc += data_[n] * o.data_[n];
    return acc;
}

FlowField operator+(FlowField a, const FlowField& b) { return a += b; }
FlowField operator-(FlowField a, const FlowField& b) { return a -= b; }
FlowField operator*(double s, FlowField a) { return a *= s; }

ObjectMask::ObjectMask(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (height < 1 || width < 1) throw InvalidArgument("mask dimensions must be positive");
    if (data_.size() != static_cast<std::size_t>(height) * width) {
        throw InvalidArgument("mask payload size does not match its dimensions");
    }
    for (auto& v : data_) {
        if (v > 1) throw InvalidArgument("mask values must be 0 or 1");
    }
    object_count_ = static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
    if (object_count_ == 0) throw InvalidArgument("mask has an empty object region");
    if (object_count_ == data_.size()) throw InvalidArgument("mask has an empty background region");
}

ObjectMask ObjectMask::disk(int height, int width, double center_row, double center_col, double radius) {
    std::vector<std::uint8_t> data(static_cast<std::size_t>(height) * width, 0);
    for (int i = 0; i < height; ++i) {
        for (int j = 0; j < width; ++j) {
            const double dr = i - center_row;
            const double dc = j - center_col;
            if (dr * dr + dc * dc <= radius * radius) data[static_cast<std::size_t>(i) * width + j] = 1;
        }
    }
    return ObjectMask(height, width, std::move(data));
}

ObjectMask ObjectMask::rect(int height, int width, int row0, int col0, int row1, int col1) {
    std::vector<std::uint8_t> data(static_cast<std::size_t>(height) * width, 0);
    for (int i = std::max(row0, 0); i <= std::min(row1, height - 1); ++i) {
        for (int j = std::max(col0, 0); j <= std::min(col1, width - 1); ++j) {
            data[static_cast<std::size_t>(i) * width + j] = 1;
        }
    }
    return ObjectMask(height, width, std::move(data));
}

ObjectMask ObjectMask::complement() const {
    std::vector<std::uint8_t> inv(data_.size());
    std::transform(data_.begin(), data_.end(), inv.begin(), [](std::uint8_t v) { return std::uint8_t(1 - v); });
    return ObjectMask(height_, width_, std::move(inv));
}

PixelPos ObjectMask::centroid() const {
    double r = 0.0, c = 0.0;
    for (int i = 0; i < height_; ++i) {
        for (int j = 0; j < width_; ++j) {
            if (inside(i, j)) {
                r += i;
                c += j;
            }
        }
    }
    const double n = static_cast<double>(object_count_);
    return {r / n, c / n};
}

void ObjectMask::require_compatible(const FlowField& x) const {
    if (x.height() != height_ || x.width() != width_) {
        throw InvalidArgument("mask " + std::to_string(height_) + "x" + std::to_string(width_) +
                              " does not match flow " + to_string(x.shape()));
    }
}

void DistanceWeights::validate() const {
    if (!(w_mag >= 0.0) || !(w_angle >= 0.0) || std::abs(w_mag + w_angle - 1.0) > 1e-9) {
        throw InvalidArgument("distance weights must be nonnegative and sum to 1");
    }
}

}  // namespace motionmodes
