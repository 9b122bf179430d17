#include "motionmodes/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include <png.h>

#include "motionmodes/flow_io.hpp"

namespace motionmodes {

namespace {

std::array<std::uint8_t, 3> hsv_to_rgb(double hue_deg, double sat, double val) {
    const double c = val * sat;
    const double hp = hue_deg / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp) % 6) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = val - c;
    auto to_byte = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    return {to_byte(r + m), to_byte(g + m), to_byte(b + m)};
}

double max_magnitude(const FlowField& field) {
    double mx = 0.0;
    const auto d = field.data();
    for (std::size_t n = 0; n < d.size(); n += 2) mx = std::max(mx, std::hypot(d[n], d[n + 1]));
    return mx;
}

std::string ramp_color(int k, int frames) {
    const double t = frames > 1 ? static_cast<double>(k) / (frames - 1) : 0.0;
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x00%02x", static_cast<int>(std::lround(255 * t)),
                  static_cast<int>(std::lround(255 * (1 - t))));
    return buf;
}

}  // namespace

std::array<std::uint8_t, 3> flow_color(Vec2 offset, double max_magnitude) {
    const double mag = offset.norm();
    if (mag == 0.0 || max_magnitude <= 0.0) return {255, 255, 255};
    double hue = std::atan2(offset.y, offset.x) * 180.0 / std::numbers::pi;
    if (hue < 0) hue += 360.0;
    if (hue >= 360.0) hue -= 360.0;
    return hsv_to_rgb(hue, std::min(mag / max_magnitude, 1.0), 1.0);
}

RgbImage render_color(const FlowField& field, int frame) {
    if (frame < 0 || frame >= field.frames()) {
        throw InvalidArgument("frame " + std::to_string(frame) + " out of range [0, " +
                              std::to_string(field.frames()) + ")");
    }
    const double norm = max_magnitude(field);
    RgbImage img{field.width(), field.height(), {}};
    img.rgb.reserve(3 * field.shape().pixels());
    for (int i = 0; i < field.height(); ++i) {
        for (int j = 0; j < field.width(); ++j) {
            const auto c = flow_color(field.at(frame, i, j), norm);
            img.rgb.insert(img.rgb.end(), c.begin(), c.end());
        }
    }
    return img;
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < image.height; ++r) {
        png_write_row(png, image.rgb.data() + 3 * static_cast<std::size_t>(r) * image.width);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw IoError("short write to " + path.string());
}

std::vector<std::string> render_trajectories(std::span<const FlowField> modes, const ObjectMask& mask,
                                             int stride, int scale) {
    if (modes.empty()) throw InvalidArgument("no modes to render");
    if (stride < 1) throw InvalidArgument("stride must be >= 1");
    if (scale < 1) throw InvalidArgument("scale must be >= 1");
    std::vector<std::string> out;
    out.reserve(modes.size());
    for (const FlowField& x : modes) {
        mask.require_compatible(x);
        std::ostringstream svg;
        svg.setf(std::ios::fixed);
        svg.precision(3);
        const int w = x.width() * scale, h = x.height() * scale;
        svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
            << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
        svg << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
        int counter = 0;
        for (int i = 0; i < x.height(); ++i) {
            for (int j = 0; j < x.width(); ++j) {
                if (!mask.inside(i, j)) continue;
                if (counter++ % stride != 0) continue;
                svg << "<g class=\"traj\" data-row=\"" << i << "\" data-col=\"" << j << "\">";
                auto px = [&](int k) {
                    const Vec2 o = x.at(k, i, j);
                    return std::pair{(j + 0.5 + o.x) * scale, (i + 0.5 + o.y) * scale};
                };
                if (x.frames() == 1) {
                    const auto [cx, cy] = px(0);
                    svg << "<line x1=\"" << cx << "\" y1=\"" << cy << "\" x2=\"" << cx << "\" y2=\"" << cy
                        << "\" stroke=\"" << ramp_color(0, 1) << "\"/>";
                }
                for (int k = 0; k + 1 < x.frames(); ++k) {
                    const auto [x1, y1] = px(k);
                    const auto [x2, y2] = px(k + 1);
                    svg << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
                        << "\" stroke=\"" << ramp_color(k + 1, x.frames()) << "\" stroke-width=\"1\"/>";
                }
                svg << "</g>\n";
            }
        }
        svg << "</svg>\n";
        out.push_back(svg.str());
    }
    return out;
}

}  // namespace motionmodes
