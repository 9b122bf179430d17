#include "motionmodes/prompting.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <regex>

#include "motionmodes/flow_io.hpp"
#include "motionmodes/rng.hpp"

namespace motionmodes {

void require_in_bounds(const DragArrow& arrow, int height, int width) {
    for (const PixelPos& p : {arrow.start, arrow.end}) {
        if (!(p.row >= 1 && p.row <= height && p.col >= 1 && p.col <= width)) {
            throw InvalidArgument("arrow " + format_arrow(arrow) + " leaves the " + std::to_string(height) + "x" +
                                  std::to_string(width) + " grid");
        }
    }
}

DragArrow parse_arrow(const std::string& text) {
    static const std::regex re(R"(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*:\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*)");
    std::smatch m;
    if (!std::regex_match(text, m, re)) throw ConfigError("arrow '" + text + "' is not of the form r1,c1:r2,c2");
    double v[4];
    for (int i = 0; i < 4; ++i) {
        std::size_t used = 0;
        const std::string part = m[i + 1].str();
        try {
            v[i] = std::stod(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != part.size() || !std::isfinite(v[i])) throw ConfigError("bad number '" + part + "' in arrow");
    }
    return {{v[0], v[1]}, {v[2], v[3]}};
}

std::string format_arrow(const DragArrow& a) {
    const auto num = [](double v) { return nlohmann::json(v).dump(); };
    return num(a.start.row) + "," + num(a.start.col) + ":" + num(a.end.row) + "," + num(a.end.col);
}

Retrieval retrieve_mode(std::span<const FlowField> modes, const DragArrow& arrow) {
    if (modes.empty()) throw InvalidArgument("retrieval needs at least one mode");
    const FlowField& first = modes.front();
    for (const auto& x : modes) require_same_shape(first, x, "retrieve_mode");
    const int row = static_cast<int>(std::lround(arrow.start.row)) - 1;
    const int col = static_cast<int>(std::lround(arrow.start.col)) - 1;
    if (row < 0 || row >= first.height() || col < 0 || col >= first.width()) {
        throw InvalidArgument("arrow start lies outside the grid");
    }
    const Vec2 ab = arrow.vector();
    Retrieval best{0, 0, std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < modes.size(); ++i) {
        for (int k = 0; k < first.frames(); ++k) {
            const double d = (modes[i].at(k, row, col) - ab).norm();
            if (d < best.distance) best = {i, k, d};
        }
    }
    return best;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
}

std::size_t nearest_center(const std::vector<double>& p, const std::vector<std::vector<double>>& centers,
                           double* dist = nullptr) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = sq_dist(p, centers[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    if (dist) *dist = best_d;
    return best;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t n, std::uint64_t seed, int max_iter,
                    double rel_tol) {
    if (n == 0) throw InvalidArgument("cluster count must be >= 1");
    if (points.size() < n) throw InvalidArgument("fewer points than clusters");
    const std::size_t dims = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dims) throw InvalidArgument("points must share one dimension");
    }

    // k-means++ seeding
    Rng rng(seed);
    KMeansResult r;
    r.centers.push_back(points[std::min(points.size() - 1, static_cast<std::size_t>(rng.uniform() * points.size()))]);
    std::vector<double> d2(points.size());
    while (r.centers.size() < n) {
        for (std::size_t i = 0; i < points.size(); ++i) nearest_center(points[i], r.centers, &d2[i]);
        std::size_t pick;
        if (*std::max_element(d2.begin(), d2.end()) > 0.0) {
            pick = rng.categorical(d2);
        } else {
            pick = r.centers.size();  // all points coincide with centers
        }
        r.centers.push_back(points[pick]);
    }

    double rms = 0.0;
    for (const auto& p : points) rms += std::inner_product(p.begin(), p.end(), p.begin(), 0.0);
    rms = std::sqrt(rms / static_cast<double>(points.size()));
    const double tol = rel_tol * std::max(rms, 1e-300);

    r.labels.assign(points.size(), 0);
    for (r.iterations = 0; r.iterations < max_iter;) {
        double objective = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double d;
            r.labels[i] = nearest_center(points[i], r.centers, &d);
            objective += d;
        }
        r.objective.push_back(objective);
        ++r.iterations;

        std::vector<std::vector<double>> sums(n, std::vector<double>(dims, 0.0));
        std::vector<std::size_t> counts(n, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            ++counts[r.labels[i]];
            for (std::size_t d = 0; d < dims; ++d) sums[r.labels[i]][d] += points[i][d];
        }
        double shift = 0.0;
        bool reseeded = false;
        for (std::size_t c = 0; c < n; ++c) {
            if (counts[c] == 0) {
                // Empty cluster takes the point farthest from its center among clusters of size > 1.
                std::size_t far = points.size();
                double far_d = -1.0;
                for (std::size_t i = 0; i < points.size(); ++i) {
                    if (counts[r.labels[i]] < 2) continue;
                    const double d = sq_dist(points[i], r.centers[r.labels[i]]);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                if (far == points.size()) continue;
                --counts[r.labels[far]];
                for (std::size_t d = 0; d < dims; ++d) sums[r.labels[far]][d] -= points[far][d];
                r.labels[far] = c;
                counts[c] = 1;
                sums[c] = points[far];
                reseeded = true;
            }
        }
        for (std::size_t c = 0; c < n; ++c) {
            for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
            shift += std::sqrt(sq_dist(sums[c], r.centers[c]));
            r.centers[c] = std::move(sums[c]);
        }
        if (shift <= tol && !reseeded) break;
    }
    // Final labels against the final centers.
    double objective = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        double d;
        r.labels[i] = nearest_center(points[i], r.centers, &d);
        objective += d;
    }
    r.objective.push_back(objective);
    return r;
}

std::vector<DragArrow> mode_to_arrows(const FlowField& x, const ObjectMask& m, int frame, std::size_t n,
                                      std::uint64_t seed) {
    m.require_compatible(x);
    if (frame < 0 || frame >= x.frames()) throw InvalidArgument("frame index out of range");
    if (n == 0) throw InvalidArgument("arrow count must be >= 1");
    if (m.object_pixels() < n) throw InvalidArgument("fewer masked pixels than requested arrows");

    const PixelPos centroid = m.centroid();
    double pos_ms = 0.0, off_ms = 0.0;
    std::vector<std::array<double, 4>> raw;
    for (int i = 0; i < x.height(); ++i) {
        for (int j = 0; j < x.width(); ++j) {
            if (!m.inside(i, j)) continue;
            const Vec2 o = x.at(frame, i, j);
            raw.push_back({static_cast<double>(i), static_cast<double>(j), o.x, o.y});
            pos_ms += (i - centroid.row) * (i - centroid.row) + (j - centroid.col) * (j - centroid.col);
            off_ms += o.x * o.x + o.y * o.y;
        }
    }
    const double count = static_cast<double>(raw.size());
    const double pos_rms = std::sqrt(pos_ms / count), off_rms = std::sqrt(off_ms / count);
    const double scale = (pos_rms > 0 && off_rms > 0) ? off_rms / pos_rms : 1.0;

    std::vector<std::vector<double>> points;
    points.reserve(raw.size());
    for (const auto& p : raw) points.push_back({scale * p[0], scale * p[1], p[2], p[3]});
    const KMeansResult km = kmeans(points, n, seed);

    std::vector<std::array<double, 4>> means(n, {0, 0, 0, 0});
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        ++counts[km.labels[i]];
        for (int d = 0; d < 4; ++d) means[km.labels[i]][d] += raw[i][d];
    }
    std::vector<DragArrow> arrows;
    for (std::size_t c = 0; c < n; ++c) {
        if (counts[c] == 0) continue;
        for (double& v : means[c]) v /= static_cast<double>(counts[c]);
        const PixelPos start{means[c][0] + 1.0, means[c][1] + 1.0};
        const PixelPos end{std::clamp(start.row + means[c][3], 1.0, static_cast<double>(x.height())),
                           std::clamp(start.col + means[c][2], 1.0, static_cast<double>(x.width()))};
        arrows.push_back({start, end});
    }
    std::sort(arrows.begin(), arrows.end(), [](const DragArrow& a, const DragArrow& b) {
        return std::tie(a.start.row, a.start.col) < std::tie(b.start.row, b.start.col);
    });
    return arrows;
}

nlohmann::json arrows_to_json(const std::vector<DragArrow>& arrows) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& a : arrows) {
        doc.push_back({{"start", {a.start.row, a.start.col}}, {"end", {a.end.row, a.end.col}}});
    }
    return doc;
}

std::vector<DragArrow> arrows_from_json(const nlohmann::json& doc) {
    if (!doc.is_array()) throw ConfigError("arrow file must hold a JSON array");
    std::vector<DragArrow> out;
    for (const auto& j : doc) {
        if (!j.is_object() || j.size() != 2 || !j.contains("start") || !j.contains("end")) {
            throw ConfigError("each arrow needs exactly 'start' and 'end'");
        }
        const auto point = [](const nlohmann::json& p) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
                throw ConfigError("arrow endpoints must be [row, col]");
            }
            return PixelPos{p[0].get<double>(), p[1].get<double>()};
        };
        out.push_back({point(j.at("start")), point(j.at("end"))});
    }
    return out;
}

void export_arrows(const std::vector<DragArrow>& arrows, const std::filesystem::path& path) {
    write_text_file(path, arrows_to_json(arrows).dump() + "\n");
}

std::vector<DragArrow> import_arrows(const std::filesystem::path& path) {
    try {
        return arrows_from_json(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("arrow file " + path.string() + " is not valid JSON: " + e.what());
    }
}

}  // namespace motionmodes
