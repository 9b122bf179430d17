#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "motionmodes/flow.hpp"

namespace motionmodes {

/// Drag from `start` to `end`, both 1-based (row, col) positions inside [1,H] x [1,W].
struct DragArrow {
    PixelPos start;
    PixelPos end;

    /// (dx, dy) = (end.col - start.col, end.row - start.row)
    Vec2 vector() const { return {end.col - start.col, end.row - start.row}; }
    bool operator==(const DragArrow&) const = default;
};

void require_in_bounds(const DragArrow& arrow, int height, int width);

/// "r1,c1:r2,c2"
DragArrow parse_arrow(const std::string& text);
std::string format_arrow(const DragArrow& arrow);

struct Retrieval {
    std::size_t mode = 0;
    int frame = 0;
    double distance = 0.0;
};

/// argmin over (mode, frame) of |x_{k,a} - ab|, with a the start rounded to the
/// nearest pixel. Ties go to the lower mode, then the lower frame.
Retrieval retrieve_mode(std::span<const FlowField> modes, const DragArrow& arrow);

struct KMeansResult {
    std::vector<std::vector<double>> centers;
    std::vector<std::size_t> labels;
    std::vector<double> objective;  // within-cluster sum of squares after each assignment
    int iterations = 0;
};

/// Lloyd iterations from a seeded k-means++ start. Stops after max_iter rounds or once
/// the summed center movement falls below rel_tol times the data RMS norm.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t n, std::uint64_t seed,
                    int max_iter = 100, double rel_tol = 1e-6);

/// Clusters the masked pixels on (scaled position, offset at frame k) and turns each
/// cluster into an arrow from its mean position along its mean offset. Positions are
/// scaled so their RMS spread matches the offsets' RMS magnitude. Arrow ends are
/// clamped into the grid.
std::vector<DragArrow> mode_to_arrows(const FlowField& x, const ObjectMask& m, int frame, std::size_t n,
                                      std::uint64_t seed);

nlohmann::json arrows_to_json(const std::vector<DragArrow>& arrows);
std::vector<DragArrow> arrows_from_json(const nlohmann::json& doc);
void export_arrows(const std::vector<DragArrow>& arrows, const std::filesystem::path& path);
std::vector<DragArrow> import_arrows(const std::filesystem::path& path);

}  // namespace motionmodes
