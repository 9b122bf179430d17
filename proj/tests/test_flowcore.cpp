#include "doctest.h"

#include <regex>
#include <set>

#include "helpers.hpp"
#include "motionmodes/flow_io.hpp"
#include "motionmodes/render.hpp"

using namespace motionmodes;
using mmtest::TempDir;

TEST_CASE("flow file round trip of a zero field") {
    TempDir dir("flowio");
    const FlowField x(FlowShape{2, 4, 4});
    write_flow(x, dir / "z.mmff");
    CHECK(read_flow(dir / "z.mmff") == x);
}

TEST_CASE("flow file header layout") {
    FlowField x(FlowShape{3, 2, 5});
    x.set(1, 1, 4, {1.5, -2.0});
    const auto bytes = encode_flow(x);
    REQUIRE(bytes.size() == kFlowHeaderBytes + 4 * x.size() + 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MMFF");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[8] == 3);
    CHECK(bytes[12] == 2);
    CHECK(bytes[16] == 5);
    // 1.5f little-endian is 00 00 c0 3f
    const std::size_t n = kFlowHeaderBytes + 4 * x.index(1, 1, 4);
    CHECK(bytes[n + 2] == 0xc0);
    CHECK(bytes[n + 3] == 0x3f);
}

TEST_CASE("wrong magic is rejected at offset 0") {
    auto bytes = encode_flow(FlowField(FlowShape{1, 2, 2}));
    bytes[0] = 'X';
    try {
        decode_flow(bytes);
        FAIL("expected a format error");
    } catch (const FlowFormatError& e) {
        CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
        CHECK(e.offset() == 0);
    }
}

TEST_CASE("flipped payload byte is caught by the checksum") {
    TempDir dir("flowcrc");
    FlowField x(FlowShape{1, 2, 2});
    x.set(0, 0, 0, {1.5, 0.0});
    write_flow(x, dir / "a.mmff");
    auto bytes = read_file_bytes(dir / "a.mmff");
    bytes[kFlowHeaderBytes + 3] ^= 0x01;
    write_file_bytes(dir / "a.mmff", bytes);
    CHECK_THROWS_WITH_AS(read_flow(dir / "a.mmff"), doctest::Contains("checksum"), FlowFormatError);
}

TEST_CASE("truncated files report where decoding stopped") {
    const auto bytes = encode_flow(FlowField(FlowShape{2, 3, 3}));
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 30);
    try {
        decode_flow(cut);
        FAIL("expected a format error");
    } catch (const FlowFormatError& e) {
        CHECK(std::string(e.what()).find("truncated payload") != std::string::npos);
        CHECK(e.offset() == 30);
    }
    std::vector<std::uint8_t> header(bytes.begin(), bytes.begin() + 10);
    CHECK_THROWS_AS(decode_flow(header), FlowFormatError);
}

TEST_CASE("round trip is bit exact on random float32 fields") {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 200; ++trial) {
        const FlowShape s{1 + static_cast<int>(gen() % 8), 1 + static_cast<int>(gen() % 64),
                          1 + static_cast<int>(gen() % 64)};
        FlowField x(s);
        std::normal_distribution<float> nd(0.0f, 10.0f);
        for (double& v : x.data()) v = static_cast<double>(nd(gen));
        REQUIRE(decode_flow(encode_flow(x)) == x);
    }
}

TEST_CASE("mask invariants") {
    CHECK_THROWS_AS(ObjectMask(2, 2, {1, 1, 1, 1}), InvalidArgument);
    CHECK_THROWS_AS(ObjectMask(2, 2, {0, 0, 0, 0}), InvalidArgument);
    const ObjectMask m = ObjectMask::rect(4, 5, 1, 1, 2, 3);
    CHECK(m.object_pixels() == 6);
    CHECK(m.complement().object_pixels() == 14);
    CHECK(m.centroid() == PixelPos{1.5, 2.0});
}

TEST_CASE("mask complement splits reductions") {
    const ObjectMask m = ObjectMask::disk(9, 9, 4, 4, 3);
    const FlowField x = mmtest::random_field({2, 9, 9}, 3);
    double in = 0, out = 0, all = 0;
    const ObjectMask c = m.complement();
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j) {
                const double v = x.at(k, i, j).norm();
                in += m.inside(i, j) * v;
                out += c.inside(i, j) * v;
                all += v;
            }
    CHECK(in + out == doctest::Approx(all).epsilon(1e-14));
}

TEST_CASE("color wheel rendering") {
    SUBCASE("zero flow is white") {
        const RgbImage img = render_color(FlowField(FlowShape{1, 3, 4}), 0);
        for (std::uint8_t v : img.rgb) CHECK(v == 255);
    }
    SUBCASE("uniform offset gives one color") {
        const RgbImage img = render_color(FlowField::constant({2, 3, 3}, {1, 0}), 1);
        std::set<std::array<std::uint8_t, 3>> colors;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) colors.insert(img.pixel(i, j));
        CHECK(colors.size() == 1);
    }
    SUBCASE("opposite half planes get complementary hues") {
        FlowField x(FlowShape{1, 2, 4});
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 4; ++j) x.set(0, i, j, {j < 2 ? 1.0 : -1.0, 0.0});
        const RgbImage img = render_color(x, 0);
        // hue 0 at full saturation is red, hue 180 is cyan
        CHECK(img.pixel(0, 0) == std::array<std::uint8_t, 3>{255, 0, 0});
        CHECK(img.pixel(1, 3) == std::array<std::uint8_t, 3>{0, 255, 255});
    }
    SUBCASE("global scaling leaves the image unchanged") {
        const FlowField x = mmtest::random_field({2, 6, 6}, 5);
        CHECK(render_color(x, 1).rgb == render_color(2.5 * x, 1).rgb);
    }
    CHECK_THROWS_AS(render_color(FlowField(FlowShape{2, 2, 2}), 2), InvalidArgument);
}

TEST_CASE("png output starts with the png signature") {
    TempDir dir("png");
    write_png(render_color(FlowField::constant({1, 4, 4}, {0, 1}), 0), dir / "a.png");
    const auto bytes = read_file_bytes(dir / "a.png");
    REQUIRE(bytes.size() > 8);
    CHECK(bytes[1] == 'P');
    CHECK(bytes[2] == 'N');
    CHECK(bytes[3] == 'G');
}

namespace {

struct Segment {
    double x1, y1, x2, y2;
};

std::vector<std::vector<Segment>> parse_polylines(const std::string& svg) {
    static const std::regex group(R"(<g class="traj"[^>]*>(.*?)</g>)");
    static const std::regex line(R"re(x1="([-0-9.]+)" y1="([-0-9.]+)" x2="([-0-9.]+)" y2="([-0-9.]+)")re");
    std::vector<std::vector<Segment>> out;
    for (auto g = std::sregex_iterator(svg.begin(), svg.end(), group); g != std::sregex_iterator(); ++g) {
        const std::string body = (*g)[1];
        std::vector<Segment> segs;
        for (auto l = std::sregex_iterator(body.begin(), body.end(), line); l != std::sregex_iterator(); ++l) {
            segs.push_back({std::stod((*l)[1]), std::stod((*l)[2]), std::stod((*l)[3]), std::stod((*l)[4])});
        }
        out.push_back(segs);
    }
    return out;
}

double length(const std::vector<Segment>& p) {
    double s = 0;
    for (const auto& g : p) s += std::hypot(g.x2 - g.x1, g.y2 - g.y1);
    return s;
}

}  // namespace

TEST_CASE("trajectory graphics") {
    const ObjectMask m = ObjectMask::disk(16, 16, 8, 8, 4);
    const FlowShape s{5, 16, 16};
    SUBCASE("linear translation gives equal straight polylines") {
        FlowField x(s);
        for (int k = 0; k < 5; ++k)
            for (int i = 0; i < 16; ++i)
                for (int j = 0; j < 16; ++j) x.set(k, i, j, {0.5 * k, 0.25 * k});
        const auto polys = parse_polylines(render_trajectories(std::vector{x}, m, 3, 8).front());
        REQUIRE(!polys.empty());
        for (const auto& p : polys) {
            REQUIRE(p.size() == 4);
            CHECK(length(p) == doctest::Approx(length(polys.front())).epsilon(1e-6));
            const double ang = std::atan2(p.back().y2 - p.front().y1, p.back().x2 - p.front().x1);
            for (const auto& g : p) CHECK(std::atan2(g.y2 - g.y1, g.x2 - g.x1) == doctest::Approx(ang).epsilon(1e-3));
        }
    }
    SUBCASE("zero motion still emits one element per sampled pixel") {
        const auto polys = parse_polylines(render_trajectories(std::vector{FlowField(s)}, m, 1, 8).front());
        CHECK(polys.size() == m.object_pixels());
        for (const auto& p : polys) CHECK(length(p) == 0.0);
    }
    SUBCASE("rotation trajectories lengthen with radius") {
        SceneParams sp;
        sp.frames = 5;
        sp.height = sp.width = 16;
        sp.mask.center = {8, 8};
        sp.mask.radius = 6;
        ModeParams mp;
        mp.label = "spin";
        MotionTerm r;
        r.family = MotionFamily::Rotation;
        r.omega = 0.2;
        mp.motion = {r};
        sp.modes = {mp};
        const SceneSpec scene = build_motion_bank(sp);
        const auto svg = render_trajectories(std::vector{scene.bank[0].mean}, scene.mask, 1, 8).front();
        const auto polys = parse_polylines(svg);
        static const std::regex rc(R"re(data-row="(\d+)" data-col="(\d+)")re");
        std::vector<std::pair<double, double>> radius_len;
        std::size_t idx = 0;
        for (auto it = std::sregex_iterator(svg.begin(), svg.end(), rc); it != std::sregex_iterator(); ++it, ++idx) {
            const double r2 = std::hypot(std::stoi((*it)[1]) - 8.0, std::stoi((*it)[2]) - 8.0);
            const auto& p = polys[idx];
            radius_len.push_back({r2, std::hypot(p.back().x2 - p.front().x1, p.back().y2 - p.front().y1)});
        }
        for (const auto& a : radius_len)
            for (const auto& b : radius_len)
                if (a.first < b.first - 1e-9) CHECK(a.second < b.second);
    }
    CHECK_THROWS_AS(render_trajectories(std::vector<FlowField>{}, m, 1), InvalidArgument);
    CHECK_THROWS_AS(render_trajectories(std::vector{FlowField(s)}, m, 0), InvalidArgument);
}
