#include "motionmodes/discovery.hpp"

#include <cmath>
#include <cstdio>

#include "motionmodes/flow_io.hpp"
#include "motionmodes/rng.hpp"

namespace motionmodes {

void StoppingRule::validate() const {
    if (std::isnan(rho)) throw InvalidArgument("rho must not be NaN");
    if (max_modes < 0) throw InvalidArgument("max_modes must be >= 0");
    if (discard_limit < 1) throw InvalidArgument("discard_limit must be >= 1");
}

std::vector<FlowField> ModeSet::flows() const {
    std::vector<FlowField> out;
    out.reserve(modes.size());
    for (const auto& m : modes) out.push_back(m.flow);
    return out;
}

ModeSet discover_modes(const Denoiser& denoiser, const ObjectMask& m, const GuidanceConfig& cfg,
                       const GuidedSamplerConfig& gcfg, const NoiseSchedule& sched, const StoppingRule& rule,
                       std::uint64_t run_seed, const SampleObserver& observer) {
    rule.validate();
    ModeSet set;
    std::vector<FlowField> accepted;
    int in_a_row = 0;
    set.stop_reason = "max_modes";
    for (int index = 0; static_cast<int>(set.modes.size()) < rule.max_modes; ++index) {
        GuidedSamplerConfig g = gcfg;
        g.seed = derive_seed(run_seed, static_cast<std::uint64_t>(index));
        SampleResult res = sample(denoiser, m, accepted, cfg, g, sched);
        ++set.samples_drawn;
        const bool accept = res.energy <= rule.rho;
        if (observer) observer(index, res, accept);
        if (accept) {
            in_a_row = 0;
            accepted.push_back(res.x0);
            set.modes.push_back({std::move(res.x0), res.energy, res.terms, g.seed, index});
        } else {
            set.discards.push_back({index, g.seed, res.energy});
            if (++in_a_row >= rule.discard_limit) {
                set.stop_reason = "consecutive_discards";
                break;
            }
        }
    }
    return set;
}

namespace {

ModeSet denoise_starts(const Denoiser& denoiser, const ObjectMask& m, const std::vector<std::size_t>& order,
                       const std::vector<std::optional<FlowField>>& starts, std::uint64_t run_seed,
                       const NoiseSchedule& sched, const GuidanceConfig& reporting) {
    reporting.validate();
    GuidanceConfig off = reporting;
    off.lambda_d = off.lambda_c = off.lambda_o = off.lambda_s = 0.0;
    ModeSet set;
    std::vector<FlowField> drawn;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const std::size_t idx = order[pos];
        GuidedSamplerConfig g;
        g.guided_steps = 0;
        g.seed = derive_seed(run_seed, idx);
        SampleResult res = sample(denoiser, m, {}, off, g, sched, starts.empty() ? std::nullopt : starts[idx]);
        const EnergyTerms terms = energy_terms(res.x0, m, drawn, reporting);
        const double e = terms.combined(reporting);
        drawn.push_back(res.x0);
        set.modes.push_back({std::move(res.x0), e, terms, g.seed, static_cast<int>(pos)});
        ++set.samples_drawn;
    }
    set.stop_reason = "sample_count";
    return set;
}

}  // namespace

ModeSet baseline_random(const Denoiser& denoiser, const ObjectMask& m, int n, std::uint64_t run_seed,
                        const NoiseSchedule& sched, const GuidanceConfig& reporting) {
    if (n < 0) throw InvalidArgument("sample count must be >= 0");
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    return denoise_starts(denoiser, m, order, {}, run_seed, sched, reporting);
}

std::vector<std::size_t> fps_select(std::size_t count, std::size_t n,
                                    const std::function<double(std::size_t, std::size_t)>& distance) {
    if (n > count) throw InvalidArgument("farthest-point pool smaller than the requested count");
    std::vector<std::size_t> picks;
    if (n == 0) return picks;
    std::vector<double> nearest(count, std::numeric_limits<double>::infinity());
    std::vector<bool> taken(count, false);
    std::size_t next = 0;
    while (true) {
        picks.push_back(next);
        taken[next] = true;
        if (picks.size() == n) break;
        for (std::size_t i = 0; i < count; ++i) {
            if (!taken[i]) nearest[i] = std::min(nearest[i], distance(next, i));
        }
        double best = -1.0;
        for (std::size_t i = 0; i < count; ++i) {
            if (!taken[i] && nearest[i] > best) {
                best = nearest[i];
                next = i;
            }
        }
    }
    return picks;
}

std::vector<std::size_t> fps_select(std::span<const FlowField> pool, std::size_t n) {
    return fps_select(pool.size(), n, [&](std::size_t a, std::size_t b) { return (pool[a] - pool[b]).norm(); });
}

ModeSet baseline_fps(const Denoiser& denoiser, const ObjectMask& m, int n, int pool_size, std::uint64_t run_seed,
                     const NoiseSchedule& sched, const GuidanceConfig& reporting) {
    if (n < 0) throw InvalidArgument("sample count must be >= 0");
    if (pool_size < n) throw InvalidArgument("pool_size must be >= n");
    std::vector<FlowField> pool;
    for (int i = 0; i < pool_size; ++i) {
        pool.push_back(initial_noise(denoiser.shape(), derive_seed(run_seed, static_cast<std::uint64_t>(i))));
    }
    const auto order = fps_select(pool, static_cast<std::size_t>(n));
    std::vector<std::optional<FlowField>> starts(pool.begin(), pool.end());
    return denoise_starts(denoiser, m, order, starts, run_seed, sched, reporting);
}

// Manifest -----------------------------------------------------------------

namespace {

nlohmann::json terms_json(const EnergyTerms& t) {
    return {{"E_d", t.diversity}, {"E_c", t.camera}, {"E_o", t.object}, {"E_s", t.smoothness}};
}

EnergyTerms terms_from_json(const nlohmann::json& j) {
    return {j.at("E_d").get<double>(), j.at("E_c").get<double>(), j.at("E_o").get<double>(),
            j.at("E_s").get<double>()};
}

std::string mode_file_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "mode_%03zu.mmff", i);
    return buf;
}

}  // namespace

nlohmann::json modeset_to_json(const ModeSet& set, const std::vector<std::string>& mode_files) {
    if (mode_files.size() != set.modes.size()) throw InvalidArgument("one file name per mode required");
    nlohmann::json modes = nlohmann::json::array();
    for (std::size_t i = 0; i < set.modes.size(); ++i) {
        const auto& m = set.modes[i];
        modes.push_back({{"file", mode_files[i]},
                         {"energy", m.energy},
                         {"terms", terms_json(m.terms)},
                         {"seed", m.seed},
                         {"sample_index", m.sample_index}});
    }
    nlohmann::json discards = nlohmann::json::array();
    for (const auto& d : set.discards) {
        discards.push_back({{"sample_index", d.sample_index}, {"seed", d.seed}, {"energy", d.energy}});
    }
    return {{"schema_version", 1},
            {"modes", modes},
            {"discards", discards},
            {"samples_drawn", set.samples_drawn},
            {"stop_reason", set.stop_reason}};
}

void write_modeset(const ModeSet& set, const std::filesystem::path& dir, const nlohmann::json& extra) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    std::vector<std::string> files;
    for (std::size_t i = 0; i < set.modes.size(); ++i) {
        files.push_back(mode_file_name(i));
        write_flow(set.modes[i].flow, dir / files.back());
    }
    nlohmann::json doc = modeset_to_json(set, files);
    if (!extra.is_null()) doc["run"] = extra;
    write_text_file(dir / "manifest.json", doc.dump(2) + "\n");
}

ModeSet read_modeset(const std::filesystem::path& manifest) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(manifest));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("manifest " + manifest.string() + " is not valid JSON: " + e.what());
    }
    const auto base = manifest.parent_path();
    ModeSet set;
    try {
        if (doc.at("schema_version").get<int>() != 1) throw ConfigError("unsupported manifest schema_version");
        for (const auto& j : doc.at("modes")) {
            AcceptedMode m;
            m.flow = read_flow(base / j.at("file").get<std::string>());
            m.energy = j.at("energy").get<double>();
            m.terms = terms_from_json(j.at("terms"));
            m.seed = j.at("seed").get<std::uint64_t>();
            m.sample_index = j.at("sample_index").get<int>();
            set.modes.push_back(std::move(m));
        }
        for (const auto& j : doc.at("discards")) {
            set.discards.push_back({j.at("sample_index").get<int>(), j.at("seed").get<std::uint64_t>(),
                                    j.at("energy").get<double>()});
        }
        set.samples_drawn = doc.at("samples_drawn").get<int>();
        set.stop_reason = doc.at("stop_reason").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed manifest " + manifest.string() + ": " + e.what());
    }
    for (const auto& m : set.modes) require_same_shape(set.modes.front().flow, m.flow, "manifest");
    return set;
}

}  // namespace motionmodes
