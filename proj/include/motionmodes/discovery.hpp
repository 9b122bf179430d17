#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "motionmodes/diffusion.hpp"
#include "motionmodes/energies.hpp"
#include "motionmodes/flow.hpp"

namespace motionmodes {

/// Accept a sample iff its final energy is <= rho; stop after max_modes accepts
/// or discard_limit discards in a row.
struct StoppingRule {
    double rho = 5.0;
    int max_modes = 6;
    int discard_limit = 2;

    void validate() const;
};

struct AcceptedMode {
    FlowField flow;
    double energy = 0.0;
    EnergyTerms terms;
    std::uint64_t seed = 0;
    int sample_index = 0;  // 0-based position in the draw sequence
};

struct DiscardRecord {
    int sample_index = 0;
    std::uint64_t seed = 0;
    double energy = 0.0;
};

struct ModeSet {
    std::vector<AcceptedMode> modes;
    std::vector<DiscardRecord> discards;
    int samples_drawn = 0;
    std::string stop_reason;

    std::size_t size() const { return modes.size(); }
    bool empty() const { return modes.empty(); }
    std::vector<FlowField> flows() const;
};

/// Called after every sample with the sampler output and whether it was accepted.
using SampleObserver = std::function<void(int sample_index, const SampleResult&, bool accepted)>;

/// Sequential discovery: each sample is guided away from the modes accepted so far.
/// Per-sample seeds are derive_seed(run_seed, sample_index); gcfg.seed is ignored.
ModeSet discover_modes(const Denoiser& denoiser, const ObjectMask& m, const GuidanceConfig& cfg,
                       const GuidedSamplerConfig& gcfg, const NoiseSchedule& sched, const StoppingRule& rule,
                       std::uint64_t run_seed, const SampleObserver& observer = {});

/// n unguided samples with seeds derive_seed(run_seed, i). Energies are recorded
/// under `reporting` against the modes drawn before each sample.
ModeSet baseline_random(const Denoiser& denoiser, const ObjectMask& m, int n, std::uint64_t run_seed,
                        const NoiseSchedule& sched, const GuidanceConfig& reporting = {});

/// Greedy farthest-point selection of n indices out of `count` items. The first pick
/// is index 0; each later pick maximizes the minimum distance to the picks so far,
/// ties going to the lowest index.
std::vector<std::size_t> fps_select(std::size_t count, std::size_t n,
                                    const std::function<double(std::size_t, std::size_t)>& distance);
std::vector<std::size_t> fps_select(std::span<const FlowField> pool, std::size_t n);

/// Draws pool_size starting noises initial_noise(derive_seed(run_seed, i)), picks n
/// by farthest-point selection and denoises each without guidance.
ModeSet baseline_fps(const Denoiser& denoiser, const ObjectMask& m, int n, int pool_size, std::uint64_t run_seed,
                     const NoiseSchedule& sched, const GuidanceConfig& reporting = {});

/// Manifest: modes are written as mode_NNN.mmff next to manifest.json.
nlohmann::json modeset_to_json(const ModeSet& set, const std::vector<std::string>& mode_files);
void write_modeset(const ModeSet& set, const std::filesystem::path& dir, const nlohmann::json& extra = {});
ModeSet read_modeset(const std::filesystem::path& manifest);

}  // namespace motionmodes
