#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "motionmodes/discovery.hpp"
#include "motionmodes/errors.hpp"
#include "motionmodes/flow_io.hpp"
#include "motionmodes/gradcheck.hpp"
#include "motionmodes/metrics.hpp"
#include "motionmodes/priors.hpp"
#include "motionmodes/prompting.hpp"
#include "motionmodes/render.hpp"
#include "motionmodes/rng.hpp"
#ifdef MOTIONMODES_HAVE_LEARNED
#include "motionmodes/learned.hpp"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace motionmodes;

namespace {

struct Options {
    std::string scene_path;
    std::string guidance_path;
    std::string manifest;
    std::string out = "out";
    std::string flow_path;
    std::string arrow;
    std::string denoiser = "exact";
    std::uint64_t seed = 0;
    int steps = NoiseSchedule::kDefaultSteps;
    int guided_steps = 20;
    double gamma = 1.0;
    double rho = 5.0;
    int max_modes = 6;
    int pool_size = 64;
    int n = 6;
    int stride = 4;
    int frame = -1;
    int mode = -1;
    int trials = 100;
    bool detach = false;
    bool shift_mean = false;
    std::vector<std::string> no_energy;
    std::string method;
    std::string action;
};

json parse_json_file(const fs::path& path) {
    const std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + " is not valid JSON: " + e.what());
    }
}

SceneSpec load_scene(const Options& o) {
    if (o.scene_path.empty()) throw ConfigError("--scene is required");
    return build_motion_bank(scene_params_from_json(parse_json_file(o.scene_path)));
}

GuidanceConfig load_guidance(const Options& o) {
    GuidanceConfig cfg;
    if (!o.guidance_path.empty()) cfg = guidance_from_json(parse_json_file(o.guidance_path));
    for (const auto& term : o.no_energy) {
        if (term == "c") cfg.lambda_c = 0.0;
        else if (term == "o") cfg.lambda_o = 0.0;
        else if (term == "d") cfg.lambda_d = 0.0;
        else if (term == "s") cfg.lambda_s = 0.0;
    }
    cfg.validate();
    return cfg;
}

// Metrics and bank matching always use the unablated constants.
GuidanceConfig reporting_guidance(const Options& o) {
    Options plain = o;
    plain.no_energy.clear();
    return load_guidance(plain);
}

GuidedSamplerConfig sampler_config(const Options& o) {
    GuidedSamplerConfig g;
    g.guided_steps = o.guided_steps;
    g.guidance_scale = o.gamma;
    g.through_denoiser = !o.detach;
    g.shift_mean = o.shift_mean;
    return g;
}

std::unique_ptr<Denoiser> make_denoiser(const Options& o, const SceneSpec& scene, const NoiseSchedule& sched) {
    if (o.denoiser == "exact") return std::make_unique<MixtureDenoiser>(to_prior(scene), sched);
#ifdef MOTIONMODES_HAVE_LEARNED
    TrainingConfig tc;
    tc.seed = o.seed;
    return std::make_unique<SmallConvDenoiser>(train_small_denoiser(scene, sched, tc));
#else
    throw ConfigError("this build has no learned denoiser");
#endif
}

json run_info(const Options& o, const GuidanceConfig& cfg) {
    json j{{"seed", o.seed},
           {"steps", o.steps},
           {"guided_steps", o.guided_steps},
           {"gamma", o.gamma},
           {"denoiser", o.denoiser},
           {"detach_denoiser", o.detach},
           {"shift_mean", o.shift_mean},
           {"guidance", to_json(cfg)}};
    return j;
}

void render_modes(const ModeSet& set, const ObjectMask& mask, const fs::path& dir, int frame, int stride) {
    const auto flows = set.flows();
    if (flows.empty()) return;
    const auto svgs = render_trajectories(flows, mask, stride);
    for (std::size_t i = 0; i < flows.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "mode_%03zu", i);
        const int k = frame < 0 ? flows[i].frames() - 1 : frame;
        write_png(render_color(flows[i], k), dir / (std::string(stem) + ".png"));
        write_text_file(dir / (std::string(stem) + ".svg"), svgs[i]);
    }
}

int cmd_dataset_gen(const Options& o) {
    const SceneSpec scene = load_scene(o);
    const fs::path dir = o.out;
    fs::create_directories(dir);
    json bank = json::array();
    for (std::size_t i = 0; i < scene.bank.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "bank_%03zu.mmff", i);
        write_flow(scene.bank[i].mean, dir / name);
        bank.push_back({{"label", scene.bank[i].label}, {"weight", scene.bank[i].weight}, {"file", name}});
    }
    const MixturePrior prior = to_prior(scene);
    json samples = json::array();
    for (int i = 0; i < o.n; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "sample_%03d.mmff", i);
        std::size_t component = 0;
        write_flow(sample_prior(prior, derive_seed(o.seed, static_cast<std::uint64_t>(i)), &component), dir / name);
        samples.push_back({{"file", name}, {"component", component}});
    }
    json doc{{"schema_version", 1}, {"scene", to_json(scene.params)}, {"bank", bank}, {"samples", samples}};
    write_text_file(dir / "dataset.json", doc.dump(2) + "\n");
    return 0;
}

int cmd_discover(const Options& o) {
    const SceneSpec scene = load_scene(o);
    const GuidanceConfig cfg = load_guidance(o);
    const NoiseSchedule sched = NoiseSchedule::cosine(o.steps);
    const auto den = make_denoiser(o, scene, sched);
    StoppingRule rule;
    rule.rho = o.rho;
    rule.max_modes = o.max_modes;

    const fs::path dir = o.out;
    fs::create_directories(dir);
    std::string telemetry;
    const auto observer = [&](int index, const SampleResult& r, bool accepted) {
        for (const auto& step : r.telemetry) {
            json line{{"sample", index}, {"accepted", accepted}, {"step", to_json(step)}};
            telemetry += line.dump() + "\n";
        }
    };
    const ModeSet set = discover_modes(*den, scene.mask, cfg, sampler_config(o), sched, rule, o.seed, observer);
    json info = run_info(o, cfg);
    info["rho"] = std::isfinite(o.rho) ? json(o.rho) : json("inf");
    info["max_modes"] = o.max_modes;
    write_modeset(set, dir, info);
    write_text_file(dir / "telemetry.jsonl", telemetry);
    render_modes(set, scene.mask, dir, o.frame, o.stride);
    std::cout << set.size() << " modes from " << set.samples_drawn << " samples (" << set.stop_reason << ")\n";
    return 0;
}

int cmd_baseline(const Options& o) {
    const SceneSpec scene = load_scene(o);
    const GuidanceConfig cfg = reporting_guidance(o);
    const NoiseSchedule sched = NoiseSchedule::cosine(o.steps);
    const auto den = make_denoiser(o, scene, sched);
    const ModeSet set = o.method == "fps" ? baseline_fps(*den, scene.mask, o.n, o.pool_size, o.seed, sched, cfg)
                                          : baseline_random(*den, scene.mask, o.n, o.seed, sched, cfg);
    const fs::path dir = o.out;
    fs::create_directories(dir);
    json info = run_info(o, cfg);
    info["method"] = o.method;
    if (o.method == "fps") info["pool_size"] = o.pool_size;
    write_modeset(set, dir, info);
    render_modes(set, scene.mask, dir, o.frame, o.stride);
    std::cout << set.size() << " " << o.method << " samples\n";
    return 0;
}

int cmd_eval(const Options& o) {
    if (o.manifest.empty()) throw ConfigError("--manifest is required");
    const SceneSpec scene = load_scene(o);
    const GuidanceConfig cfg = reporting_guidance(o);
    const ModeSet set = read_modeset(o.manifest);
    if (set.empty()) throw ConfigError("manifest holds no modes");
    const MetricsReport r = compute_metrics(set, scene.mask, cfg, &scene);
    const fs::path dir = o.out;
    fs::create_directories(dir);
    write_text_file(dir / "metrics.json", to_json(r).dump(2) + "\n");
    std::cout << metrics_table({{fs::path(o.manifest).parent_path().filename().string(), r}});
    return 0;
}

int cmd_render(const Options& o) {
    const fs::path dir = o.out;
    fs::create_directories(dir);
    if (!o.flow_path.empty()) {
        const FlowField x = read_flow(o.flow_path);
        const int k = o.frame < 0 ? x.frames() - 1 : o.frame;
        if (k >= x.frames()) throw InvalidArgument("frame index out of range");
        write_png(render_color(x, k), dir / (fs::path(o.flow_path).stem().string() + ".png"));
        if (!o.scene_path.empty()) {
            const SceneSpec scene = load_scene(o);
            const std::vector<FlowField> one{x};
            write_text_file(dir / (fs::path(o.flow_path).stem().string() + ".svg"),
                            render_trajectories(one, scene.mask, o.stride).front());
        }
        return 0;
    }
    if (o.manifest.empty()) throw ConfigError("render needs --flow or --manifest");
    const SceneSpec scene = load_scene(o);
    render_modes(read_modeset(o.manifest), scene.mask, dir, o.frame, o.stride);
    return 0;
}

int cmd_arrows(const Options& o) {
    if (o.manifest.empty()) throw ConfigError("--manifest is required");
    const ModeSet set = read_modeset(o.manifest);
    if (set.empty()) throw ConfigError("manifest holds no modes");
    const auto flows = set.flows();
    const fs::path dir = o.out;
    fs::create_directories(dir);
    if (o.action == "retrieve") {
        if (o.arrow.empty()) throw ConfigError("--arrow is required");
        const DragArrow a = parse_arrow(o.arrow);
        require_in_bounds(a, flows.front().height(), flows.front().width());
        const Retrieval r = retrieve_mode(flows, a);
        json doc{{"schema_version", 1},
                 {"arrow", arrows_to_json({a})[0]},
                 {"mode", r.mode},
                 {"frame", r.frame},
                 {"distance", r.distance}};
        write_text_file(dir / "retrieval.json", doc.dump(2) + "\n");
        std::cout << "mode " << r.mode << " frame " << r.frame << " distance " << r.distance << "\n";
        return 0;
    }
    const SceneSpec scene = load_scene(o);
    int mode = o.mode, k = o.frame;
    if (!o.arrow.empty()) {
        // Mode and frame default to the retrieval result for the given arrow.
        const DragArrow a = parse_arrow(o.arrow);
        require_in_bounds(a, flows.front().height(), flows.front().width());
        const Retrieval r = retrieve_mode(flows, a);
        if (mode < 0) mode = static_cast<int>(r.mode);
        if (k < 0) k = r.frame;
    }
    if (mode < 0) mode = 0;
    if (mode >= static_cast<int>(flows.size())) throw InvalidArgument("--mode out of range");
    if (k < 0) k = flows[mode].frames() - 1;
    const auto arrows = mode_to_arrows(flows[mode], scene.mask, k, o.n, o.seed);
    export_arrows(arrows, dir / "arrows.json");
    std::cout << arrows.size() << " arrows\n";
    return 0;
}

int cmd_gradcheck(const Options& o) {
    GradcheckOptions opt;
    opt.trials = o.trials;
    opt.seed = o.seed;
    GuidanceConfig cfg = load_guidance(o);
    const GradcheckReport r = run_gradcheck(cfg, opt);
    json trials = json::array();
    for (const auto& t : r.trials) trials.push_back({{"modes", t.modes}, {"error", t.error}, {"passed", t.passed}});
    json doc{{"schema_version", 1},     {"passed", r.passed},   {"trials", r.trials.size()},
             {"tolerance", r.tolerance}, {"worst", r.worst},     {"results", trials}};
    const fs::path dir = o.out;
    fs::create_directories(dir);
    write_text_file(dir / "gradcheck.json", doc.dump(2) + "\n");
    std::cout << r.summary() << "\n";
    if (!r.ok()) throw NumericalError("gradient check failed: " + r.summary());
    return 0;
}

void error_record(const char* kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discover distinct object motions from a flow-field motion prior"};
    app.require_subcommand(1);
    Options o;

    const auto scene = [&](CLI::App* c) { c->add_option("--scene", o.scene_path, "scene JSON")->check(CLI::ExistingFile); };
    const auto guidance = [&](CLI::App* c) {
        c->add_option("--guidance", o.guidance_path, "guidance constants JSON")->check(CLI::ExistingFile);
        c->add_option("--no-energy", o.no_energy, "disable energy terms")
            ->check(CLI::IsMember({"c", "o", "d", "s"}))
            ->take_all();
    };
    const auto sampler = [&](CLI::App* c) {
        c->add_option("--seed", o.seed, "run seed");
        c->add_option("--steps", o.steps, "denoising steps")->check(CLI::PositiveNumber);
        c->add_option("--guided-steps", o.guided_steps, "guided leading steps")->check(CLI::NonNegativeNumber);
        c->add_option("--gamma", o.gamma, "guidance scale")->check(CLI::NonNegativeNumber);
        c->add_flag("--detach-denoiser", o.detach, "skip the denoiser Jacobian in the guidance gradient");
        c->add_flag("--shift-mean", o.shift_mean, "use the shifted input in the step mean");
        c->add_option("--denoiser", o.denoiser, "exact or learned")->check(CLI::IsMember({"exact", "learned"}));
    };
    const auto out = [&](CLI::App* c) { c->add_option("--out", o.out, "output directory"); };
    const auto render_opts = [&](CLI::App* c) {
        c->add_option("--frame", o.frame, "frame index (default: last)");
        c->add_option("--stride", o.stride, "trajectory pixel stride")->check(CLI::PositiveNumber);
    };

    auto* dataset = app.add_subcommand("dataset-gen", "write bank mean flows and prior samples");
    scene(dataset);
    out(dataset);
    dataset->add_option("--seed", o.seed, "sample seed");
    dataset->add_option("--n", o.n, "prior samples to draw")->check(CLI::NonNegativeNumber);

    auto* discover = app.add_subcommand("discover", "guided mode discovery");
    scene(discover);
    guidance(discover);
    sampler(discover);
    out(discover);
    render_opts(discover);
    discover->add_option("--rho", o.rho, "acceptance threshold (inf allowed)");
    discover->add_option("--max-modes", o.max_modes, "mode budget")->check(CLI::NonNegativeNumber);

    auto* baseline = app.add_subcommand("baseline", "unguided baselines");
    baseline->add_option("method", o.method, "random or fps")->required()->check(CLI::IsMember({"random", "fps"}));
    scene(baseline);
    guidance(baseline);
    sampler(baseline);
    out(baseline);
    render_opts(baseline);
    baseline->add_option("--n", o.n, "samples")->check(CLI::PositiveNumber);
    baseline->add_option("--pool-size", o.pool_size, "fps noise pool")->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "metrics of a mode set");
    scene(eval);
    eval->add_option("--guidance", o.guidance_path, "guidance constants JSON")->check(CLI::ExistingFile);
    eval->add_option("--manifest", o.manifest, "manifest.json")->check(CLI::ExistingFile);
    out(eval);

    auto* render = app.add_subcommand("render", "PNG color coding and SVG trajectories");
    scene(render);
    render->add_option("--manifest", o.manifest, "manifest.json")->check(CLI::ExistingFile);
    render->add_option("--flow", o.flow_path, "single .mmff file")->check(CLI::ExistingFile);
    out(render);
    render_opts(render);

    auto* arrows = app.add_subcommand("arrows", "drag-arrow retrieval and extraction");
    arrows->add_option("action", o.action, "retrieve or extract")
        ->required()
        ->check(CLI::IsMember({"retrieve", "extract"}));
    scene(arrows);
    arrows->add_option("--manifest", o.manifest, "manifest.json")->check(CLI::ExistingFile);
    arrows->add_option("--arrow", o.arrow, "r1,c1:r2,c2 (1-based)");
    arrows->add_option("--mode", o.mode, "mode index for extract (default: retrieved, else 0)");
    arrows->add_option("--frame", o.frame, "frame index (default: retrieved, else last)");
    arrows->add_option("--n", o.n, "arrow budget")->check(CLI::PositiveNumber);
    arrows->add_option("--seed", o.seed, "k-means seed");
    out(arrows);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the energy gradient");
    gradcheck->add_option("--guidance", o.guidance_path, "guidance constants JSON")->check(CLI::ExistingFile);
    gradcheck->add_option("--trials", o.trials, "random trials")->check(CLI::NonNegativeNumber);
    gradcheck->add_option("--seed", o.seed, "seed");
    out(gradcheck);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        error_record("config", e.what());
        return 2;
    }

    try {
        if (*dataset) return cmd_dataset_gen(o);
        if (*discover) return cmd_discover(o);
        if (*baseline) return cmd_baseline(o);
        if (*eval) return cmd_eval(o);
        if (*render) return cmd_render(o);
        if (*arrows) return cmd_arrows(o);
        if (*gradcheck) return cmd_gradcheck(o);
    } catch (const ConfigError& e) {
        error_record("config", e.what());
        return 2;
    } catch (const InvalidArgument& e) {
        error_record("config", e.what());
        return 2;
    } catch (const NumericalError& e) {
        error_record("numerical", e.what());
        return 3;
    } catch (const IoError& e) {
        error_record("io", e.what());
        return 4;
    } catch (const FlowFormatError& e) {
        error_record("format", std::string(e.what()) + " at byte " + std::to_string(e.offset()));
        return 4;
    } catch (const fs::filesystem_error& e) {
        error_record("io", e.what());
        return 4;
    }
    return 0;
}
