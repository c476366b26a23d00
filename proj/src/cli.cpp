#include "pancake/cli.hpp"

#include "pancake/dataset.hpp"
#include "pancake/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace pancake {

namespace {

json default_config() {
    json j;
    j["dataset"] = "";
    j["out"] = "run";
    j["seed"] = 0;
    j["iterations"] = 7000;
    j["densify_until"] = 4000;
    j["densify_interval"] = 100;
    j["geo_loss_start"] = 1000;
    j["sh_degree_interval"] = 1000;
    j["depth_on"] = true;
    j["geo_on"] = true;
    j["checkpoint_interval"] = 0;
    j["normal_knn"] = 10;
    j["background"] = {0.0, 0.0, 0.0};
    j["weights"] = {{"lambda1", 0.2}, {"lambda2", 0.6}, {"lambda3", 0.2}, {"delta", 0.2}};
    j["lr"] = {{"position", 1.6e-4}, {"position_final", 1.6e-6}, {"sh", 2.5e-3},
               {"opacity", 5e-2},    {"scale", 5e-3},            {"rotation", 1e-3}};
    j["densify"] = {{"grad_threshold", 2e-4},
                    {"opacity_floor", 0.005},
                    {"scale_threshold_rel", 0.01},
                    {"split_factor", 1.6}};
    j["synth"] = {{"shape", "tube"},      {"n_views", 60},        {"resolution", 128},
                  {"noise_depth", 0.0},   {"noise_rot_deg", 0.0}, {"noise_trans_rel", 0.0},
                  {"samples_u", 110},     {"samples_v", 44}};
    return j;
}

void merge_into(json& base, const json& overlay) {
    if (!overlay.is_object() || !base.is_object()) {
        base = overlay;
        return;
    }
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
            merge_into(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

void set_dotted(json& j, const std::string& key, const std::string& raw_value) {
    json value;
    try {
        value = json::parse(raw_value);
    } catch (...) {
        value = raw_value;
    }
    json* at = &j;
    std::size_t pos = 0;
    while (true) {
        const std::size_t dot = key.find('.', pos);
        const std::string part = key.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (dot == std::string::npos) {
            (*at)[part] = value;
            return;
        }
        at = &(*at)[part];
        pos = dot + 1;
    }
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.iterations = j.at("iterations").get<int>();
    c.densify_until = j.at("densify_until").get<int>();
    c.densify_interval = j.at("densify_interval").get<int>();
    c.geo_loss_start = j.at("geo_loss_start").get<int>();
    c.sh_degree_interval = j.at("sh_degree_interval").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.depth_on = j.at("depth_on").get<bool>();
    c.geo_on = j.at("geo_on").get<bool>();
    c.checkpoint_interval = j.at("checkpoint_interval").get<int>();
    c.normal_knn = j.at("normal_knn").get<int>();
    const auto& bg = j.at("background");
    c.background = Vec3(bg.at(0).get<double>(), bg.at(1).get<double>(), bg.at(2).get<double>());
    const auto& w = j.at("weights");
    c.weights.lambda1 = w.at("lambda1").get<double>();
    c.weights.lambda2 = w.at("lambda2").get<double>();
    c.weights.lambda3 = w.at("lambda3").get<double>();
    c.weights.delta = w.at("delta").get<double>();
    const auto& lr = j.at("lr");
    c.lr_position = lr.at("position").get<double>();
    c.lr_position_final = lr.at("position_final").get<double>();
    c.lr_sh = lr.at("sh").get<double>();
    c.lr_opacity = lr.at("opacity").get<double>();
    c.lr_scale = lr.at("scale").get<double>();
    c.lr_rotation = lr.at("rotation").get<double>();
    const auto& d = j.at("densify");
    c.densify.grad_threshold = d.at("grad_threshold").get<double>();
    c.densify.opacity_floor = d.at("opacity_floor").get<double>();
    c.densify.scale_threshold_rel = d.at("scale_threshold_rel").get<double>();
    c.densify.split_factor = d.at("split_factor").get<double>();
    return c;
}

SynthParams synth_from_json(const json& j) {
    const auto& s = j.at("synth");
    SynthParams p;
    const std::string shape = s.at("shape").get<std::string>();
    if (shape == "tube") p.shape = SynthShape::Tube;
    else if (shape == "sphere") p.shape = SynthShape::Sphere;
    else if (shape == "plane") p.shape = SynthShape::Plane;
    else throw std::invalid_argument("config: unknown synth.shape '" + shape + "'");
    p.n_views = s.at("n_views").get<int>();
    p.resolution = s.at("resolution").get<int>();
    p.noise_depth = s.at("noise_depth").get<double>();
    p.noise_rot_deg = s.at("noise_rot_deg").get<double>();
    p.noise_trans_rel = s.at("noise_trans_rel").get<double>();
    p.samples_u = s.at("samples_u").get<int>();
    p.samples_v = s.at("samples_v").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

void write_resolved_config(const std::string& out_dir, const json& cfg,
                           const std::string& command) {
    json snapshot = cfg;
    snapshot["command"] = command;
    std::ofstream out(fs::path(out_dir) / "resolved_config.json");
    out << snapshot.dump(2) << "\n";
}

struct CommonArgs {
    std::string config_path;
    std::string out;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<int> iterations;
    std::optional<bool> geo_on;
    std::optional<bool> depth_on;
};

json resolve_config(const CommonArgs& a) {
    json cfg = default_config();
    if (!a.config_path.empty()) {
        if (!fs::exists(a.config_path))
            throw std::invalid_argument("config file not found: " + a.config_path);
        std::ifstream in(a.config_path);
        json file_cfg;
        try {
            in >> file_cfg;
        } catch (const std::exception& e) {
            throw std::invalid_argument("config parse error in " + a.config_path + ": " +
                                        e.what());
        }
        merge_into(cfg, file_cfg);
    }
    for (const auto& s : a.sets) {
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key.path=value, got: " + s);
        set_dotted(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (a.seed) cfg["seed"] = *a.seed;
    if (a.iterations) cfg["iterations"] = *a.iterations;
    if (a.geo_on) cfg["geo_on"] = *a.geo_on;
    if (a.depth_on) cfg["depth_on"] = *a.depth_on;
    if (!a.out.empty()) cfg["out"] = a.out;
    return cfg;
}

SceneDataset load_dataset_checked(const json& cfg) {
    const std::string path = cfg.at("dataset").get<std::string>();
    if (path.empty())
        throw std::invalid_argument("no dataset path configured (set 'dataset' in the "
                                    "config or pass --set dataset=PATH)");
    if (!fs::exists(path))
        throw std::invalid_argument("dataset path does not exist: " + path);
    return load_dataset(path);
}

int cmd_synth(const CommonArgs& args) {
    const json cfg = resolve_config(args);
    const std::string out = cfg.at("out").get<std::string>();
    fs::create_directories(out);
    const SynthParams params = synth_from_json(cfg);
    const SynthResult result = synth_scene(out, params);
    write_resolved_config(out, cfg, "synth");
    std::printf("synth: wrote %zu views to %s (%zu ground-truth Gaussians)\n",
                result.dataset.frames.size(), out.c_str(), result.ground_truth.size());
    return 0;
}

int cmd_train(const CommonArgs& args) {
    const json cfg = resolve_config(args);
    const SceneDataset dataset = load_dataset_checked(cfg);
    const TrainConfig config = config_from_json(cfg);
    const std::string out = cfg.at("out").get<std::string>();
    fs::create_directories(out);
    write_resolved_config(out, cfg, "train");

    TrainResult result = train(dataset, config, out);

    save_checkpoint_ply((fs::path(out) / "checkpoint_final.ply").string(), result.cloud);
    write_training_log_csv((fs::path(out) / "training_log.csv").string(), result.log);

    const SplitResult split = split_8_1(dataset);
    const EvalResult train_eval =
        evaluate(result.cloud, dataset, split.train, config.background);
    write_eval_csv((fs::path(out) / "eval_train.csv").string(), train_eval);
    std::printf("train: %d iterations, %zu Gaussians, train PSNR %.2f dB SSIM %.4f\n",
                config.iterations, result.cloud.size(), train_eval.mean_psnr,
                train_eval.mean_ssim);
    if (!split.test.empty()) {
        const EvalResult test_eval =
            evaluate(result.cloud, dataset, split.test, config.background, true);
        write_eval_csv((fs::path(out) / "eval_test.csv").string(), test_eval);
        std::printf("train: test PSNR %.2f dB SSIM %.4f depth MSE %.6g FPS %.1f\n",
                    test_eval.mean_psnr, test_eval.mean_ssim, test_eval.mean_depth_mse,
                    test_eval.fps);
    }
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint) {
    const json cfg = resolve_config(args);
    const SceneDataset dataset = load_dataset_checked(cfg);
    if (!fs::exists(checkpoint))
        throw std::invalid_argument("checkpoint not found: " + checkpoint);
    const GaussianCloud cloud = load_checkpoint_ply(checkpoint);
    const TrainConfig config = config_from_json(cfg);
    const std::string out = cfg.at("out").get<std::string>();
    fs::create_directories(out);
    write_resolved_config(out, cfg, "eval");

    const SplitResult split = split_8_1(dataset);
    const std::vector<int>& views = split.test.empty() ? split.train : split.test;
    const EvalResult eval = evaluate(cloud, dataset, views, config.background, true);
    write_eval_csv((fs::path(out) / "eval.csv").string(), eval);

    std::printf("%-24s %8s %8s %12s %8s\n", "model", "PSNR", "SSIM", "DepthMSE", "FPS");
    std::printf("%-24s %8.2f %8.4f %12.6g %8.1f\n", "pancake", eval.mean_psnr,
                eval.mean_ssim, eval.mean_depth_mse, eval.fps);
    return 0;
}

int cmd_render(const std::string& checkpoint, const std::string& cameras_path,
               const std::string& out) {
    if (!fs::exists(checkpoint))
        throw std::invalid_argument("checkpoint not found: " + checkpoint);
    if (!fs::exists(cameras_path))
        throw std::invalid_argument("camera path file not found: " + cameras_path);
    const GaussianCloud cloud = load_checkpoint_ply(checkpoint);
    const std::vector<FrameRef> frames = parse_cameras_json(cameras_path);
    fs::create_directories(out);
    if (frames.empty()) {
        std::fprintf(stderr, "render: warning: empty camera list, nothing to do\n");
        return 0;
    }

    std::vector<double> times_ms;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        RenderOutput r = render(cloud, frames[i].camera, Vec3::Zero());
        const auto t1 = std::chrono::steady_clock::now();
        times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

        Image rgb = r.rgb;
        for (auto& v : rgb.data) v = std::clamp(v, 0.0, 1.0);
        const std::string stem =
            frames[i].file.empty() ? "frame_" + std::to_string(i) : frames[i].file;
        const std::string base = fs::path(stem).stem().string();
        write_png_rgb8((fs::path(out) / (base + ".png")).string(), rgb);

        double scale = frames[i].depth_scale;
        if (!(scale > 0.0)) {
            double dmax = 0.0;
            for (double d : r.depth.data) dmax = std::max(dmax, d);
            scale = dmax > 0.0 ? dmax / 65000.0 : 1.0 / 65000.0;
        }
        write_png_gray16((fs::path(out) / (base + "_depth.png")).string(), r.depth, scale);
    }
    std::sort(times_ms.begin(), times_ms.end());
    const double med = times_ms[times_ms.size() / 2];
    std::printf("render: %zu frames, median %.2f ms (%.1f fps)\n", frames.size(), med,
                med > 0 ? 1000.0 / med : 0.0);
    return 0;
}

int cmd_ablate(const CommonArgs& args) {
    const json cfg = resolve_config(args);
    const SceneDataset dataset = load_dataset_checked(cfg);
    const TrainConfig config = config_from_json(cfg);
    const std::string out = cfg.at("out").get<std::string>();
    fs::create_directories(out);
    write_resolved_config(out, cfg, "ablate");

    const std::vector<AblationRow> rows = run_ablation(dataset, config);
    write_ablation_csv((fs::path(out) / "ablation.csv").string(), rows);
    write_ablation_timings_csv((fs::path(out) / "ablation_timings.csv").string(), rows);

    std::printf("%-24s %8s %10s %12s %14s\n", "variant", "PSNR", "DepthSSIM", "DepthMSE",
                "NormalDev(deg)");
    for (const auto& r : rows)
        std::printf("%-24s %8.3f %10.4f %12.6g %14.3f\n", r.variant.c_str(), r.psnr,
                    r.depth_ssim, r.depth_mse, r.normal_dev_deg);
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"pancake: geometrically regularized Gaussian splatting"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string checkpoint, cameras_path;

    auto add_common = [&](CLI::App* sub, bool with_train_flags) {
        sub->add_option("--config", args.config_path, "JSON config file");
        sub->add_option("--out", args.out, "output directory");
        sub->add_option("--set", args.sets, "override a config field: key.path=value");
        sub->add_option("--seed", args.seed, "RNG seed");
        if (with_train_flags) {
            sub->add_option("--iterations", args.iterations, "training iterations");
            sub->add_option("--geo-on", args.geo_on, "enable the geometric loss");
            sub->add_option("--depth-on", args.depth_on, "enable the depth loss");
        }
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth, false);
    CLI::App* train_cmd = app.add_subcommand("train", "optimize a Gaussian cloud");
    add_common(train_cmd, true);
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd, false);
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint PLY")->required();
    CLI::App* render_cmd = app.add_subcommand("render", "render novel views");
    render_cmd->add_option("--checkpoint", checkpoint, "checkpoint PLY")->required();
    render_cmd->add_option("--cameras", cameras_path, "camera path JSON")->required();
    render_cmd->add_option("--out", args.out, "output directory")->required();
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the 4-variant study");
    add_common(ablate_cmd, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(args);
        if (train_cmd->parsed()) return cmd_train(args);
        if (eval_cmd->parsed()) return cmd_eval(args, checkpoint);
        if (render_cmd->parsed()) return cmd_render(checkpoint, cameras_path, args.out);
        if (ablate_cmd->parsed()) return cmd_ablate(args);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("pancake");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

} // namespace pancake
