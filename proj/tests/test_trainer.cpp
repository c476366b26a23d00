#include <doctest.h>

#include "pancake/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace pancake;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
    const fs::path p = fs::path("/tmp/pancake_tests") / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

SceneDataset toy_dataset(const std::string& name, int n_views = 12, int res = 32,
                         std::uint64_t seed = 21) {
    SynthParams p;
    p.shape = SynthShape::Plane;
    p.n_views = n_views;
    p.resolution = res;
    p.samples_u = 16;
    p.samples_v = 16;
    p.seed = seed;
    return synth_scene(temp_dir(name), p).dataset;
}

TrainConfig toy_config(int iterations) {
    TrainConfig c;
    c.iterations = iterations;
    c.densify_until = iterations / 2;
    c.densify_interval = 10;
    c.geo_loss_start = iterations / 4;
    c.sh_degree_interval = std::max(1, iterations / 3);
    c.seed = 5;
    return c;
}

// Scalar reference Adam used as the trajectory oracle.
struct ScalarAdam {
    double m = 0, v = 0;
    long t = 0;
    double step(double theta, double g, double lr) {
        t += 1;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        return theta - lr * mh / (std::sqrt(vh) + 1e-15);
    }
};

} // namespace

TEST_CASE("adam_step zero gradient leaves parameters unchanged") {
    AdamGroup g;
    g.init(5);
    std::vector<double> params = {1.0, -2.0, 0.5, 3.0, 0.0};
    const std::vector<double> grads(5, 0.0);
    const std::vector<double> before = params;
    adam_step(g, params, grads, 0.1);
    CHECK(params == before);
}

TEST_CASE("adam_step first step is approximately -lr") {
    AdamGroup g;
    g.init(1);
    std::vector<double> params = {0.0};
    const std::vector<double> grads = {1.0};
    adam_step(g, params, grads, 0.1);
    CHECK(params[0] == doctest::Approx(-0.1).epsilon(1e-12));
}

TEST_CASE("adam_step 100-step quadratic bowl matches the scalar oracle") {
    AdamGroup g;
    g.init(1);
    std::vector<double> params = {3.0};
    ScalarAdam oracle;
    double theta = 3.0;
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> grads = {2.0 * params[0]};  // d/dx of x^2
        adam_step(g, params, grads, 0.05);
        theta = oracle.step(theta, 2.0 * theta, 0.05);
        CHECK(params[0] == doctest::Approx(theta).epsilon(1e-10));
    }
    CHECK(std::abs(params[0]) < 3.0);
}

TEST_CASE("adam_step rejects non-finite gradients with the index") {
    AdamGroup g;
    g.init(3);
    std::vector<double> params = {0, 0, 0};
    std::vector<double> grads = {0, std::numeric_limits<double>::quiet_NaN(), 0};
    try {
        adam_step(g, params, grads, 0.1);
        FAIL("expected failure");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("AdamState remap preserves survivor moments and zeroes new ones") {
    AdamState s;
    s.init(3);
    for (std::size_t i = 0; i < s.opacity.m.size(); ++i) s.opacity.m[i] = 1.0 + i;
    for (std::size_t i = 0; i < s.position.m.size(); ++i) s.position.m[i] = 10.0 + i;
    // Gaussian 1 removed; a new one appended.
    const std::vector<std::int64_t> source = {0, 2, -1};
    s.remap(source);
    CHECK(s.opacity.m == std::vector<double>{1.0, 3.0, 0.0});
    CHECK(s.position.m[0] == 10.0);
    CHECK(s.position.m[3] == 16.0);  // old Gaussian 2, component x
    CHECK(s.position.m[6] == 0.0);
    CHECK(s.position.m.size() == 9);
}

TEST_CASE("train runs, logs, and stays finite on a toy scene") {
    const SceneDataset ds = toy_dataset("train_smoke");
    const TrainConfig cfg = toy_config(60);
    const TrainResult r = train(ds, cfg);
    CHECK(r.log.size() == 60);
    CHECK(r.cloud.all_finite());
    CHECK(r.cloud.size() >= 1);
    for (const auto& row : r.log) {
        CHECK(std::isfinite(row.losses.l_total));
        CHECK(row.losses.l_total >= 0.0);
        CHECK(row.n_gaussians >= 1);
    }
}

TEST_CASE("train is deterministic given the seed") {
    const SceneDataset ds = toy_dataset("train_det");
    const TrainConfig cfg = toy_config(40);
    const TrainResult a = train(ds, cfg);
    const TrainResult b = train(ds, cfg);
    REQUIRE(a.cloud.size() == b.cloud.size());
    CHECK(a.cloud.positions == b.cloud.positions);
    CHECK(a.cloud.raw_opacities == b.cloud.raw_opacities);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].losses.l_total == b.log[i].losses.l_total);
        CHECK(a.log[i].n_gaussians == b.log[i].n_gaussians);
    }
}

TEST_CASE("geometric gating shows up in the log") {
    const SceneDataset ds = toy_dataset("train_gate");
    TrainConfig cfg = toy_config(40);
    cfg.geo_loss_start = 20;
    const TrainResult r = train(ds, cfg);
    for (const auto& row : r.log) {
        if (row.iteration <= 20) CHECK(row.losses.l_geo == 0.0);
    }
    bool geo_seen = false;
    for (const auto& row : r.log)
        if (row.iteration > 20 && row.losses.l_geo > 0.0) geo_seen = true;
    CHECK(geo_seen);
}

TEST_CASE("ablation flags zero the corresponding loss terms") {
    const SceneDataset ds = toy_dataset("train_flags");
    TrainConfig cfg = toy_config(20);
    cfg.depth_on = false;
    cfg.geo_on = false;
    const TrainResult r = train(ds, cfg);
    for (const auto& row : r.log) {
        CHECK(row.losses.l_depth == 0.0);
        CHECK(row.losses.l_geo == 0.0);
        CHECK(row.losses.l_total ==
              0.8 * row.losses.l_image + 0.2 * row.losses.l_dssim);
    }
}

TEST_CASE("cloud size changes only at densify interval multiples") {
    const SceneDataset ds = toy_dataset("train_densify");
    TrainConfig cfg = toy_config(60);
    cfg.densify_interval = 10;
    cfg.densify_until = 40;
    // Encourage densification on the toy scene.
    cfg.densify.grad_threshold = 1e-7;
    const TrainResult r = train(ds, cfg);
    int prev_n = r.log.front().n_gaussians;
    for (std::size_t i = 1; i < r.log.size(); ++i) {
        const auto& row = r.log[i];
        if (row.n_gaussians != prev_n) {
            CHECK(row.iteration % 10 == 0);
            CHECK(row.iteration <= 40);
        }
        prev_n = row.n_gaussians;
    }
    CHECK_FALSE(r.densify_iterations.empty());
}

TEST_CASE("training reduces the loss on the toy scene") {
    const SceneDataset ds = toy_dataset("train_converge", 12, 32, 23);
    TrainConfig cfg = toy_config(300);
    const TrainResult r = train(ds, cfg);
    auto median_slice = [&](std::size_t lo, std::size_t hi) {
        std::vector<double> vals;
        for (std::size_t i = lo; i < hi; ++i) vals.push_back(r.log[i].losses.l_total);
        std::sort(vals.begin(), vals.end());
        return vals[vals.size() / 2];
    };
    CHECK(median_slice(200, 300) < median_slice(0, 100));
}

TEST_CASE("train requires depth maps when depth supervision is on") {
    const std::string root = temp_dir("train_nodepth");
    SynthParams p;
    p.shape = SynthShape::Plane;
    p.n_views = 10;
    p.resolution = 32;
    p.samples_u = 12;
    p.samples_v = 12;
    p.seed = 9;
    SceneDataset ds = synth_scene(root, p).dataset;
    for (auto& f : ds.frames) f.depth_path.clear();  // simulate missing depths
    TrainConfig cfg = toy_config(10);
    cfg.depth_on = true;
    CHECK_THROWS_AS(train(ds, cfg), std::runtime_error);
}

TEST_CASE("train rejects an empty dataset") {
    SceneDataset empty;
    CHECK_THROWS_AS(train(empty, toy_config(10)), std::runtime_error);
}

TEST_CASE("evaluate on the ground-truth cloud is quantization-limited") {
    SynthParams p;
    p.shape = SynthShape::Plane;
    p.n_views = 6;
    p.resolution = 32;
    p.samples_u = 16;
    p.samples_v = 16;
    p.seed = 31;
    const SynthResult synth = synth_scene(temp_dir("eval_self"), p);

    std::vector<int> views;
    for (int i = 0; i < 6; ++i) views.push_back(i);
    const EvalResult eval =
        evaluate(synth.ground_truth, synth.dataset, views, Vec3::Zero());
    // Images differ from the render only by 8-bit quantization.
    CHECK(eval.mean_psnr > 45.0);
    CHECK(eval.mean_ssim > 0.99);
    CHECK(eval.mean_depth_mse < 1e-4);
}

TEST_CASE("evaluate improves after training versus initialization") {
    SynthParams p;
    p.shape = SynthShape::Plane;
    p.n_views = 10;
    p.resolution = 32;
    p.samples_u = 14;
    p.samples_v = 14;
    p.seed = 33;
    const SynthResult synth = synth_scene(temp_dir("eval_improve"), p);
    const SceneDataset& ds = synth.dataset;

    const PointCloud pc = read_pointcloud_ply(ds.pointcloud_path);
    const GaussianCloud init = init_from_pointcloud(pc);

    TrainConfig cfg = toy_config(200);
    const TrainResult trained = train(ds, cfg);

    const SplitResult split = split_8_1(ds);
    const EvalResult before = evaluate(init, ds, split.train, Vec3::Zero());
    const EvalResult after = evaluate(trained.cloud, ds, split.train, Vec3::Zero());
    CHECK(after.mean_psnr > before.mean_psnr);
}

TEST_CASE("training log CSV round-trips through the writer") {
    const SceneDataset ds = toy_dataset("train_csv");
    const TrainResult r = train(ds, toy_config(15));
    const std::string path = temp_dir("train_csv_out") + "/log.csv";
    write_training_log_csv(path, r.log);

    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration,l_image,l_dssim,l_depth,l_geo,l_total,n_gaussians,wall_ms");
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 15);
}
