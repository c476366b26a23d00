#include "pancake/trainer.hpp"

#include "pancake/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace fs = std::filesystem;

namespace pancake {

static_assert(sizeof(Vec3) == 3 * sizeof(double));
static_assert(sizeof(Quat) == 4 * sizeof(double));

void TrainConfig::validate() const {
    weights.validate();
    if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (geo_loss_start >= iterations)
        throw std::invalid_argument("geo_loss_start must be < iterations");
    if (densify_until > iterations)
        throw std::invalid_argument("densify_until must be <= iterations");
    if (densify_interval < 1) throw std::invalid_argument("densify_interval must be >= 1");
    if (sh_degree_interval < 1) throw std::invalid_argument("sh_degree_interval must be >= 1");
    if (normal_knn < 3) throw std::invalid_argument("normal_knn must be >= 3");
}

double TrainConfig::position_lr_at(int iteration) const {
    const double f = static_cast<double>(iteration) / iterations;
    return lr_position * std::pow(lr_position_final / lr_position, f);
}

void adam_step(AdamGroup& state, std::span<double> params, std::span<const double> grads,
               double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step size mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        if (!std::isfinite(g))
            throw std::runtime_error("non-finite gradient at parameter index " +
                                     std::to_string(i));
        state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g;
        state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g * g;
        const double mh = state.m[i] / bc1;
        const double vh = state.v[i] / bc2;
        params[i] -= lr * mh / (std::sqrt(vh) + kAdamEps);
    }
}

void AdamState::init(std::size_t n) {
    position.init(3 * n);
    scale.init(3 * n);
    rotation.init(4 * n);
    sh.init(kShStride * n);
    opacity.init(n);
}

namespace {

void remap_group(AdamGroup& g, const std::vector<std::int64_t>& source, std::size_t width) {
    std::vector<double> m(source.size() * width, 0.0), v(source.size() * width, 0.0);
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (source[i] < 0) continue;
        const std::size_t src = static_cast<std::size_t>(source[i]) * width;
        for (std::size_t k = 0; k < width; ++k) {
            m[i * width + k] = g.m[src + k];
            v[i * width + k] = g.v[src + k];
        }
    }
    g.m = std::move(m);
    g.v = std::move(v);
}

} // namespace

void AdamState::remap(const std::vector<std::int64_t>& source) {
    remap_group(position, source, 3);
    remap_group(scale, source, 3);
    remap_group(rotation, source, 4);
    remap_group(sh, source, kShStride);
    remap_group(opacity, source, 1);
}

namespace {

std::span<double> as_span(std::vector<Vec3>& v) {
    return {v.empty() ? nullptr : v[0].data(), v.size() * 3};
}
std::span<const double> as_span(const std::vector<Vec3>& v) {
    return {v.empty() ? nullptr : v[0].data(), v.size() * 3};
}
std::span<double> as_span(std::vector<Quat>& v) {
    return {v.empty() ? nullptr : &v[0].w, v.size() * 4};
}
std::span<const double> as_span(const std::vector<Quat>& v) {
    return {v.empty() ? nullptr : &v[0].w, v.size() * 4};
}
std::span<double> as_span(std::vector<std::array<double, kShStride>>& v) {
    return {v.empty() ? nullptr : v[0].data(), v.size() * kShStride};
}
std::span<const double> as_span(const std::vector<std::array<double, kShStride>>& v) {
    return {v.empty() ? nullptr : v[0].data(), v.size() * kShStride};
}

struct LoadedView {
    Image image;
    Image depth;   // empty when absent
    Image mask;    // validity of the reference depth
    const FrameRef* frame = nullptr;
};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

TrainResult train(const SceneDataset& dataset, const TrainConfig& config,
                  const std::string& checkpoint_dir) {
    config.validate();
    if (dataset.frames.empty()) throw std::runtime_error("train: dataset has no frames");
    if (dataset.pointcloud_path.empty())
        throw std::runtime_error("train: dataset has no pointcloud.ply");

    const SplitResult split = split_8_1(dataset);
    if (split.train.size() < 2)
        throw std::runtime_error("train: need at least 2 training views");

    std::vector<LoadedView> views(split.train.size());
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        const FrameRef& frame = dataset.frames[split.train[i]];
        views[i].frame = &frame;
        views[i].image = load_frame_image(frame);
        if (config.depth_on) {
            if (!frame.has_depth())
                throw std::runtime_error("train: depth supervision enabled but frame '" +
                                         frame.file + "' has no depth map");
            views[i].depth = load_frame_depth(frame);
            views[i].mask = depth_validity_mask(views[i].depth);
        }
    }

    const PointCloud pc = read_pointcloud_ply(dataset.pointcloud_path);
    GaussianCloud cloud = init_from_pointcloud(pc);

    NormalField field;
    if (config.geo_on) field = estimate_normals(pc.points, config.normal_knn);

    AdamState adam;
    adam.init(cloud.size());
    Rng rng(config.seed);

    // Epoch-cycled shuffled view order.
    std::vector<std::size_t> order(views.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::size_t order_pos = 0;

    TrainResult result;
    result.log.reserve(config.iterations);

    for (int iter = 1; iter <= config.iterations; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();

        if (order_pos == order.size()) {
            rng.shuffle(order);
            order_pos = 0;
        }
        LoadedView& view = views[order[order_pos++]];
        const Camera& camera = view.frame->camera;

        RenderOutput out = render(cloud, camera, config.background);

        const ImageLoss l1 = l1_image(out.rgb, view.image);
        const ImageLoss dssim = d_ssim(out.rgb, view.image);

        Image dL_drgb(out.rgb.height, out.rgb.width, 3);
        for (std::size_t i = 0; i < dL_drgb.size(); ++i)
            dL_drgb.data[i] = (1.0 - config.weights.lambda1) * l1.grad.data[i] +
                              config.weights.lambda1 * dssim.grad.data[i];

        double l_depth = 0.0;
        Image dL_ddepth(out.depth.height, out.depth.width, 1);
        if (config.depth_on) {
            DepthLoss dl = depth_huber(view.depth, out.depth, view.mask, config.weights.delta);
            l_depth = dl.value;
            for (std::size_t i = 0; i < dL_ddepth.size(); ++i)
                dL_ddepth.data[i] = config.weights.lambda2 * dl.grad.data[i];
        }

        ParamGradients grads = backward(cloud, camera, out, dL_drgb, dL_ddepth);

        double l_geo = 0.0;
        const bool geo_active = config.geo_on && iter > config.geo_loss_start;
        if (geo_active) {
            const NormalsPass pass = render_normals_pass(cloud);
            std::vector<Vec3> reference(cloud.size());
            std::vector<char> included(cloud.size(), 1);
            parallel_for(0, cloud.size(), [&](std::size_t i) {
                reference[i] = nearest_normal(field, cloud.positions[i]);
            });
            GeoLoss geo = geometric_cosine(pass.normals, reference, included);
            l_geo = geo.value;
            for (auto& g : geo.d_gaussian_normals) g *= config.weights.lambda3;
            normals_backward(cloud, pass, geo.d_gaussian_normals, grads);
        }

        const LossBreakdown breakdown =
            total_loss(l1.value, dssim.value, config.depth_on ? l_depth : 0.0,
                       config.geo_on ? l_geo : 0.0, config.weights, iter,
                       config.geo_loss_start);

        try {
            adam_step(adam.position, as_span(cloud.positions), as_span(grads.d_position),
                      config.position_lr_at(iter));
            adam_step(adam.scale, as_span(cloud.raw_scales), as_span(grads.d_raw_scale),
                      config.lr_scale);
            adam_step(adam.rotation, as_span(cloud.raw_rotations),
                      as_span(grads.d_raw_rotation), config.lr_rotation);
            adam_step(adam.sh, as_span(cloud.sh), as_span(grads.d_sh), config.lr_sh);
            adam_step(adam.opacity, std::span<double>(cloud.raw_opacities),
                      std::span<const double>(grads.d_raw_opacity), config.lr_opacity);
        } catch (const std::exception& e) {
            throw std::runtime_error("iteration " + std::to_string(iter) + ": " + e.what());
        }

        if (iter <= config.densify_until) {
            cloud.accumulate_grad_stats(grads.screen_grad_norm, grads.visible);
            if (iter % config.densify_interval == 0) {
                const DensifyStats stats = cloud.densify_and_prune(config.densify, rng);
                adam.remap(stats.moment_source);
                if (stats.changed()) result.densify_iterations.push_back(iter);
            }
        }

        if (iter % config.sh_degree_interval == 0 && cloud.active_sh_degree < kShMaxDegree)
            cloud.active_sh_degree += 1;

        if (!checkpoint_dir.empty() && config.checkpoint_interval > 0 &&
            iter % config.checkpoint_interval == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_%06d.ply", iter);
            save_checkpoint_ply((fs::path(checkpoint_dir) / name).string(), cloud);
        }

        const auto t1 = std::chrono::steady_clock::now();
        LogRow row;
        row.iteration = iter;
        row.losses = breakdown;
        row.n_gaussians = static_cast<int>(cloud.size());
        row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        result.log.push_back(row);
    }

    if (!cloud.all_finite())
        throw std::runtime_error("train: non-finite parameters after optimization");
    result.cloud = std::move(cloud);
    return result;
}

EvalResult evaluate(const GaussianCloud& cloud, const SceneDataset& dataset,
                    const std::vector<int>& view_indices, const Vec3& background,
                    bool measure_fps) {
    EvalResult eval;
    double sum_psnr = 0.0, sum_ssim = 0.0, sum_dmse = 0.0, sum_dssim = 0.0;
    int n_psnr = 0, n_depth = 0;

    for (int idx : view_indices) {
        const FrameRef& frame = dataset.frames[idx];
        const Image truth = load_frame_image(frame);

        const auto t0 = std::chrono::steady_clock::now();
        RenderOutput out = render(cloud, frame.camera, background);
        const auto t1 = std::chrono::steady_clock::now();

        Image rendered = out.rgb;
        for (auto& v : rendered.data) v = std::clamp(v, 0.0, 1.0);

        MetricRow row;
        row.view_id = frame.file;
        row.psnr = psnr(rendered, truth);
        row.ssim = ssim(rendered, truth);
        row.render_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        if (frame.has_depth()) {
            const Image depth_ref = load_frame_depth(frame);
            const Image mask = depth_validity_mask(depth_ref);
            row.depth_mse = depth_mse(depth_ref, out.depth, mask);
            sum_dmse += row.depth_mse.value;
            sum_dssim += depth_ssim(depth_ref, out.depth, mask);
            ++n_depth;
        }
        if (!row.psnr.identical) {
            sum_psnr += row.psnr.db;
            ++n_psnr;
        }
        sum_ssim += row.ssim;
        eval.rows.push_back(std::move(row));
    }

    if (n_psnr > 0) eval.mean_psnr = sum_psnr / n_psnr;
    if (!eval.rows.empty()) eval.mean_ssim = sum_ssim / static_cast<double>(eval.rows.size());
    if (n_depth > 0) {
        eval.mean_depth_mse = sum_dmse / n_depth;
        eval.mean_depth_ssim = sum_dssim / n_depth;
    }

    if (measure_fps && !view_indices.empty()) {
        const Camera& cam = dataset.frames[view_indices.front()].camera;
        const double ms = median_render_ms([&] { (void)render(cloud, cam, background); });
        eval.fps = ms > 0.0 ? 1000.0 / ms : 0.0;
    }
    return eval;
}

void write_training_log_csv(const std::string& path, const std::vector<LogRow>& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "iteration,l_image,l_dssim,l_depth,l_geo,l_total,n_gaussians,wall_ms\n";
    for (const auto& r : log) {
        out << r.iteration << ',' << fmt_double(r.losses.l_image) << ','
            << fmt_double(r.losses.l_dssim) << ',' << fmt_double(r.losses.l_depth) << ','
            << fmt_double(r.losses.l_geo) << ',' << fmt_double(r.losses.l_total) << ','
            << r.n_gaussians << ',' << fmt_double(r.wall_ms) << '\n';
    }
}

void write_eval_csv(const std::string& path, const EvalResult& eval) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "view,psnr_db,ssim,depth_mse,render_ms\n";
    for (const auto& r : eval.rows) {
        out << r.view_id << ','
            << (r.psnr.identical ? std::string("inf") : fmt_double(r.psnr.db)) << ','
            << fmt_double(r.ssim) << ',' << fmt_double(r.depth_mse.value) << ','
            << fmt_double(r.render_ms) << '\n';
    }
}

double mean_normal_deviation_deg(const GaussianCloud& cloud, const SynthShapeInfo& shape) {
    if (cloud.size() == 0) return 0.0;
    std::vector<double> dev(cloud.size());
    parallel_for(0, cloud.size(), [&](std::size_t i) {
        const Vec3 n = gaussian_normal(cloud.rotation(i), cloud.scale(i));
        const Vec3 a = synth_surface_normal(shape, cloud.positions[i]);
        const double c = std::clamp(std::abs(n.dot(a)), 0.0, 1.0);
        dev[i] = std::acos(c) * 180.0 / std::numbers::pi;
    });
    double sum = 0.0;
    for (double d : dev) sum += d;
    return sum / static_cast<double>(cloud.size());
}

std::vector<AblationRow> run_ablation(const SceneDataset& dataset, const TrainConfig& base) {
    struct Variant {
        const char* name;
        bool depth_on;
        bool geo_on;
    };
    const Variant variants[] = {
        {"GS", false, false},
        {"GS+Depth", true, false},
        {"GS+Pancaking", false, true},
        {"GS+Pancaking+Depth", true, true},
    };

    const SplitResult split = split_8_1(dataset);
    const std::vector<int>& eval_views = split.test.empty() ? split.train : split.test;
    const auto shape = load_scene_info(dataset.root);

    std::vector<AblationRow> rows;
    for (const Variant& v : variants) {
        TrainConfig cfg = base;
        cfg.depth_on = v.depth_on;
        cfg.geo_on = v.geo_on;

        const auto t0 = std::chrono::steady_clock::now();
        TrainResult tr = train(dataset, cfg);
        const auto t1 = std::chrono::steady_clock::now();

        const EvalResult eval = evaluate(tr.cloud, dataset, eval_views, base.background);

        AblationRow row;
        row.variant = v.name;
        row.depth_on = v.depth_on;
        row.geo_on = v.geo_on;
        row.psnr = eval.mean_psnr;
        row.ssim = eval.mean_ssim;
        row.depth_ssim = eval.mean_depth_ssim;
        row.depth_mse = eval.mean_depth_mse;
        row.n_gaussians = static_cast<int>(tr.cloud.size());
        row.wall_minutes = std::chrono::duration<double>(t1 - t0).count() / 60.0;
        if (shape) row.normal_dev_deg = mean_normal_deviation_deg(tr.cloud, *shape);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "variant,psnr_db,ssim,depth_ssim,depth_mse,normal_dev_deg,n_gaussians\n";
    for (const auto& r : rows) {
        out << r.variant << ',' << fmt_double(r.psnr) << ',' << fmt_double(r.ssim) << ','
            << fmt_double(r.depth_ssim) << ',' << fmt_double(r.depth_mse) << ','
            << fmt_double(r.normal_dev_deg) << ',' << r.n_gaussians << '\n';
    }
}

void write_ablation_timings_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "variant,wall_minutes\n";
    for (const auto& r : rows)
        out << r.variant << ',' << fmt_double(r.wall_minutes) << '\n';
}

} // namespace pancake
