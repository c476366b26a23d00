#pragma once

// Shared scene builders and the total-loss finite-difference harness used by
// the rasterizer tests and the acceptance suite.

#include "pancake/losses.hpp"
#include "pancake/normal_field.hpp"
#include "pancake/rasterizer.hpp"
#include "pancake/rng.hpp"
#include "pancake/trainer.hpp"

#include <cmath>
#include <vector>

namespace pancake::testfix {

inline Camera make_camera(int w, int h) {
    Camera cam;
    cam.fx = 1.25 * w;
    cam.fy = 1.25 * w;
    cam.cx = w * 0.5;
    cam.cy = h * 0.5;
    cam.width = w;
    cam.height = h;
    return cam;
}

// A scene safe for central finite differences at h = 1e-4: depths separated
// well beyond the probe, opacities away from the 0.99 clamp, colors away
// from the clamp at zero, splats a few pixels wide and inside the image.
inline GaussianCloud make_random_scene(std::uint64_t seed, int n, int degree, int img_w) {
    Rng rng(seed);
    GaussianCloud cloud;
    cloud.resize(static_cast<std::size_t>(n));
    cloud.active_sh_degree = degree;
    cloud.scene_extent = 2.0;

    const double fx = 1.25 * img_w;
    for (int i = 0; i < n; ++i) {
        const double z = 1.6 + 0.03 * i + 0.01 * rng.uniform();
        const double view_half = 0.38 * z * (img_w * 0.5) / fx * 2.0;
        const double x = rng.uniform(-view_half, view_half);
        const double y = rng.uniform(-view_half, view_half);
        cloud.positions[i] = Vec3(x, y, z);

        // 1-3 pixels on screen
        const double px_size = rng.uniform(1.0, 3.0);
        const double base = std::log(px_size * z / fx);
        cloud.raw_scales[i] = Vec3(base + rng.uniform(-0.3, 0.3), base + rng.uniform(-0.3, 0.3),
                                   base + rng.uniform(-1.2, -0.4));
        Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        if (q.norm() < 0.3) q.w += 1.0;
        cloud.raw_rotations[i] = q;
        cloud.raw_opacities[i] = GaussianCloud::logit(rng.uniform(0.35, 0.85));

        // Color ranges keep sh + 0.5 clear of the render-time clamp at zero
        // for every view direction, so probes never cross the kink.
        cloud.sh[i].fill(0.0);
        const int per = (degree + 1) * (degree + 1);
        for (int ch = 0; ch < 3; ++ch) {
            cloud.sh[i][ch * kShCoeffsPerChannel] = rng.uniform(-0.25, 0.85);
            for (int k = 1; k < per; ++k)
                cloud.sh[i][ch * kShCoeffsPerChannel + k] = rng.uniform(-0.04, 0.04);
        }
    }
    return cloud;
}

struct LossFixture {
    Camera camera;
    Image truth_rgb;
    Image truth_depth;
    Image depth_mask;
    NormalField field;
    std::vector<Vec3> frozen_reference;  // nearest normals at the base positions
    std::vector<int> frozen_axes;        // argmin scale axis at the base cloud
    std::vector<char> included;
    LossWeights weights;
    Vec3 background = Vec3(0.05, 0.05, 0.05);
    int iteration = 2000;                // geometric gate open
};

inline LossFixture make_loss_fixture(const GaussianCloud& cloud, std::uint64_t seed,
                                     int img_w, int img_h) {
    LossFixture fx;
    fx.camera = make_camera(img_w, img_h);

    // Truth images come from a jittered clone rendered through the
    // independent reference path.
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    GaussianCloud truth_cloud = cloud;
    for (std::size_t i = 0; i < truth_cloud.size(); ++i) {
        truth_cloud.positions[i] += 0.02 * Vec3(rng.normal(), rng.normal(), rng.normal());
        truth_cloud.raw_scales[i] += 0.05 * Vec3(rng.normal(), rng.normal(), rng.normal());
    }
    RenderOutput truth = render_reference(truth_cloud, fx.camera, fx.background);
    fx.truth_rgb = std::move(truth.rgb);
    fx.truth_depth = std::move(truth.depth);
    // Offsets keep the L1 residual sign stable under finite-difference
    // probes (the |.| kink would otherwise bias central differences) and
    // give the Huber term a nonzero operating point.
    for (auto& v : fx.truth_rgb.data) v += 0.18;
    for (auto& v : fx.truth_depth.data)
        if (v > 0.0) v += 0.05;
    fx.depth_mask = depth_validity_mask(fx.truth_depth);

    // Reference normals from a wavy sheet behind the Gaussians.
    std::vector<Vec3> sheet;
    for (int iy = 0; iy < 24; ++iy)
        for (int ix = 0; ix < 24; ++ix) {
            const double sx = -1.6 + 3.2 * ix / 23.0;
            const double sy = -1.6 + 3.2 * iy / 23.0;
            sheet.emplace_back(sx, sy, 2.4 + 0.25 * std::sin(2.0 * sx) * std::cos(1.5 * sy));
        }
    fx.field = estimate_normals(sheet, 10);

    fx.frozen_reference.resize(cloud.size());
    fx.included.assign(cloud.size(), 1);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        fx.frozen_reference[i] = nearest_normal(fx.field, cloud.positions[i]);
    const NormalsPass pass = render_normals_pass(cloud);
    fx.frozen_axes = pass.min_axes;
    return fx;
}

// L_total with all four terms, evaluated the way a training iteration does,
// with the reference normals and axis selections frozen to the base cloud.
inline double eval_total_loss(const GaussianCloud& cloud, const LossFixture& fx) {
    const RenderOutput out = render(cloud, fx.camera, fx.background);
    const ImageLoss l1 = l1_image(out.rgb, fx.truth_rgb);
    const ImageLoss ds = d_ssim(out.rgb, fx.truth_rgb);
    const DepthLoss dh = depth_huber(fx.truth_depth, out.depth, fx.depth_mask, fx.weights.delta);

    std::vector<Vec3> normals(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
        normals[i] = cloud.rotation(i).col(fx.frozen_axes[i]);
    const GeoLoss geo = geometric_cosine(normals, fx.frozen_reference, fx.included);

    const LossBreakdown b =
        total_loss(l1.value, ds.value, dh.value, geo.value, fx.weights, fx.iteration);
    return b.l_total;
}

// Analytic gradient of the same quantity.
inline ParamGradients analytic_total_gradients(const GaussianCloud& cloud,
                                               const LossFixture& fx) {
    const RenderOutput out = render(cloud, fx.camera, fx.background);
    const ImageLoss l1 = l1_image(out.rgb, fx.truth_rgb);
    const ImageLoss ds = d_ssim(out.rgb, fx.truth_rgb);
    const DepthLoss dh = depth_huber(fx.truth_depth, out.depth, fx.depth_mask, fx.weights.delta);

    Image d_rgb(out.rgb.height, out.rgb.width, 3);
    for (std::size_t i = 0; i < d_rgb.size(); ++i)
        d_rgb.data[i] = (1.0 - fx.weights.lambda1) * l1.grad.data[i] +
                        fx.weights.lambda1 * ds.grad.data[i];
    Image d_depth(out.depth.height, out.depth.width, 1);
    for (std::size_t i = 0; i < d_depth.size(); ++i)
        d_depth.data[i] = fx.weights.lambda2 * dh.grad.data[i];

    ParamGradients grads = backward(cloud, fx.camera, out, d_rgb, d_depth);

    NormalsPass pass;
    pass.min_axes = fx.frozen_axes;
    pass.normals.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
        pass.normals[i] = cloud.rotation(i).col(fx.frozen_axes[i]);
    GeoLoss geo = geometric_cosine(pass.normals, fx.frozen_reference, fx.included);
    for (auto& g : geo.d_gaussian_normals) g *= fx.weights.lambda3;
    normals_backward(cloud, pass, geo.d_gaussian_normals, grads);
    return grads;
}

struct FdReport {
    int checked = 0;
    int failed = 0;
    double worst_rel = 0.0;
    double worst_abs = 0.0;
};

// Central differences (h = 1e-4) against the analytic gradient for every raw
// parameter. rel < rel_tol, or abs < abs_tol when the analytic magnitude is
// below small_grad.
inline FdReport check_gradients_fd(GaussianCloud cloud, const LossFixture& fx,
                                   double h = 1e-4, double rel_tol = 1e-3,
                                   double abs_tol = 1e-6, double small_grad = 1e-4) {
    const ParamGradients an = analytic_total_gradients(cloud, fx);
    FdReport rep;

    auto probe = [&](double* p, double analytic) {
        const double keep = *p;
        *p = keep + h;
        const double up = eval_total_loss(cloud, fx);
        *p = keep - h;
        const double dn = eval_total_loss(cloud, fx);
        *p = keep;
        const double fd = (up - dn) / (2.0 * h);
        const double abs_err = std::abs(fd - analytic);
        const double rel_err = abs_err / std::max(std::abs(fd), std::abs(analytic));
        ++rep.checked;
        bool ok;
        if (std::abs(analytic) < small_grad) {
            ok = abs_err < abs_tol ||
                 (std::abs(fd) > 0 && rel_err < rel_tol);
            rep.worst_abs = std::max(rep.worst_abs, abs_err);
        } else {
            ok = rel_err < rel_tol;
            rep.worst_rel = std::max(rep.worst_rel, rel_err);
        }
        if (!ok) ++rep.failed;
    };

    const int per = (cloud.active_sh_degree + 1) * (cloud.active_sh_degree + 1);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) probe(&cloud.positions[i](k), an.d_position[i](k));
        for (int k = 0; k < 3; ++k) probe(&cloud.raw_scales[i](k), an.d_raw_scale[i](k));
        probe(&cloud.raw_rotations[i].w, an.d_raw_rotation[i].w);
        probe(&cloud.raw_rotations[i].x, an.d_raw_rotation[i].x);
        probe(&cloud.raw_rotations[i].y, an.d_raw_rotation[i].y);
        probe(&cloud.raw_rotations[i].z, an.d_raw_rotation[i].z);
        probe(&cloud.raw_opacities[i], an.d_raw_opacity[i]);
        for (int ch = 0; ch < 3; ++ch)
            for (int k = 0; k < per; ++k)
                probe(&cloud.sh[i][ch * kShCoeffsPerChannel + k],
                      an.d_sh[i][ch * kShCoeffsPerChannel + k]);
    }
    return rep;
}

} // namespace pancake::testfix
