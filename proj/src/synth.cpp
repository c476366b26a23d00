#include "pancake/dataset.hpp"

#include "pancake/rasterizer.hpp"
#include "pancake/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace pancake {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

Quat quat_from_matrix(const Mat3& r) {
    Quat q;
    const double tr = r.trace();
    if (tr > 0.0) {
        const double s = std::sqrt(tr + 1.0) * 2.0;
        q.w = 0.25 * s;
        q.x = (r(2, 1) - r(1, 2)) / s;
        q.y = (r(0, 2) - r(2, 0)) / s;
        q.z = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        const double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q.w = (r(2, 1) - r(1, 2)) / s;
        q.x = 0.25 * s;
        q.y = (r(0, 1) + r(1, 0)) / s;
        q.z = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        const double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q.w = (r(0, 2) - r(2, 0)) / s;
        q.x = (r(0, 1) + r(1, 0)) / s;
        q.y = 0.25 * s;
        q.z = (r(1, 2) + r(2, 1)) / s;
    } else {
        const double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q.w = (r(1, 0) - r(0, 1)) / s;
        q.x = (r(0, 2) + r(2, 0)) / s;
        q.y = (r(1, 2) + r(2, 1)) / s;
        q.z = 0.25 * s;
    }
    return q;
}

// Planar centerline keeps the tube's rotation-minimizing frame closed-form,
// which makes the radial direction the exact surface normal.
struct TubeFrame {
    Vec3 center;
    Vec3 tangent;
    Vec3 inplane;  // xz-plane normal of the centerline
};

TubeFrame tube_frame(const SynthShapeInfo& s, double u) {
    TubeFrame f;
    f.center = Vec3(s.tube_amp * std::sin(kTau * u), 0.0, s.tube_length * u);
    Vec3 d(s.tube_amp * kTau * std::cos(kTau * u), 0.0, s.tube_length);
    f.tangent = d.normalized();
    f.inplane = Vec3(f.tangent.z(), 0.0, -f.tangent.x());
    return f;
}

Vec3 tube_point(const SynthShapeInfo& s, double u, double theta, Vec3* normal) {
    const TubeFrame f = tube_frame(s, u);
    const Vec3 radial = f.inplane * std::cos(theta) + Vec3::UnitY() * std::sin(theta);
    if (normal) *normal = radial;
    return f.center + s.tube_radius * radial;
}

// Flesh-toned procedural texture; smooth so densification has gradients to
// chase without aliasing against the splat footprint.
Vec3 surface_color(SynthShape shape, double u, double v) {
    const double band = 0.5 + 0.5 * std::sin(kTau * (5.0 * u + 0.3 * std::sin(kTau * v)));
    const double spot = 0.5 + 0.5 * std::sin(kTau * 2.0 * v + 1.7) * std::cos(kTau * 3.0 * u);
    const double vein = 0.5 + 0.5 * std::sin(kTau * (8.0 * u - 2.0 * v) + 0.9);
    Vec3 base = shape == SynthShape::Tube ? Vec3(0.72, 0.42, 0.36) : Vec3(0.55, 0.55, 0.62);
    Vec3 c = base + Vec3(0.16 * band - 0.08, 0.10 * spot - 0.05, 0.12 * vein - 0.06);
    return c.cwiseMax(0.05).cwiseMin(0.95);
}

std::string frame_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04d.png", i);
    return buf;
}

} // namespace

Vec3 synth_surface_normal(const SynthShapeInfo& info, const Vec3& p) {
    switch (info.shape) {
        case SynthShape::Plane:
            return Vec3::UnitZ();
        case SynthShape::Sphere: {
            const double n = p.norm();
            return n > 1e-12 ? Vec3(p / n) : Vec3::UnitZ();
        }
        case SynthShape::Tube: {
            // Nearest centerline parameter by coarse scan plus refinement.
            double best_u = 0.0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int i = 0; i <= 400; ++i) {
                const double u = -0.1 + 1.2 * i / 400.0;
                const double d = (p - tube_frame(info, u).center).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best_u = u;
                }
            }
            double lo = best_u - 0.01, hi = best_u + 0.01;
            for (int it = 0; it < 60; ++it) {
                const double m1 = lo + (hi - lo) / 3.0;
                const double m2 = hi - (hi - lo) / 3.0;
                const double d1 = (p - tube_frame(info, m1).center).squaredNorm();
                const double d2 = (p - tube_frame(info, m2).center).squaredNorm();
                if (d1 < d2) hi = m2;
                else lo = m1;
            }
            const double u = 0.5 * (lo + hi);
            const Vec3 radial = p - tube_frame(info, u).center;
            const double n = radial.norm();
            return n > 1e-12 ? Vec3(radial / n) : Vec3::UnitY();
        }
    }
    return Vec3::UnitZ();
}

std::optional<SynthShapeInfo> load_scene_info(const std::string& root) {
    const fs::path path = fs::path(root) / "scene.json";
    if (!fs::exists(path)) return std::nullopt;
    std::ifstream in(path);
    json j;
    in >> j;
    SynthShapeInfo info;
    const std::string shape = j.value("shape", "tube");
    if (shape == "tube") info.shape = SynthShape::Tube;
    else if (shape == "sphere") info.shape = SynthShape::Sphere;
    else info.shape = SynthShape::Plane;
    info.tube_length = j.value("tube_length", info.tube_length);
    info.tube_radius = j.value("tube_radius", info.tube_radius);
    info.tube_amp = j.value("tube_amp", info.tube_amp);
    info.sphere_radius = j.value("sphere_radius", info.sphere_radius);
    return info;
}

SynthResult synth_scene(const std::string& out_root, const SynthParams& params) {
    if (params.n_views < 2) throw std::invalid_argument("synth_scene needs at least 2 views");
    Rng rng(params.seed);

    SynthShapeInfo info;
    info.shape = params.shape;

    // --- Ground-truth pancaked cloud on the surface -------------------------
    GaussianCloud gt;
    PointCloud pc;
    const int nu = params.samples_u, nv = params.samples_v;
    gt.resize(static_cast<std::size_t>(nu) * nv);
    gt.active_sh_degree = 0;

    std::size_t at = 0;
    for (int iu = 0; iu < nu; ++iu) {
        for (int iv = 0; iv < nv; ++iv) {
            // Stratified jitter inside each grid cell.
            const double ju = rng.uniform(0.15, 0.85);
            const double jv = rng.uniform(0.15, 0.85);
            const double u = (iu + ju) / nu;
            const double v = (iv + jv) / nv;

            Vec3 pos, normal, tan_u, tan_v;
            double su, sv;
            switch (params.shape) {
                case SynthShape::Tube: {
                    const double theta = kTau * v;
                    pos = tube_point(info, u, theta, &normal);
                    const TubeFrame f = tube_frame(info, u);
                    tan_u = f.tangent;
                    tan_v = -f.inplane * std::sin(theta) + Vec3::UnitY() * std::cos(theta);
                    su = 0.7 * std::hypot(info.tube_amp * kTau, info.tube_length) / nu;
                    sv = 0.7 * kTau * info.tube_radius / nv;
                    break;
                }
                case SynthShape::Sphere: {
                    const double phi = std::acos(std::clamp(1.0 - 2.0 * u, -1.0, 1.0));
                    const double theta = kTau * v;
                    normal = Vec3(std::sin(phi) * std::cos(theta), std::sin(phi) * std::sin(theta),
                                  std::cos(phi));
                    pos = info.sphere_radius * normal;
                    tan_u = Vec3(std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta),
                                 -std::sin(phi));
                    tan_v = normal.cross(tan_u).normalized();
                    su = 0.7 * std::numbers::pi * info.sphere_radius / nu;
                    sv = 0.7 * kTau * info.sphere_radius * std::max(std::sin(phi), 0.2) / nv;
                    break;
                }
                case SynthShape::Plane: {
                    pos = Vec3(2.0 * u - 1.0, 2.0 * v - 1.0, 0.0);
                    normal = Vec3::UnitZ();
                    tan_u = Vec3::UnitX();
                    tan_v = Vec3::UnitY();
                    su = 0.7 * 2.0 / nu;
                    sv = 0.7 * 2.0 / nv;
                    break;
                }
            }

            Mat3 rot;
            rot.col(0) = tan_u;
            rot.col(1) = tan_v;
            rot.col(2) = normal;
            if (rot.determinant() < 0.0) rot.col(1) = -rot.col(1);

            const double sn = 0.15 * std::min(su, sv);
            gt.positions[at] = pos;
            gt.raw_scales[at] = Vec3(std::log(su), std::log(sv), std::log(sn));
            gt.raw_rotations[at] = quat_from_matrix(rot);
            const Vec3 color = surface_color(params.shape, u, v);
            gt.sh[at].fill(0.0);
            for (int ch = 0; ch < 3; ++ch)
                gt.sh[at][ch * kShCoeffsPerChannel] = (color(ch) - 0.5) / kSh0;
            gt.raw_opacities[at] = GaussianCloud::logit(0.85);

            pc.points.push_back(pos);
            pc.colors.push_back(color);
            ++at;
        }
    }
    gt.scene_extent = compute_extent(gt.positions);

    // --- Camera path ---------------------------------------------------------
    const int res = params.resolution;
    const double focal = 0.55 * res;
    std::vector<Camera> true_cams;
    bool any_distinct = false;
    for (int k = 0; k < params.n_views; ++k) {
        const double a = params.n_views > 1 ? static_cast<double>(k) / (params.n_views - 1) : 0.0;
        Camera cam;
        switch (params.shape) {
            case SynthShape::Tube: {
                const double u = 0.06 + 0.60 * a;
                const TubeFrame f = tube_frame(info, u);
                const double wob = 0.18 * info.tube_radius;
                const Vec3 eye = f.center + f.inplane * (wob * std::sin(5.0 * kTau * a)) +
                                 Vec3::UnitY() * (wob * std::cos(4.0 * kTau * a));
                const TubeFrame f2 = tube_frame(info, u + 0.10);
                const Vec3 target = f2.center + f2.inplane * (0.1 * wob * std::cos(3.0 * kTau * a));
                const Vec3 up = (Vec3::UnitY() + 0.12 * std::sin(2.0 * kTau * a) * f.inplane).normalized();
                cam = look_at_camera(eye, target, up, focal, focal, res, res);
                break;
            }
            case SynthShape::Sphere: {
                const double az = kTau * a;
                const double el = 0.5 * std::sin(2.0 * az);
                const Vec3 eye = 3.0 * Vec3(std::cos(az) * std::cos(el), std::sin(az) * std::cos(el),
                                            std::sin(el));
                cam = look_at_camera(eye, Vec3::Zero(), Vec3::UnitZ(), focal, focal, res, res);
                break;
            }
            case SynthShape::Plane: {
                const Vec3 eye(0.8 * std::cos(kTau * a), 0.8 * std::sin(kTau * a), 2.2);
                const Vec3 target(0.25 * std::sin(kTau * a), 0.0, 0.0);
                cam = look_at_camera(eye, target, Vec3::UnitY(), focal, focal, res, res);
                break;
            }
        }
        if (!true_cams.empty() &&
            ((cam.center() - true_cams.front().center()).norm() > 1e-9 ||
             (cam.rotation - true_cams.front().rotation).norm() > 1e-9))
            any_distinct = true;
        true_cams.push_back(cam);
    }
    if (!any_distinct) throw std::invalid_argument("synth_scene: degenerate camera path");

    // --- Render, perturb, write ----------------------------------------------
    const fs::path root(out_root);
    fs::create_directories(root / "images");
    fs::create_directories(root / "depths");

    std::vector<Image> rgbs(true_cams.size()), depths(true_cams.size());
    double max_depth = 0.0;
    for (std::size_t k = 0; k < true_cams.size(); ++k) {
        RenderOutput out = render_reference(gt, true_cams[k], Vec3::Zero());
        rgbs[k] = std::move(out.rgb);
        depths[k] = std::move(out.depth);
        for (double d : depths[k].data) max_depth = std::max(max_depth, d);
    }
    const double depth_scale = max_depth > 0.0 ? max_depth / 65000.0 : 1.0 / 65000.0;

    const double sigma_r = params.noise_rot_deg * std::numbers::pi / 180.0;
    const double sigma_t = params.noise_trans_rel * gt.scene_extent;

    SceneDataset ds;
    ds.root = out_root;
    for (std::size_t k = 0; k < true_cams.size(); ++k) {
        // Depth noise is multiplicative, over valid pixels only.
        if (params.noise_depth > 0.0) {
            for (double& d : depths[k].data)
                if (d > 0.0) d = std::max(0.0, d * (1.0 + rng.normal(0.0, params.noise_depth)));
        }

        Camera stored = true_cams[k];
        if (sigma_r > 0.0 || sigma_t > 0.0) {
            const double angle = rng.normal(0.0, sigma_r);
            Vec3 axis(rng.normal(), rng.normal(), rng.normal());
            if (axis.norm() < 1e-12) axis = Vec3::UnitZ();
            axis.normalize();
            const Mat3 dr = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
            const Vec3 dc(rng.normal(0.0, sigma_t), rng.normal(0.0, sigma_t),
                          rng.normal(0.0, sigma_t));
            const Vec3 center = stored.center() + dc;
            stored.rotation = dr * stored.rotation;
            stored.translation = -stored.rotation * center;
        }

        FrameRef frame;
        frame.file = frame_name(static_cast<int>(k));
        frame.camera = stored;
        frame.image_path = (root / "images" / frame.file).string();
        frame.depth_path = (root / "depths" / frame.file).string();
        frame.depth_scale = depth_scale;

        write_png_rgb8(frame.image_path, rgbs[k]);
        write_png_gray16(frame.depth_path, depths[k], depth_scale);
        ds.frames.push_back(std::move(frame));
    }

    ds.pointcloud_path = (root / "pointcloud.ply").string();
    write_pointcloud_ply(ds.pointcloud_path, pc);
    write_cameras_json(out_root, ds.frames);
    save_checkpoint_ply((root / "gt_cloud.ply").string(), gt);

    json scene;
    scene["shape"] = params.shape == SynthShape::Tube
                         ? "tube"
                         : (params.shape == SynthShape::Sphere ? "sphere" : "plane");
    scene["tube_length"] = info.tube_length;
    scene["tube_radius"] = info.tube_radius;
    scene["tube_amp"] = info.tube_amp;
    scene["sphere_radius"] = info.sphere_radius;
    scene["seed"] = params.seed;
    {
        std::ofstream out(root / "scene.json");
        out << scene.dump(2) << "\n";
    }

    SynthResult result;
    result.dataset = std::move(ds);
    result.ground_truth = std::move(gt);
    result.shape = info;
    return result;
}

} // namespace pancake
