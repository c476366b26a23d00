#include "pancake/cloud.hpp"

#include "pancake/camera.hpp"
#include "pancake/ply.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pancake {

void Camera::validate(const std::string& context) const {
    auto bad = [&](const std::string& field) {
        throw std::invalid_argument("camera " + context + ": invalid " + field);
    };
    if (!(fx > 0.0) || !std::isfinite(fx)) bad("fx");
    if (!(fy > 0.0) || !std::isfinite(fy)) bad("fy");
    if (width <= 0) bad("width");
    if (height <= 0) bad("height");
    if (!(cx > 0.0 && cx < width)) bad("cx");
    if (!(cy > 0.0 && cy < height)) bad("cy");
    const Mat3 should_be_i = rotation * rotation.transpose();
    if ((should_be_i - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) bad("rotation");
    if (!translation.allFinite()) bad("translation");
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                      double fx, double fy, int width, int height) {
    Vec3 fwd = (target - eye).normalized();
    Vec3 right = fwd.cross(up).normalized();
    Vec3 down = fwd.cross(right);
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = width * 0.5;
    cam.cy = height * 0.5;
    cam.width = width;
    cam.height = height;
    cam.rotation.row(0) = right;
    cam.rotation.row(1) = down;
    cam.rotation.row(2) = fwd;
    cam.translation = -cam.rotation * eye;
    return cam;
}

PointCloud read_pointcloud_ply(const std::string& path) {
    const PlyData ply = read_ply(path);
    PointCloud pc;
    const auto& x = ply.col("x");
    const auto& y = ply.col("y");
    const auto& z = ply.col("z");
    pc.points.resize(ply.count);
    for (std::size_t i = 0; i < ply.count; ++i) pc.points[i] = Vec3(x[i], y[i], z[i]);
    pc.colors.assign(ply.count, Vec3(0.5, 0.5, 0.5));
    if (ply.has("red") && ply.has("green") && ply.has("blue")) {
        const auto& r = ply.col("red");
        const auto& g = ply.col("green");
        const auto& b = ply.col("blue");
        for (std::size_t i = 0; i < ply.count; ++i)
            pc.colors[i] = Vec3(r[i] / 255.0, g[i] / 255.0, b[i] / 255.0);
    }
    return pc;
}

void write_pointcloud_ply(const std::string& path, const PointCloud& pc,
                          const std::vector<Vec3>* normals) {
    const std::size_t n = pc.points.size();
    std::vector<double> x(n), y(n), z(n), r(n), g(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = pc.points[i].x();
        y[i] = pc.points[i].y();
        z[i] = pc.points[i].z();
        r[i] = std::clamp(std::round(pc.colors[i].x() * 255.0), 0.0, 255.0);
        g[i] = std::clamp(std::round(pc.colors[i].y() * 255.0), 0.0, 255.0);
        b[i] = std::clamp(std::round(pc.colors[i].z() * 255.0), 0.0, 255.0);
    }
    std::vector<PlyColumn> cols = {
        {"x", PlyType::Float32, &x},   {"y", PlyType::Float32, &y},
        {"z", PlyType::Float32, &z},   {"red", PlyType::Uint8, &r},
        {"green", PlyType::Uint8, &g}, {"blue", PlyType::Uint8, &b},
    };
    std::vector<double> nx, ny, nz;
    if (normals) {
        if (normals->size() != n) throw std::invalid_argument("normal count mismatch");
        nx.resize(n);
        ny.resize(n);
        nz.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            nx[i] = (*normals)[i].x();
            ny[i] = (*normals)[i].y();
            nz[i] = (*normals)[i].z();
        }
        cols.insert(cols.begin() + 3, {{"nx", PlyType::Float32, &nx},
                                       {"ny", PlyType::Float32, &ny},
                                       {"nz", PlyType::Float32, &nz}});
    }
    write_ply(path, n, cols);
}

void GaussianCloud::resize(std::size_t n) {
    positions.resize(n, Vec3::Zero());
    raw_scales.resize(n, Vec3::Zero());
    raw_rotations.resize(n, Quat::identity());
    sh.resize(n);
    raw_opacities.resize(n, 0.0);
    grad_accum.resize(n, 0.0);
    grad_count.resize(n, 0);
}

void GaussianCloud::push_back_copy_of(std::size_t i) {
    positions.push_back(positions[i]);
    raw_scales.push_back(raw_scales[i]);
    raw_rotations.push_back(raw_rotations[i]);
    sh.push_back(sh[i]);
    raw_opacities.push_back(raw_opacities[i]);
    grad_accum.push_back(0.0);
    grad_count.push_back(0);
}

void GaussianCloud::keep(const std::vector<char>& mask) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!mask[i]) continue;
        if (out != i) {
            positions[out] = positions[i];
            raw_scales[out] = raw_scales[i];
            raw_rotations[out] = raw_rotations[i];
            sh[out] = sh[i];
            raw_opacities[out] = raw_opacities[i];
            grad_accum[out] = grad_accum[i];
            grad_count[out] = grad_count[i];
        }
        ++out;
    }
    positions.resize(out);
    raw_scales.resize(out);
    raw_rotations.resize(out);
    sh.resize(out);
    raw_opacities.resize(out);
    grad_accum.resize(out);
    grad_count.resize(out);
}

void GaussianCloud::accumulate_grad_stats(const std::vector<double>& screen_grad_norm,
                                          const std::vector<char>& visible) {
    for (std::size_t i = 0; i < size(); ++i) {
        if (visible[i]) {
            grad_accum[i] += screen_grad_norm[i];
            grad_count[i] += 1;
        }
    }
}

void GaussianCloud::reset_grad_stats() {
    std::fill(grad_accum.begin(), grad_accum.end(), 0.0);
    std::fill(grad_count.begin(), grad_count.end(), 0);
}

DensifyStats GaussianCloud::densify_and_prune(const DensifyConfig& cfg, Rng& rng) {
    DensifyStats stats;
    const std::size_t n = size();
    const double scale_limit = cfg.scale_threshold_rel * scene_extent;
    const double log_split = std::log(cfg.split_factor);

    std::vector<char> keep_mask(n, 1);
    std::vector<std::int64_t> origin(n);
    for (std::size_t i = 0; i < n; ++i) origin[i] = static_cast<std::int64_t>(i);
    for (std::size_t i = 0; i < n; ++i) {
        const double mean_grad = grad_count[i] > 0 ? grad_accum[i] / grad_count[i] : 0.0;
        const double max_scale = scale(i).maxCoeff();
        if (mean_grad > cfg.grad_threshold) {
            if (max_scale < scale_limit) {
                push_back_copy_of(i);
                keep_mask.push_back(1);
                origin.push_back(-1);
                ++stats.cloned;
            } else {
                // Two children sampled inside the parent, scale / split_factor.
                const Mat3 r = rotation(i);
                const Vec3 s = scale(i);
                for (int c = 0; c < 2; ++c) {
                    const Vec3 xi(rng.normal(), rng.normal(), rng.normal());
                    push_back_copy_of(i);
                    positions.back() = positions[i] + r * (s.cwiseProduct(xi));
                    raw_scales.back() = raw_scales[i].array() - log_split;
                    keep_mask.push_back(1);
                    origin.push_back(-1);
                }
                keep_mask[i] = 0;
                ++stats.split;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (keep_mask[i] && opacity(i) < cfg.opacity_floor) {
            keep_mask[i] = 0;
            ++stats.pruned;
        }
    }

    // Never empty the cloud: retain the most opaque survivor candidate.
    if (std::count(keep_mask.begin(), keep_mask.end(), char(1)) == 0) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < keep_mask.size(); ++i)
            if (raw_opacities[i] > raw_opacities[best]) best = i;
        keep_mask[best] = 1;
    }

    for (std::size_t i = 0; i < keep_mask.size(); ++i)
        if (keep_mask[i]) stats.moment_source.push_back(origin[i]);

    keep(keep_mask);
    reset_grad_stats();
    return stats;
}

bool GaussianCloud::all_finite() const {
    for (std::size_t i = 0; i < size(); ++i) {
        if (!positions[i].allFinite() || !raw_scales[i].allFinite()) return false;
        const Quat& q = raw_rotations[i];
        if (!std::isfinite(q.w) || !std::isfinite(q.x) || !std::isfinite(q.y) ||
            !std::isfinite(q.z))
            return false;
        if (!std::isfinite(raw_opacities[i])) return false;
        for (double v : sh[i])
            if (!std::isfinite(v)) return false;
    }
    return true;
}

double compute_extent(const std::vector<Vec3>& points) {
    if (points.empty()) return 1.0;
    Vec3 lo = points[0], hi = points[0];
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double d = (hi - lo).norm();
    return d > 0.0 ? d : 1.0;
}

GaussianCloud init_from_pointcloud(const PointCloud& pc) {
    const std::size_t n = pc.points.size();
    if (n < 4) throw std::invalid_argument("point cloud needs at least 4 points");
    for (const auto& p : pc.points)
        if (!p.allFinite()) throw std::invalid_argument("point cloud has non-finite points");

    GaussianCloud cloud;
    cloud.resize(n);
    cloud.active_sh_degree = 0;
    cloud.scene_extent = compute_extent(pc.points);

    // Distance to the 3rd-nearest other point, by partial selection.
    std::vector<double> nn3(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best[3] = {std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity(),
                          std::numeric_limits<double>::infinity()};
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = (pc.points[j] - pc.points[i]).squaredNorm();
            for (int k = 0; k < 3; ++k) {
                if (d2 < best[k]) {
                    std::swap(d2, best[k]);
                }
            }
        }
        nn3[i] = std::sqrt(best[2]);
    }

    const double raw_op = GaussianCloud::logit(0.1);
    for (std::size_t i = 0; i < n; ++i) {
        cloud.positions[i] = pc.points[i];
        const double s = std::clamp(nn3[i], 1e-7, cloud.scene_extent);
        cloud.raw_scales[i] = Vec3::Constant(std::log(s));
        cloud.raw_rotations[i] = Quat::identity();
        cloud.sh[i].fill(0.0);
        for (int ch = 0; ch < 3; ++ch)
            cloud.sh[i][ch * kShCoeffsPerChannel] = (pc.colors[i](ch) - 0.5) / kSh0;
        cloud.raw_opacities[i] = raw_op;
    }
    return cloud;
}

void save_checkpoint_ply(const std::string& path, const GaussianCloud& cloud) {
    const std::size_t n = cloud.size();
    constexpr std::size_t n_cols = 6 + 3 + 45 + 1 + 3 + 4;
    std::vector<std::vector<double>> cols;
    cols.reserve(n_cols);  // references into cols must stay valid below
    std::vector<PlyColumn> spec;
    auto add = [&](const std::string& name) -> std::vector<double>& {
        cols.emplace_back(n);
        spec.push_back({name, PlyType::Float32, nullptr});
        return cols.back();
    };

    auto& x = add("x");
    auto& y = add("y");
    auto& z = add("z");
    auto& nx = add("nx");
    auto& ny = add("ny");
    auto& nz = add("nz");
    (void)nx;
    (void)ny;
    (void)nz;
    std::vector<std::vector<double>*> f_dc(3), f_rest(45);
    for (int c = 0; c < 3; ++c) f_dc[c] = &add("f_dc_" + std::to_string(c));
    for (int c = 0; c < 45; ++c) f_rest[c] = &add("f_rest_" + std::to_string(c));
    auto& op = add("opacity");
    std::vector<std::vector<double>*> sc(3), rt(4);
    for (int c = 0; c < 3; ++c) sc[c] = &add("scale_" + std::to_string(c));
    for (int c = 0; c < 4; ++c) rt[c] = &add("rot_" + std::to_string(c));

    for (std::size_t i = 0; i < n; ++i) {
        x[i] = cloud.positions[i].x();
        y[i] = cloud.positions[i].y();
        z[i] = cloud.positions[i].z();
        for (int ch = 0; ch < 3; ++ch) {
            (*f_dc[ch])[i] = cloud.sh[i][ch * kShCoeffsPerChannel];
            for (int k = 1; k < kShCoeffsPerChannel; ++k)
                (*f_rest[ch * 15 + (k - 1)])[i] = cloud.sh[i][ch * kShCoeffsPerChannel + k];
        }
        op[i] = cloud.raw_opacities[i];
        for (int c = 0; c < 3; ++c) (*sc[c])[i] = cloud.raw_scales[i](c);
        const Quat& q = cloud.raw_rotations[i];
        (*rt[0])[i] = q.w;
        (*rt[1])[i] = q.x;
        (*rt[2])[i] = q.y;
        (*rt[3])[i] = q.z;
    }

    for (std::size_t c = 0; c < spec.size(); ++c) spec[c].values = &cols[c];
    write_ply(path, n, spec);
}

GaussianCloud load_checkpoint_ply(const std::string& path) {
    const PlyData ply = read_ply(path);
    GaussianCloud cloud;
    cloud.resize(ply.count);
    cloud.active_sh_degree = kShMaxDegree;

    const auto& x = ply.col("x");
    const auto& y = ply.col("y");
    const auto& z = ply.col("z");
    const auto& op = ply.col("opacity");
    const std::vector<double>* f_dc[3];
    const std::vector<double>* sc[3];
    const std::vector<double>* rt[4];
    for (int c = 0; c < 3; ++c) f_dc[c] = &ply.col("f_dc_" + std::to_string(c));
    for (int c = 0; c < 3; ++c) sc[c] = &ply.col("scale_" + std::to_string(c));
    for (int c = 0; c < 4; ++c) rt[c] = &ply.col("rot_" + std::to_string(c));
    std::vector<const std::vector<double>*> f_rest(45, nullptr);
    for (int c = 0; c < 45; ++c) {
        const std::string name = "f_rest_" + std::to_string(c);
        f_rest[c] = ply.has(name) ? &ply.col(name) : nullptr;
    }

    for (std::size_t i = 0; i < ply.count; ++i) {
        cloud.positions[i] = Vec3(x[i], y[i], z[i]);
        for (int ch = 0; ch < 3; ++ch) {
            cloud.sh[i][ch * kShCoeffsPerChannel] = (*f_dc[ch])[i];
            for (int k = 1; k < kShCoeffsPerChannel; ++k) {
                const auto* col = f_rest[ch * 15 + (k - 1)];
                cloud.sh[i][ch * kShCoeffsPerChannel + k] = col ? (*col)[i] : 0.0;
            }
        }
        cloud.raw_opacities[i] = op[i];
        cloud.raw_scales[i] = Vec3((*sc[0])[i], (*sc[1])[i], (*sc[2])[i]);
        cloud.raw_rotations[i] = {(*rt[0])[i], (*rt[1])[i], (*rt[2])[i], (*rt[3])[i]};
    }
    std::vector<Vec3> pts(cloud.positions.begin(), cloud.positions.end());
    cloud.scene_extent = compute_extent(pts);
    return cloud;
}

} // namespace pancake
