#include "pancake/rasterizer.hpp"

#include "pancake/parallel.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pancake {

// One composited splat-pixel contribution, in forward composite order.
struct Contribution {
    std::uint32_t instance;  // index into RenderContext::instances
    std::uint16_t pixel;     // tile-local pixel id
    double alpha;
};

struct RenderContext {
    int width = 0, height = 0, tiles_x = 0, tiles_y = 0;
    Vec3 background = Vec3::Zero();
    int sh_degree = 0;
    std::vector<SplatScreen> splats;          // per Gaussian
    std::vector<char> visible;                // per Gaussian
    std::vector<std::uint32_t> instances;     // Gaussian id per sorted instance
    std::vector<std::uint32_t> tile_begin;    // per tile, into instances
    std::vector<std::uint32_t> tile_end;
    std::vector<double> final_t;              // per pixel
    std::vector<std::vector<Contribution>> tile_records;
};

void ParamGradients::resize(std::size_t n) {
    d_position.assign(n, Vec3::Zero());
    d_raw_scale.assign(n, Vec3::Zero());
    d_raw_rotation.assign(n, Quat{0.0, 0.0, 0.0, 0.0});
    d_sh.assign(n, {});
    d_raw_opacity.assign(n, 0.0);
    screen_grad_norm.assign(n, 0.0);
    visible.assign(n, 0);
}

bool ParamGradients::all_finite() const {
    for (std::size_t i = 0; i < d_position.size(); ++i) {
        if (!d_position[i].allFinite() || !d_raw_scale[i].allFinite()) return false;
        const Quat& q = d_raw_rotation[i];
        if (!std::isfinite(q.w + q.x + q.y + q.z)) return false;
        if (!std::isfinite(d_raw_opacity[i])) return false;
        for (double v : d_sh[i])
            if (!std::isfinite(v)) return false;
    }
    return true;
}

std::optional<SplatScreen> preprocess_splat(const GaussianCloud& cloud, std::size_t i,
                                            const Camera& camera) {
    const Vec3 t = camera.to_camera(cloud.positions[i]);
    if (!(t.z() > kNearPlane)) return std::nullopt;

    const Mat3 r = cloud.rotation(i);
    const Vec3 s = cloud.scale(i);
    const Mat3 m = r * s.asDiagonal();
    const Mat3 cov_world = m * m.transpose();
    const Mat3 cov_cam = camera.rotation * cov_world * camera.rotation.transpose();

    SplatScreen sp;
    // The affine approximation degenerates for points far outside the
    // frustum; clamp the tangents before evaluating the Jacobian.
    const double limx = 1.3 * (0.5 * camera.width / camera.fx);
    const double limy = 1.3 * (0.5 * camera.height / camera.fy);
    const double txz = t.x() / t.z();
    const double tyz = t.y() / t.z();
    sp.jac_clamped_x = txz < -limx || txz > limx;
    sp.jac_clamped_y = tyz < -limy || tyz > limy;
    sp.t_jac = Vec3(std::clamp(txz, -limx, limx) * t.z(),
                    std::clamp(tyz, -limy, limy) * t.z(), t.z());

    const auto proj = project_covariance(cov_cam, sp.t_jac, camera.fx, camera.fy);
    if (!proj) return std::nullopt;

    sp.mean2d = camera.project(t);
    sp.z = t.z();
    sp.t_cam = t;
    sp.conic_a = proj->conic(0, 0);
    sp.conic_b = proj->conic(0, 1);
    sp.conic_c = proj->conic(1, 1);
    const double maha_max = -2.0 * kPowerCutoff;
    sp.rx = std::sqrt(maha_max * proj->cov(0, 0));
    sp.ry = std::sqrt(maha_max * proj->cov(1, 1));
    sp.sigma = cloud.opacity(i);

    Vec3 view = cloud.positions[i] - camera.center();
    const double vn = view.norm();
    const Vec3 dir = vn > 1e-12 ? Vec3(view / vn) : Vec3(0.0, 0.0, 1.0);
    const Vec3 rgb = eval_sh(std::span<const double>(cloud.sh[i]), dir, cloud.active_sh_degree);
    for (int c = 0; c < 3; ++c) {
        sp.color_clamped[c] = rgb(c) < 0.0;
        sp.color(c) = sp.color_clamped[c] ? 0.0 : rgb(c);
    }
    return sp;
}

namespace {

struct InstanceRec {
    std::uint64_t zbits;
    std::uint32_t tile;
    std::uint32_t gauss;
};

// LSD radix sort: stable byte passes over depth bits then tile id, so the
// final order is (tile, depth, original order). Original order is ascending
// Gaussian index, which supplies the documented tie-break.
void radix_sort_instances(std::vector<InstanceRec>& recs) {
    std::vector<InstanceRec> tmp(recs.size());
    std::array<std::uint32_t, 257> count;

    auto pass = [&](auto key_fn) {
        count.fill(0);
        for (const auto& r : recs) ++count[key_fn(r) + 1];
        for (int b = 0; b < 256; ++b) count[b + 1] += count[b];
        for (const auto& r : recs) tmp[count[key_fn(r)]++] = r;
        recs.swap(tmp);
    };

    for (int byte = 0; byte < 8; ++byte)
        pass([byte](const InstanceRec& r) -> std::uint32_t {
            return (r.zbits >> (8 * byte)) & 0xff;
        });
    for (int byte = 0; byte < 2; ++byte)
        pass([byte](const InstanceRec& r) -> std::uint32_t {
            return (r.tile >> (8 * byte)) & 0xff;
        });
}

struct TileRect {
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
    bool empty() const { return x1 < x0 || y1 < y0; }
    std::uint32_t count() const {
        return empty() ? 0u : static_cast<std::uint32_t>((x1 - x0 + 1) * (y1 - y0 + 1));
    }
};

TileRect tile_rect(const SplatScreen& sp, int tiles_x, int tiles_y) {
    TileRect rc;
    rc.x0 = std::max(0, static_cast<int>(std::floor((sp.mean2d.x() - sp.rx) / kTileSize)));
    rc.x1 = std::min(tiles_x - 1,
                     static_cast<int>(std::floor((sp.mean2d.x() + sp.rx) / kTileSize)));
    rc.y0 = std::max(0, static_cast<int>(std::floor((sp.mean2d.y() - sp.ry) / kTileSize)));
    rc.y1 = std::min(tiles_y - 1,
                     static_cast<int>(std::floor((sp.mean2d.y() + sp.ry) / kTileSize)));
    return rc;
}

// Pixel index bounds whose centers can pass the AABB reject.
void pixel_span(double m, double r, int lo, int hi, int* out_lo, int* out_hi) {
    *out_lo = std::max(lo, static_cast<int>(std::ceil(m - r - 0.5)));
    *out_hi = std::min(hi, static_cast<int>(std::floor(m + r - 0.5)));
}

} // namespace

RenderOutput render(const GaussianCloud& cloud, const Camera& camera, const Vec3& background) {
    const int w = camera.width, h = camera.height;
    auto ctx = std::make_shared<RenderContext>();
    ctx->width = w;
    ctx->height = h;
    ctx->tiles_x = (w + kTileSize - 1) / kTileSize;
    ctx->tiles_y = (h + kTileSize - 1) / kTileSize;
    ctx->background = background;
    ctx->sh_degree = cloud.active_sh_degree;

    const std::size_t n = cloud.size();
    ctx->splats.resize(n);
    ctx->visible.assign(n, 0);
    std::vector<TileRect> rects(n);

    parallel_for(0, n, [&](std::size_t i) {
        const auto sp = preprocess_splat(cloud, i, camera);
        if (!sp) return;
        const TileRect rc = tile_rect(*sp, ctx->tiles_x, ctx->tiles_y);
        if (rc.empty()) return;
        ctx->splats[i] = *sp;
        rects[i] = rc;
        ctx->visible[i] = 1;
    });

    std::vector<std::size_t> offsets(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i)
        offsets[i + 1] = offsets[i] + (ctx->visible[i] ? rects[i].count() : 0);
    const std::size_t total_instances = offsets[n];

    std::vector<InstanceRec> recs(total_instances);
    parallel_for(0, n, [&](std::size_t i) {
        if (!ctx->visible[i]) return;
        std::size_t at = offsets[i];
        const std::uint64_t zbits = std::bit_cast<std::uint64_t>(ctx->splats[i].z);
        for (int ty = rects[i].y0; ty <= rects[i].y1; ++ty)
            for (int tx = rects[i].x0; tx <= rects[i].x1; ++tx)
                recs[at++] = {zbits, static_cast<std::uint32_t>(ty * ctx->tiles_x + tx),
                              static_cast<std::uint32_t>(i)};
    });

    radix_sort_instances(recs);

    const std::size_t n_tiles = static_cast<std::size_t>(ctx->tiles_x) * ctx->tiles_y;
    ctx->instances.resize(total_instances);
    ctx->tile_begin.assign(n_tiles, 0);
    ctx->tile_end.assign(n_tiles, 0);
    for (std::size_t k = 0; k < total_instances; ++k) ctx->instances[k] = recs[k].gauss;
    for (std::size_t k = 0; k < total_instances; ++k) {
        const std::uint32_t t = recs[k].tile;
        if (k == 0 || recs[k - 1].tile != t) ctx->tile_begin[t] = static_cast<std::uint32_t>(k);
        if (k + 1 == total_instances || recs[k + 1].tile != t)
            ctx->tile_end[t] = static_cast<std::uint32_t>(k + 1);
    }

    RenderOutput out;
    out.rgb = Image(h, w, 3);
    out.depth = Image(h, w, 1);
    out.alpha = Image(h, w, 1);
    ctx->final_t.assign(static_cast<std::size_t>(h) * w, 1.0);
    ctx->tile_records.resize(n_tiles);

    parallel_for(0, n_tiles, [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % ctx->tiles_x;
        const int ty = static_cast<int>(tile) / ctx->tiles_x;
        const int x0 = tx * kTileSize, y0 = ty * kTileSize;
        const int x1 = std::min(x0 + kTileSize, w) - 1;
        const int y1 = std::min(y0 + kTileSize, h) - 1;
        const int tw = x1 - x0 + 1, th = y1 - y0 + 1;
        const int npx = tw * th;

        std::array<double, kTileSize * kTileSize> tbuf;
        std::array<double, kTileSize * kTileSize * 3> cbuf{};
        std::array<double, kTileSize * kTileSize> dbuf{};
        std::array<double, kTileSize * kTileSize> abuf{};
        std::array<char, kTileSize * kTileSize> done{};
        tbuf.fill(1.0);
        const std::uint32_t begin = ctx->tile_begin[tile];
        const std::uint32_t end = ctx->tile_end[tile];
        auto& records = ctx->tile_records[tile];
        records.reserve(static_cast<std::size_t>(npx) * 4);

        int active = npx;
        for (std::uint32_t k = begin; k < end && active > 0; ++k) {
            const SplatScreen& s = ctx->splats[ctx->instances[k]];
            int py0, py1;
            pixel_span(s.mean2d.y(), s.ry, y0, y1, &py0, &py1);
            for (int y = py0; y <= py1; ++y) {
                // Conservative per-row x-interval of the cutoff ellipse; the
                // exact membership test stays inside splat_alpha.
                const double dy = y + 0.5 - s.mean2d.y();
                const double bq = 2.0 * s.conic_b * dy;
                const double cq = s.conic_c * dy * dy + 2.0 * kPowerCutoff;
                const double disc = bq * bq - 4.0 * s.conic_a * cq;
                if (disc < 0.0) continue;
                const double sq = std::sqrt(disc);
                const double dx_lo = (-bq - sq) / (2.0 * s.conic_a);
                const double dx_hi = (-bq + sq) / (2.0 * s.conic_a);
                const int px0 = std::max(x0, static_cast<int>(
                                                 std::floor(s.mean2d.x() + dx_lo - 0.5)) - 1);
                const int px1 = std::min(x1, static_cast<int>(
                                                 std::ceil(s.mean2d.x() + dx_hi - 0.5)) + 1);
                for (int x = px0; x <= px1; ++x) {
                    const int p = (y - y0) * tw + (x - x0);
                    if (done[p]) continue;
                    const auto a = splat_alpha(s, x + 0.5, y + 0.5);
                    if (!a) continue;
                    const double t_cur = tbuf[p];
                    const double contrib = *a * t_cur;
                    cbuf[p * 3 + 0] += s.color(0) * contrib;
                    cbuf[p * 3 + 1] += s.color(1) * contrib;
                    cbuf[p * 3 + 2] += s.color(2) * contrib;
                    dbuf[p] += s.z * contrib;
                    abuf[p] += contrib;
                    records.push_back({k, static_cast<std::uint16_t>(p), *a});
                    const double t_new = t_cur * (1.0 - *a);
                    tbuf[p] = t_new;
                    if (t_new < kTransmittanceEpsilon) {
                        done[p] = 1;
                        --active;
                    }
                }
            }
        }

        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const int p = (y - y0) * tw + (x - x0);
                const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                const double t_fin = tbuf[p];
                out.rgb.at(y, x, 0) = cbuf[p * 3 + 0] + background(0) * t_fin;
                out.rgb.at(y, x, 1) = cbuf[p * 3 + 1] + background(1) * t_fin;
                out.rgb.at(y, x, 2) = cbuf[p * 3 + 2] + background(2) * t_fin;
                out.depth.at(y, x) = dbuf[p];
                out.alpha.at(y, x) = abuf[p];
                ctx->final_t[pix] = t_fin;
            }
        }
    });

    out.ctx = std::move(ctx);
    return out;
}

namespace {

// Per-instance 2D gradient slots filled by the pixel walk.
struct InstanceGrad {
    double color[3] = {0, 0, 0};
    double conic[3] = {0, 0, 0};  // a, b, c
    double mean2d[2] = {0, 0};
    double sigma = 0;
    double z = 0;
};

} // namespace

ParamGradients backward(const GaussianCloud& cloud, const Camera& camera,
                        const RenderOutput& output, const Image& dL_drgb,
                        const Image& dL_ddepth) {
    if (!output.ctx) throw std::invalid_argument("render output has no retained context");
    const RenderContext& ctx = *output.ctx;
    if (dL_drgb.height != ctx.height || dL_drgb.width != ctx.width || dL_drgb.channels != 3)
        throw std::invalid_argument("dL_drgb shape mismatch");
    if (dL_ddepth.height != ctx.height || dL_ddepth.width != ctx.width ||
        dL_ddepth.channels != 1)
        throw std::invalid_argument("dL_ddepth shape mismatch");
    if (ctx.splats.size() != cloud.size())
        throw std::invalid_argument("render output does not match cloud size");

    const std::size_t n = cloud.size();
    ParamGradients grads;
    grads.resize(n);
    grads.visible = ctx.visible;

    const std::size_t n_tiles = static_cast<std::size_t>(ctx.tiles_x) * ctx.tiles_y;
    std::vector<InstanceGrad> inst_grads(ctx.instances.size());

    // Phase 1: replay each tile's recorded contributions in reverse composite
    // order, maintaining per-pixel suffix state.
    parallel_for(0, n_tiles, [&](std::size_t tile) {
        const auto& records = ctx.tile_records[tile];
        if (records.empty()) return;
        const int tx = static_cast<int>(tile) % ctx.tiles_x;
        const int ty = static_cast<int>(tile) / ctx.tiles_x;
        const int x0 = tx * kTileSize, y0 = ty * kTileSize;
        const int x1 = std::min(x0 + kTileSize, ctx.width) - 1;
        const int tw = x1 - x0 + 1;

        std::array<double, kTileSize * kTileSize> t_run;
        std::array<double, kTileSize * kTileSize * 3> s_color{};
        std::array<double, kTileSize * kTileSize> s_depth{};
        std::array<double, kTileSize * kTileSize * 3> dr{};
        std::array<double, kTileSize * kTileSize> dd{};
        std::array<char, kTileSize * kTileSize> skip{};

        const int y1 = std::min(y0 + kTileSize, ctx.height) - 1;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const int p = (y - y0) * tw + (x - x0);
                const std::size_t pix = static_cast<std::size_t>(y) * ctx.width + x;
                const double t_fin = ctx.final_t[pix];
                t_run[p] = t_fin;
                for (int c = 0; c < 3; ++c) {
                    s_color[p * 3 + c] = ctx.background(c) * t_fin;
                    dr[p * 3 + c] = dL_drgb.at(y, x, c);
                }
                dd[p] = dL_ddepth.at(y, x);
                skip[p] = (dr[p * 3] == 0.0 && dr[p * 3 + 1] == 0.0 &&
                           dr[p * 3 + 2] == 0.0 && dd[p] == 0.0)
                              ? 1
                              : 0;
            }
        }

        for (std::size_t r = records.size(); r-- > 0;) {
            const Contribution& rec = records[r];
            const int p = rec.pixel;
            if (skip[p]) continue;
            const std::uint32_t k = rec.instance;
            const SplatScreen& s = ctx.splats[ctx.instances[k]];
            const double a = rec.alpha;
            const double inv_om = 1.0 / (1.0 - a);
            const double t_i = t_run[p] * inv_om;
            const double contrib = a * t_i;

            double d_alpha = dd[p] * (s.z * t_i - s_depth[p] * inv_om);
            for (int c = 0; c < 3; ++c)
                d_alpha += dr[p * 3 + c] * (s.color(c) * t_i - s_color[p * 3 + c] * inv_om);

            InstanceGrad& ig = inst_grads[k];
            for (int c = 0; c < 3; ++c) ig.color[c] += dr[p * 3 + c] * contrib;
            ig.z += dd[p] * contrib;

            if (a < kAlphaClamp) {
                const double g = a / s.sigma;
                ig.sigma += d_alpha * g;
                const double d_power = d_alpha * s.sigma * g;
                const int px_i = x0 + p % tw;
                const int py_i = y0 + p / tw;
                const double dx = px_i + 0.5 - s.mean2d.x();
                const double dy = py_i + 0.5 - s.mean2d.y();
                ig.conic[0] += d_power * (-0.5 * dx * dx);
                ig.conic[1] += d_power * (-dx * dy);
                ig.conic[2] += d_power * (-0.5 * dy * dy);
                ig.mean2d[0] += d_power * (s.conic_a * dx + s.conic_b * dy);
                ig.mean2d[1] += d_power * (s.conic_b * dx + s.conic_c * dy);
            }

            for (int c = 0; c < 3; ++c) s_color[p * 3 + c] += s.color(c) * contrib;
            s_depth[p] += s.z * contrib;
            t_run[p] = t_i;
        }
    });

    // Deterministic segmented reduction: instances grouped per Gaussian in
    // sorted-instance order.
    std::vector<std::size_t> counts(n + 1, 0);
    for (std::uint32_t g : ctx.instances) ++counts[g + 1];
    for (std::size_t i = 0; i < n; ++i) counts[i + 1] += counts[i];
    std::vector<std::uint32_t> by_gauss(ctx.instances.size());
    {
        std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
        for (std::uint32_t k = 0; k < ctx.instances.size(); ++k)
            by_gauss[cursor[ctx.instances[k]]++] = k;
    }

    const Mat3 w_rot = camera.rotation;
    const Vec3 cam_center = camera.center();
    const int degree = ctx.sh_degree;
    const std::size_t need =
        static_cast<std::size_t>((degree + 1) * (degree + 1));

    // Phase 2: chain per-Gaussian 2D gradients through projection, SH,
    // covariance construction, and activations.
    parallel_for(0, n, [&](std::size_t i) {
        if (!ctx.visible[i]) return;
        InstanceGrad g2;
        for (std::size_t k = counts[i]; k < counts[i + 1]; ++k) {
            const InstanceGrad& ig = inst_grads[by_gauss[k]];
            for (int c = 0; c < 3; ++c) g2.color[c] += ig.color[c];
            for (int c = 0; c < 3; ++c) g2.conic[c] += ig.conic[c];
            g2.mean2d[0] += ig.mean2d[0];
            g2.mean2d[1] += ig.mean2d[1];
            g2.sigma += ig.sigma;
            g2.z += ig.z;
        }

        const SplatScreen& sp = ctx.splats[i];
        grads.screen_grad_norm[i] =
            std::sqrt(g2.mean2d[0] * g2.mean2d[0] + g2.mean2d[1] * g2.mean2d[1]);

        // Opacity activation.
        const double sig = sp.sigma;
        grads.d_raw_opacity[i] = g2.sigma * sig * (1.0 - sig);

        Vec3 d_mu = Vec3::Zero();

        // SH color (with the render-time clamp at zero).
        {
            Vec3 view = cloud.positions[i] - cam_center;
            const double vn = view.norm();
            const Vec3 dir = vn > 1e-12 ? Vec3(view / vn) : Vec3(0.0, 0.0, 1.0);
            std::array<double, kShCoeffsPerChannel> basis;
            std::array<Vec3, kShCoeffsPerChannel> basis_g;
            sh_basis(dir, degree, basis);
            sh_basis_grad(dir, degree, basis_g);

            Vec3 d_dir = Vec3::Zero();
            for (int c = 0; c < 3; ++c) {
                if (sp.color_clamped[c] || g2.color[c] == 0.0) continue;
                const double gc = g2.color[c];
                for (std::size_t b = 0; b < need; ++b) {
                    grads.d_sh[i][c * kShCoeffsPerChannel + b] = gc * basis[b];
                    d_dir += gc * cloud.sh[i][c * kShCoeffsPerChannel + b] * basis_g[b];
                }
            }
            if (vn > 1e-12) d_mu += (d_dir - dir * dir.dot(d_dir)) / vn;
        }

        // Conic -> 2D covariance.
        Mat2 q;
        q << sp.conic_a, sp.conic_b, sp.conic_b, sp.conic_c;
        Mat2 gc;
        gc << g2.conic[0], 0.5 * g2.conic[1], 0.5 * g2.conic[1], g2.conic[2];
        const Mat2 d_cov2d = -q * gc * q;

        // Recompute the projection intermediates.
        const Mat3 r = cloud.rotation(i);
        const Vec3 s = cloud.scale(i);
        const Mat3 m = r * s.asDiagonal();
        const Mat3 cov_world = m * m.transpose();
        const Mat3 cov_cam = w_rot * cov_world * w_rot.transpose();
        const Vec3 t = sp.t_cam;
        const Vec3 tj = sp.t_jac;
        const auto j_cov = perspective_jacobian(tj, camera.fx, camera.fy);

        // 2D covariance -> camera covariance and Jacobian.
        const Mat3 d_cov_cam = j_cov.transpose() * d_cov2d * j_cov;
        const Eigen::Matrix<double, 2, 3> d_j = 2.0 * d_cov2d * j_cov * cov_cam;

        Vec3 d_t = Vec3::Zero();
        const double iz = 1.0 / tj.z();
        const double iz2 = iz * iz;
        const double iz3 = iz2 * iz;
        if (!sp.jac_clamped_x) d_t.x() += d_j(0, 2) * (-camera.fx * iz2);
        if (!sp.jac_clamped_y) d_t.y() += d_j(1, 2) * (-camera.fy * iz2);
        d_t.z() += d_j(0, 0) * (-camera.fx * iz2) + d_j(1, 1) * (-camera.fy * iz2) +
                   d_j(0, 2) * (2.0 * camera.fx * tj.x() * iz3) +
                   d_j(1, 2) * (2.0 * camera.fy * tj.y() * iz3);

        // Screen mean and blended depth (exact, unclamped projection).
        const auto j_proj = perspective_jacobian(t, camera.fx, camera.fy);
        d_t += j_proj.transpose() * Vec2(g2.mean2d[0], g2.mean2d[1]);
        d_t.z() += g2.z;

        d_mu += w_rot.transpose() * d_t;
        grads.d_position[i] = d_mu;

        // Camera covariance -> world covariance -> scale and rotation.
        const Mat3 d_cov_world = w_rot.transpose() * d_cov_cam * w_rot;
        const Mat3 d_m = 2.0 * d_cov_world * m;
        const Mat3 d_r = d_m * s.asDiagonal();
        Vec3 d_s;
        for (int c = 0; c < 3; ++c) d_s(c) = d_m.col(c).dot(r.col(c));
        grads.d_raw_scale[i] = d_s.cwiseProduct(s); // through exp()
        grads.d_raw_rotation[i] = quat_rotation_backward(cloud.raw_rotations[i], d_r);
    });

    return grads;
}

NormalsPass render_normals_pass(const GaussianCloud& cloud) {
    NormalsPass pass;
    const std::size_t n = cloud.size();
    pass.normals.resize(n);
    pass.min_axes.resize(n);
    parallel_for(0, n, [&](std::size_t i) {
        const Vec3 s = cloud.scale(i);
        const int axis = min_scale_axis(s);
        pass.min_axes[i] = axis;
        pass.normals[i] = cloud.rotation(i).col(axis);
    });
    return pass;
}

void normals_backward(const GaussianCloud& cloud, const NormalsPass& pass,
                      const std::vector<Vec3>& dL_dnormal, ParamGradients& grads) {
    const std::size_t n = cloud.size();
    if (pass.normals.size() != n || dL_dnormal.size() != n ||
        grads.d_raw_rotation.size() != n)
        throw std::invalid_argument("normals_backward shape mismatch");
    parallel_for(0, n, [&](std::size_t i) {
        if (dL_dnormal[i].isZero(0.0)) return;
        Mat3 d_r = Mat3::Zero();
        d_r.col(pass.min_axes[i]) = dL_dnormal[i];
        const Quat dq = quat_rotation_backward(cloud.raw_rotations[i], d_r);
        grads.d_raw_rotation[i].w += dq.w;
        grads.d_raw_rotation[i].x += dq.x;
        grads.d_raw_rotation[i].y += dq.y;
        grads.d_raw_rotation[i].z += dq.z;
    });
}

} // namespace pancake
