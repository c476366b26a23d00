#pragma once

#include "pancake/camera.hpp"
#include "pancake/cloud.hpp"
#include "pancake/image.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <vector>

namespace pancake {

// Blending conventions shared by the tiled and reference renderers. The
// Mahalanobis cutoff bounds each splat's footprint so that binning by the
// cutoff ellipse's bounding box is exact, and the dropped tail (exp(-16))
// stays below gradient-check noise.
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kTransmittanceEpsilon = 1e-4;
inline constexpr double kPowerCutoff = -16.0;  // skip when log-weight below this
inline constexpr int kTileSize = 16;

// Screen-space state of one projected Gaussian.
struct SplatScreen {
    Vec2 mean2d = Vec2::Zero();
    double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
    double z = 0.0;           // camera-space depth of the mean
    double sigma = 0.0;       // activated opacity
    Vec3 color = Vec3::Zero();
    bool color_clamped[3] = {false, false, false};
    double rx = 0.0, ry = 0.0; // half-extents of the cutoff ellipse's AABB
    Vec3 t_cam = Vec3::Zero();
    // Camera-frame point the covariance Jacobian was evaluated at: x/z and
    // y/z are clamped to 1.3x the frustum so grazing splats keep a bounded
    // affine approximation.
    Vec3 t_jac = Vec3::Zero();
    bool jac_clamped_x = false, jac_clamped_y = false;
};

// Projection + color for one Gaussian; nullopt when culled by the near plane.
std::optional<SplatScreen> preprocess_splat(const GaussianCloud& cloud, std::size_t i,
                                            const Camera& camera);

// exp for the blending kernel's range (|x| < ~20), relative error < 6e-9.
// Both renderers and the backward pass share this so their arithmetic is
// identical; libm exp dominates the per-pixel cost otherwise.
inline double blend_exp(double x) {
    const double t = x * 1.4426950408889634;  // x / ln 2
    const double kd = std::nearbyint(t);
    const double r = x - kd * 0.6931471805599453;
    const double p =
        1.0 + r * (1.0 + r * (0.5 + r * (1.0 / 6.0 +
                   r * (1.0 / 24.0 + r * (1.0 / 120.0 +
                   r * (1.0 / 720.0 + r * (1.0 / 5040.0)))))));
    const auto bits = static_cast<std::uint64_t>(1023 + static_cast<int>(kd)) << 52;
    double scale;
    std::memcpy(&scale, &bits, sizeof(scale));
    return p * scale;
}

// alpha of a splat at a pixel center, or nullopt outside the cutoff.
inline std::optional<double> splat_alpha(const SplatScreen& s, double px, double py) {
    const double dx = px - s.mean2d.x();
    const double dy = py - s.mean2d.y();
    if (dx > s.rx || dx < -s.rx || dy > s.ry || dy < -s.ry) return std::nullopt;
    const double power =
        -0.5 * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
    if (power < kPowerCutoff || power > 0.0) return std::nullopt;
    const double alpha = s.sigma * blend_exp(power);
    return alpha < kAlphaClamp ? alpha : kAlphaClamp;
}

struct RenderContext; // internal state retained for the backward pass

struct RenderOutput {
    Image rgb;    // H x W x 3
    Image depth;  // H x W x 1, alpha-weighted, no background term
    Image alpha;  // H x W x 1
    std::shared_ptr<const RenderContext> ctx;
};

struct ParamGradients {
    std::vector<Vec3> d_position;
    std::vector<Vec3> d_raw_scale;
    std::vector<Quat> d_raw_rotation;
    std::vector<std::array<double, kShStride>> d_sh;
    std::vector<double> d_raw_opacity;
    std::vector<double> screen_grad_norm; // per-Gaussian |dL/d mean2d|
    std::vector<char> visible;

    void resize(std::size_t n);
    bool all_finite() const;
};

// Tile-binned front-to-back alpha blending over 16x16 tiles. Deterministic
// for any worker count: tiles are independent and reductions run in a fixed
// order.
RenderOutput render(const GaussianCloud& cloud, const Camera& camera, const Vec3& background);

// Analytic gradients for every Gaussian parameter of the render that
// produced `output`. Throws std::invalid_argument on shape mismatches.
ParamGradients backward(const GaussianCloud& cloud, const Camera& camera,
                        const RenderOutput& output, const Image& dL_drgb,
                        const Image& dL_ddepth);

// Per-pixel full-sort renderer used as the semantic reference and by the
// synthetic dataset generator. No tiling; every splat is tested at every
// pixel through the same blending kernel.
RenderOutput render_reference(const GaussianCloud& cloud, const Camera& camera,
                              const Vec3& background);

struct NormalsPass {
    std::vector<Vec3> normals;  // unit, one per Gaussian
    std::vector<int> min_axes;  // frozen argmin of the scale vector
};

// Per-Gaussian normals n = R(q) e_min, recomputed from current parameters.
NormalsPass render_normals_pass(const GaussianCloud& cloud);

// Backward of a loss on the normals; flows into raw rotations only, with the
// axis selection frozen to `pass.min_axes`.
void normals_backward(const GaussianCloud& cloud, const NormalsPass& pass,
                      const std::vector<Vec3>& dL_dnormal, ParamGradients& grads);

} // namespace pancake
