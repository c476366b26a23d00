#pragma once

#include "pancake/geometry.hpp"
#include "pancake/rng.hpp"

#include <array>
#include <string>
#include <vector>

namespace pancake {

// RGB point cloud input: one position and one [0,1] color per point.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> colors;
};

PointCloud read_pointcloud_ply(const std::string& path);
void write_pointcloud_ply(const std::string& path, const PointCloud& pc,
                          const std::vector<Vec3>* normals = nullptr);

struct DensifyConfig {
    double grad_threshold = 2e-4;     // mean screen-space positional gradient
    double opacity_floor = 0.005;
    double scale_threshold_rel = 0.01; // fraction of scene extent
    double split_factor = 1.6;
};

struct DensifyStats {
    int cloned = 0;
    int split = 0;
    int pruned = 0;
    // For each Gaussian of the resulting cloud: its index before the call,
    // or -1 for new Gaussians (clone/split children start with fresh
    // optimizer moments).
    std::vector<std::int64_t> moment_source;
    bool changed() const { return cloned + split + pruned > 0; }
};

// The optimizable scene. Structure-of-arrays; raw parameters live in
// unconstrained domains (log scale, logit opacity, unnormalized quaternion).
class GaussianCloud {
public:
    std::vector<Vec3> positions;
    std::vector<Vec3> raw_scales;                        // log-domain
    std::vector<Quat> raw_rotations;                     // normalized on read
    std::vector<std::array<double, kShStride>> sh;       // channel-major, degree-3 capacity
    std::vector<double> raw_opacities;                   // logit-domain
    int active_sh_degree = 0;
    double scene_extent = 1.0;

    // Densification statistics, reset by densify_and_prune.
    std::vector<double> grad_accum;
    std::vector<int> grad_count;

    std::size_t size() const { return positions.size(); }

    Vec3 scale(std::size_t i) const {
        return raw_scales[i].array().exp();
    }
    double opacity(std::size_t i) const {
        return 1.0 / (1.0 + std::exp(-raw_opacities[i]));
    }
    Mat3 rotation(std::size_t i) const { return quat_to_rotation(raw_rotations[i]); }

    static double logit(double p) { return std::log(p) - std::log1p(-p); }

    void resize(std::size_t n);
    void push_back_copy_of(std::size_t i);
    // Keeps entries whose mask bit is true; preserves order.
    void keep(const std::vector<char>& mask);

    void accumulate_grad_stats(const std::vector<double>& screen_grad_norm,
                               const std::vector<char>& visible);
    void reset_grad_stats();

    DensifyStats densify_and_prune(const DensifyConfig& cfg, Rng& rng);

    bool all_finite() const;
};

// One Gaussian per point: 3rd-nearest-neighbor isotropic scale, identity
// rotation, DC color matching the point, opacity 0.1. Throws on < 4 points.
GaussianCloud init_from_pointcloud(const PointCloud& pc);

// Bounding-box diagonal length of a point set.
double compute_extent(const std::vector<Vec3>& points);

// Checkpoint I/O in the interchange splat layout (float32, little-endian:
// x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3).
void save_checkpoint_ply(const std::string& path, const GaussianCloud& cloud);
GaussianCloud load_checkpoint_ply(const std::string& path);

} // namespace pancake
