#pragma once

#include "pancake/cloud.hpp"
#include "pancake/dataset.hpp"
#include "pancake/losses.hpp"
#include "pancake/metrics.hpp"
#include "pancake/normal_field.hpp"
#include "pancake/rasterizer.hpp"

#include <span>
#include <string>
#include <vector>

namespace pancake {

struct TrainConfig {
    int iterations = 7000;
    int densify_until = 4000;
    int densify_interval = 100;
    int geo_loss_start = 1000;
    int sh_degree_interval = 1000;
    LossWeights weights;
    DensifyConfig densify;

    double lr_position = 1.6e-4;        // decays exponentially to lr_position_final
    double lr_position_final = 1.6e-6;
    double lr_sh = 2.5e-3;
    double lr_opacity = 5e-2;
    double lr_scale = 5e-3;
    double lr_rotation = 1e-3;

    std::uint64_t seed = 0;
    bool depth_on = true;
    bool geo_on = true;
    int checkpoint_interval = 0;        // 0 = final checkpoint only
    Vec3 background = Vec3::Zero();
    int normal_knn = 10;

    void validate() const;
    double position_lr_at(int iteration) const;
};

struct AdamGroup {
    std::vector<double> m, v;
    std::int64_t t = 0;

    void init(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        t = 0;
    }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

// In-place Adam update with bias correction. Throws std::runtime_error on a
// non-finite gradient, naming the offending index.
void adam_step(AdamGroup& state, std::span<double> params, std::span<const double> grads,
               double lr);

// Per-parameter-group moments that track the cloud through densification.
struct AdamState {
    AdamGroup position, scale, rotation, sh, opacity;

    void init(std::size_t n);
    // Applies a densify/prune index mapping (-1 entries get zeroed moments).
    void remap(const std::vector<std::int64_t>& source);
};

struct LogRow {
    int iteration = 0;
    LossBreakdown losses;
    int n_gaussians = 0;
    double wall_ms = 0.0;
};

struct TrainResult {
    GaussianCloud cloud;
    std::vector<LogRow> log;
    std::vector<int> densify_iterations;  // iterations where the cloud changed
};

// Full optimization loop over the dataset's training split. When
// checkpoint_dir is non-empty and config.checkpoint_interval > 0,
// intermediate checkpoints are written there.
TrainResult train(const SceneDataset& dataset, const TrainConfig& config,
                  const std::string& checkpoint_dir = "");

struct EvalResult {
    std::vector<MetricRow> rows;
    double mean_psnr = 0.0;   // over finite rows
    double mean_ssim = 0.0;
    double mean_depth_mse = 0.0;
    double mean_depth_ssim = 0.0;
    double fps = 0.0;         // median over repeated renders of the first view
};

EvalResult evaluate(const GaussianCloud& cloud, const SceneDataset& dataset,
                    const std::vector<int>& view_indices, const Vec3& background,
                    bool measure_fps = false);

void write_training_log_csv(const std::string& path, const std::vector<LogRow>& log);
void write_eval_csv(const std::string& path, const EvalResult& eval);

struct AblationRow {
    std::string variant;
    bool depth_on = false;
    bool geo_on = false;
    double psnr = 0.0;
    double ssim = 0.0;
    double depth_ssim = 0.0;
    double depth_mse = 0.0;
    double normal_dev_deg = -1.0;  // -1 when the scene has no analytic surface
    int n_gaussians = 0;
    double wall_minutes = 0.0;     // reported separately; not in the metrics CSV
};

// The four-variant study: GS, GS+Depth, GS+Pancaking, GS+Pancaking+Depth,
// all with the same seed and dataset.
std::vector<AblationRow> run_ablation(const SceneDataset& dataset, const TrainConfig& base);

// Deterministic metrics table (no wall-clock columns).
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);
void write_ablation_timings_csv(const std::string& path, const std::vector<AblationRow>& rows);

// Mean unsigned angle (degrees) between each Gaussian's normal and the
// analytic surface normal at its position.
double mean_normal_deviation_deg(const GaussianCloud& cloud, const SynthShapeInfo& shape);

} // namespace pancake
