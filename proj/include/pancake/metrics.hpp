#pragma once

#include "pancake/image.hpp"

#include <functional>
#include <string>
#include <vector>

namespace pancake {

struct Psnr {
    double db = 0.0;
    bool identical = false;  // MSE was exactly zero
};

// 10 log10(peak^2 / MSE) over all pixels and channels.
Psnr psnr(const Image& a, const Image& b, double peak = 1.0);

// Mean local SSIM, same window and constants as the D-SSIM loss.
double ssim(const Image& a, const Image& b);

struct DepthMse {
    double value = 0.0;
    bool empty_mask = false;
};

DepthMse depth_mse(const Image& depth_ref, const Image& depth_rendered, const Image& mask);

// SSIM of min-max normalized depth maps over the valid mask. Both maps are
// normalized by the reference's range; invalid pixels compare as zero.
double depth_ssim(const Image& depth_ref, const Image& depth_rendered, const Image& mask);

struct MetricRow {
    std::string view_id;
    Psnr psnr;
    double ssim = 0.0;
    DepthMse depth_mse;
    double render_ms = 0.0;
};

// Median wall-clock milliseconds of fn() over `reps` runs after `warmup`
// discarded runs.
double median_render_ms(const std::function<void()>& fn, int warmup = 10, int reps = 100);

} // namespace pancake
