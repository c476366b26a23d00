#pragma once

#include "pancake/geometry.hpp"
#include "pancake/image.hpp"

#include <vector>

namespace pancake {

struct LossWeights {
    double lambda1 = 0.2;  // D-SSIM share of the photometric term
    double lambda2 = 0.6;  // depth
    double lambda3 = 0.2;  // geometric
    double delta = 0.2;    // Huber threshold, depth units

    void validate() const;
};

struct LossBreakdown {
    double l_image = 0.0;
    double l_dssim = 0.0;
    double l_depth = 0.0;
    double l_geo = 0.0;
    double l_total = 0.0;
};

struct ImageLoss {
    double value = 0.0;
    Image grad;  // w.r.t. the rendered input
};

// Mean absolute difference over all pixels and channels.
ImageLoss l1_image(const Image& rendered, const Image& truth);

// Mean local SSIM over fully-valid 11x11 windows (Gaussian weights,
// sigma 1.5, C1 = 0.01^2, C2 = 0.03^2 on [0,1] data). grad_wrt_a may be null.
double ssim_core(const Image& a, const Image& b, Image* grad_wrt_a);

// (1 - SSIM) / 2 with its analytic gradient.
ImageLoss d_ssim(const Image& rendered, const Image& truth);

struct DepthLoss {
    double value = 0.0;
    Image grad;        // w.r.t. rendered depth
    bool empty_mask = false;
};

// Huber on |D - D_hat|, mean over mask-valid pixels; zero elsewhere.
DepthLoss depth_huber(const Image& depth_ref, const Image& depth_rendered,
                      const Image& mask, double delta);

// Mask convention: valid where reference depth is finite and > 0.
Image depth_validity_mask(const Image& depth_ref);

struct GeoLoss {
    double value = 0.0;
    std::vector<Vec3> d_gaussian_normals;
    int excluded = 0;  // pairs skipped (unreliable reference or zero norm)
};

// Mean of 1 - |cos angle(a_i, b_i)| over included pairs. Gradient flows to
// the Gaussian normals only; reference normals are frozen inputs.
GeoLoss geometric_cosine(const std::vector<Vec3>& gaussian_normals,
                         const std::vector<Vec3>& reference_normals,
                         const std::vector<char>& included);

// Eq-style weighted total; the geometric term is gated off while
// iteration <= geo_start.
LossBreakdown total_loss(double l_image, double l_dssim, double l_depth, double l_geo,
                         const LossWeights& w, int iteration, int geo_start = 1000);

} // namespace pancake
