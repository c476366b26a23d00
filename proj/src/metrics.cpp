#include "pancake/metrics.hpp"

#include "pancake/losses.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace pancake {

Psnr psnr(const Image& a, const Image& b, double peak) {
    if (!a.same_shape(b)) throw std::invalid_argument("psnr shape mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    Psnr out;
    if (mse == 0.0) {
        out.identical = true;
        out.db = std::numeric_limits<double>::infinity();
        return out;
    }
    out.db = 10.0 * std::log10(peak * peak / mse);
    return out;
}

double ssim(const Image& a, const Image& b) { return ssim_core(a, b, nullptr); }

DepthMse depth_mse(const Image& depth_ref, const Image& depth_rendered, const Image& mask) {
    if (!depth_ref.same_shape(depth_rendered) || !depth_ref.same_shape(mask))
        throw std::invalid_argument("depth_mse shape mismatch");
    DepthMse out;
    double sum = 0.0;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < depth_ref.size(); ++i) {
        if (mask.data[i] == 0.0) continue;
        const double d = depth_ref.data[i] - depth_rendered.data[i];
        sum += d * d;
        ++valid;
    }
    if (valid == 0) {
        out.empty_mask = true;
        return out;
    }
    out.value = sum / static_cast<double>(valid);
    return out;
}

double depth_ssim(const Image& depth_ref, const Image& depth_rendered, const Image& mask) {
    if (!depth_ref.same_shape(depth_rendered) || !depth_ref.same_shape(mask))
        throw std::invalid_argument("depth_ssim shape mismatch");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < depth_ref.size(); ++i) {
        if (mask.data[i] == 0.0) continue;
        lo = std::min(lo, depth_ref.data[i]);
        hi = std::max(hi, depth_ref.data[i]);
    }
    if (!(hi > lo)) return 1.0;  // empty mask or constant reference
    const double inv_range = 1.0 / (hi - lo);
    Image na(depth_ref.height, depth_ref.width, 1);
    Image nb(depth_ref.height, depth_ref.width, 1);
    for (std::size_t i = 0; i < depth_ref.size(); ++i) {
        if (mask.data[i] == 0.0) continue;
        na.data[i] = std::clamp((depth_ref.data[i] - lo) * inv_range, 0.0, 1.0);
        nb.data[i] = std::clamp((depth_rendered.data[i] - lo) * inv_range, 0.0, 1.0);
    }
    return ssim(na, nb);
}

double median_render_ms(const std::function<void()>& fn, int warmup, int reps) {
    for (int i = 0; i < warmup; ++i) fn();
    std::vector<double> ms(reps);
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    std::sort(ms.begin(), ms.end());
    return ms[reps / 2];
}

} // namespace pancake
