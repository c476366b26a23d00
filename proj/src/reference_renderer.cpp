#include "pancake/rasterizer.hpp"

#include "pancake/parallel.hpp"

#include <algorithm>
#include <numeric>

namespace pancake {

// Semantic reference: no binning, no tiles. Every pixel scans the full
// depth-sorted splat list through the same blending kernel as the tiled
// renderer.
RenderOutput render_reference(const GaussianCloud& cloud, const Camera& camera,
                              const Vec3& background) {
    const int w = camera.width, h = camera.height;
    const std::size_t n = cloud.size();

    std::vector<SplatScreen> splats(n);
    std::vector<char> visible(n, 0);
    parallel_for(0, n, [&](std::size_t i) {
        const auto sp = preprocess_splat(cloud, i, camera);
        if (!sp) return;
        splats[i] = *sp;
        visible[i] = 1;
    });

    std::vector<std::uint32_t> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (visible[i]) order.push_back(static_cast<std::uint32_t>(i));
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return splats[a].z < splats[b].z;
    });

    RenderOutput out;
    out.rgb = Image(h, w, 3);
    out.depth = Image(h, w, 1);
    out.alpha = Image(h, w, 1);

    parallel_for(0, static_cast<std::size_t>(h), [&](std::size_t y) {
        for (int x = 0; x < w; ++x) {
            double t = 1.0;
            double rgb[3] = {0.0, 0.0, 0.0};
            double depth = 0.0;
            double alpha_acc = 0.0;
            for (const std::uint32_t g : order) {
                const SplatScreen& s = splats[g];
                const auto a = splat_alpha(s, x + 0.5, static_cast<double>(y) + 0.5);
                if (!a) continue;
                const double contrib = *a * t;
                rgb[0] += s.color(0) * contrib;
                rgb[1] += s.color(1) * contrib;
                rgb[2] += s.color(2) * contrib;
                depth += s.z * contrib;
                alpha_acc += contrib;
                t *= (1.0 - *a);
                if (t < kTransmittanceEpsilon) break;
            }
            for (int c = 0; c < 3; ++c)
                out.rgb.at(static_cast<int>(y), x, c) = rgb[c] + background(c) * t;
            out.depth.at(static_cast<int>(y), x) = depth;
            out.alpha.at(static_cast<int>(y), x) = alpha_acc;
        }
    });
    return out;
}

} // namespace pancake
