#include "pancake/losses.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace pancake {

void LossWeights::validate() const {
    if (lambda1 < 0.0 || lambda1 > 1.0) throw std::invalid_argument("lambda1 outside [0,1]");
    if (lambda2 < 0.0 || lambda3 < 0.0) throw std::invalid_argument("negative loss weight");
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
}

ImageLoss l1_image(const Image& rendered, const Image& truth) {
    if (!rendered.same_shape(truth)) throw std::invalid_argument("l1_image shape mismatch");
    ImageLoss out;
    out.grad = Image(rendered.height, rendered.width, rendered.channels);
    const double inv_n = 1.0 / static_cast<double>(rendered.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        const double d = rendered.data[i] - truth.data[i];
        sum += std::abs(d);
        out.grad.data[i] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
    }
    out.value = sum * inv_n;
    return out;
}

namespace {

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin>& ssim_kernel() {
    static const std::array<double, kWin> k = [] {
        std::array<double, kWin> v{};
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - (kWin - 1) / 2.0;
            v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += v[i];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return k;
}

// Valid-region separable blur of one channel: (h, w) -> (h-10, w-10).
struct Plane {
    int h = 0, w = 0;
    std::vector<double> v;
    Plane() = default;
    Plane(int hh, int ww) : h(hh), w(ww), v(static_cast<std::size_t>(hh) * ww, 0.0) {}
    double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane blur_valid(const Plane& in) {
    const auto& k = ssim_kernel();
    Plane tmp(in.h, in.w - kWin + 1);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < tmp.w; ++x) {
            double s = 0.0;
            for (int u = 0; u < kWin; ++u) s += k[u] * in.at(y, x + u);
            tmp.at(y, x) = s;
        }
    Plane out(in.h - kWin + 1, tmp.w);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double s = 0.0;
            for (int u = 0; u < kWin; ++u) s += k[u] * tmp.at(y + u, x);
            out.at(y, x) = s;
        }
    return out;
}

// Adjoint of blur_valid: scatter a valid-size field back to full size.
Plane scatter_valid(const Plane& g, int full_h, int full_w) {
    const auto& k = ssim_kernel();
    Plane tmp(full_h, g.w);
    for (int y = 0; y < g.h; ++y)
        for (int x = 0; x < g.w; ++x) {
            const double val = g.at(y, x);
            if (val == 0.0) continue;
            for (int u = 0; u < kWin; ++u) tmp.at(y + u, x) += k[u] * val;
        }
    Plane out(full_h, full_w);
    for (int y = 0; y < full_h; ++y)
        for (int x = 0; x < g.w; ++x) {
            const double val = tmp.at(y, x);
            if (val == 0.0) continue;
            for (int u = 0; u < kWin; ++u) out.at(y, x + u) += k[u] * val;
        }
    return out;
}

Plane channel_plane(const Image& img, int c) {
    Plane p(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) p.at(y, x) = img.at(y, x, c);
    return p;
}

} // namespace

double ssim_core(const Image& a, const Image& b, Image* grad_wrt_a) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim shape mismatch");
    if (a.height < kWin || a.width < kWin)
        throw std::invalid_argument("ssim needs images of at least 11x11");

    const int vh = a.height - kWin + 1;
    const int vw = a.width - kWin + 1;
    const double inv_n = 1.0 / (static_cast<double>(vh) * vw * a.channels);

    if (grad_wrt_a) *grad_wrt_a = Image(a.height, a.width, a.channels);

    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const Plane pa = channel_plane(a, c);
        const Plane pb = channel_plane(b, c);
        Plane paa(a.height, a.width), pbb(a.height, a.width), pab(a.height, a.width);
        for (std::size_t i = 0; i < pa.v.size(); ++i) {
            paa.v[i] = pa.v[i] * pa.v[i];
            pbb.v[i] = pb.v[i] * pb.v[i];
            pab.v[i] = pa.v[i] * pb.v[i];
        }
        const Plane mu_a = blur_valid(pa);
        const Plane mu_b = blur_valid(pb);
        const Plane raw_aa = blur_valid(paa);
        const Plane raw_bb = blur_valid(pbb);
        const Plane raw_ab = blur_valid(pab);

        Plane f1(vh, vw), f2(vh, vw), f3(vh, vw);
        for (int y = 0; y < vh; ++y) {
            for (int x = 0; x < vw; ++x) {
                const double ma = mu_a.at(y, x), mb = mu_b.at(y, x);
                const double va = raw_aa.at(y, x) - ma * ma;
                const double vb = raw_bb.at(y, x) - mb * mb;
                const double vab = raw_ab.at(y, x) - ma * mb;
                const double a1 = 2.0 * ma * mb + kC1;
                const double a2 = 2.0 * vab + kC2;
                const double b1 = ma * ma + mb * mb + kC1;
                const double b2 = va + vb + kC2;
                const double ssim = (a1 * a2) / (b1 * b2);
                total += ssim;
                if (grad_wrt_a) {
                    const double ds_dmu = 2.0 * a2 * (mb * b1 - ma * a1) / (b1 * b1 * b2);
                    const double ds_dva = -a1 * a2 / (b1 * b2 * b2);
                    const double ds_dvab = 2.0 * a1 / (b1 * b2);
                    f1.at(y, x) = inv_n * (ds_dmu - 2.0 * ma * ds_dva - mb * ds_dvab);
                    f2.at(y, x) = inv_n * 2.0 * ds_dva;
                    f3.at(y, x) = inv_n * ds_dvab;
                }
            }
        }
        if (grad_wrt_a) {
            const Plane s1 = scatter_valid(f1, a.height, a.width);
            const Plane s2 = scatter_valid(f2, a.height, a.width);
            const Plane s3 = scatter_valid(f3, a.height, a.width);
            for (int y = 0; y < a.height; ++y)
                for (int x = 0; x < a.width; ++x)
                    grad_wrt_a->at(y, x, c) =
                        s1.at(y, x) + pa.at(y, x) * s2.at(y, x) + pb.at(y, x) * s3.at(y, x);
        }
    }
    return total * inv_n;
}

ImageLoss d_ssim(const Image& rendered, const Image& truth) {
    ImageLoss out;
    Image grad;
    const double s = ssim_core(rendered, truth, &grad);
    out.value = 0.5 * (1.0 - s);
    out.grad = std::move(grad);
    for (auto& v : out.grad.data) v *= -0.5;
    return out;
}

Image depth_validity_mask(const Image& depth_ref) {
    Image mask(depth_ref.height, depth_ref.width, 1);
    for (std::size_t i = 0; i < depth_ref.size(); ++i)
        mask.data[i] = (std::isfinite(depth_ref.data[i]) && depth_ref.data[i] > 0.0) ? 1.0 : 0.0;
    return mask;
}

DepthLoss depth_huber(const Image& depth_ref, const Image& depth_rendered,
                      const Image& mask, double delta) {
    if (!depth_ref.same_shape(depth_rendered) || !depth_ref.same_shape(mask))
        throw std::invalid_argument("depth_huber shape mismatch");
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");

    DepthLoss out;
    out.grad = Image(depth_ref.height, depth_ref.width, 1);
    std::size_t valid = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < depth_ref.size(); ++i) {
        if (mask.data[i] == 0.0) continue;
        ++valid;
        const double r = depth_rendered.data[i] - depth_ref.data[i];
        const double ad = std::abs(r);
        if (ad < delta) {
            sum += 0.5 * ad * ad;
            out.grad.data[i] = r;
        } else {
            sum += delta * (ad - 0.5 * delta);
            out.grad.data[i] = r > 0.0 ? delta : -delta;
        }
    }
    if (valid == 0) {
        out.empty_mask = true;
        out.value = 0.0;
        return out;
    }
    const double inv = 1.0 / static_cast<double>(valid);
    out.value = sum * inv;
    for (auto& g : out.grad.data) g *= inv;
    return out;
}

GeoLoss geometric_cosine(const std::vector<Vec3>& gaussian_normals,
                         const std::vector<Vec3>& reference_normals,
                         const std::vector<char>& included) {
    const std::size_t n = gaussian_normals.size();
    if (reference_normals.size() != n || included.size() != n)
        throw std::invalid_argument("geometric_cosine size mismatch");
    if (n == 0) throw std::invalid_argument("geometric_cosine needs at least one pair");

    GeoLoss out;
    out.d_gaussian_normals.assign(n, Vec3::Zero());

    // First pass to count the included pairs (the mean needs the count).
    std::size_t m = 0;
    std::vector<char> use(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!included[i]) {
            ++out.excluded;
            continue;
        }
        const double na = reference_normals[i].norm();
        const double nb = gaussian_normals[i].norm();
        if (!(na > 1e-12) || !(nb > 1e-12)) {
            ++out.excluded;
            continue;
        }
        use[i] = 1;
        ++m;
    }
    if (m == 0) return out;

    const double inv_m = 1.0 / static_cast<double>(m);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!use[i]) continue;
        const Vec3& a = reference_normals[i];
        const Vec3& b = gaussian_normals[i];
        const double na = a.norm();
        const double nb = b.norm();
        const double cosv = a.dot(b) / (na * nb);
        sum += 1.0 - std::abs(cosv);
        const double sign = cosv >= 0.0 ? 1.0 : -1.0;
        out.d_gaussian_normals[i] = -sign * inv_m * (a / (na * nb) - cosv * b / (nb * nb));
    }
    out.value = sum * inv_m;
    return out;
}

LossBreakdown total_loss(double l_image, double l_dssim, double l_depth, double l_geo,
                         const LossWeights& w, int iteration, int geo_start) {
    w.validate();
    LossBreakdown b;
    b.l_image = l_image;
    b.l_dssim = l_dssim;
    b.l_depth = l_depth;
    b.l_geo = iteration <= geo_start ? 0.0 : l_geo;
    b.l_total = (1.0 - w.lambda1) * b.l_image + w.lambda1 * b.l_dssim +
                w.lambda2 * b.l_depth + w.lambda3 * b.l_geo;
    return b;
}

} // namespace pancake
