#include "pancake/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace pancake {

double Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quat Quat::normalized() const {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n))
        throw std::invalid_argument("quaternion has zero or non-finite norm");
    return {w / n, x / n, y / n, z / n};
}

Mat3 quat_to_rotation(const Quat& q_raw) {
    const Quat q = q_raw.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Quat quat_rotation_backward(const Quat& q_raw, const Mat3& g) {
    const double n = q_raw.norm();
    if (!(n > 0.0)) throw std::invalid_argument("quaternion has zero norm");
    const Quat q = {q_raw.w / n, q_raw.x / n, q_raw.y / n, q_raw.z / n};
    const double w = q.w, x = q.x, y = q.y, z = q.z;

    // dL/d(unit quaternion)
    const double dw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) -
                             y * g(2, 0) + x * g(2, 1));
    const double dx = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) -
                             w * g(1, 2) + z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    const double dy = 2.0 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) +
                             z * g(1, 2) - w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    const double dz = 2.0 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) -
                             2 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));

    // Through the normalization: dq_unit/dq_raw = (I - u u^T) / n.
    const double dot = dw * w + dx * x + dy * y + dz * z;
    return {(dw - dot * w) / n, (dx - dot * x) / n, (dy - dot * y) / n, (dz - dot * z) / n};
}

Mat3 build_covariance(const Vec3& scale, const Quat& q) {
    if (!(scale.x() > 0.0 && scale.y() > 0.0 && scale.z() > 0.0))
        throw std::invalid_argument("scale must be strictly positive");
    const Mat3 r = quat_to_rotation(q);
    const Mat3 m = r * scale.asDiagonal();
    return m * m.transpose();
}

double eval_gaussian(const Vec3& x, const Vec3& mu, const Mat3& sigma) {
    const Eigen::LLT<Mat3> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw std::domain_error("covariance is singular or indefinite");
    const Vec3 d = x - mu;
    const Vec3 y = llt.matrixL().solve(d);
    const double maha2 = y.squaredNorm();
    if (!std::isfinite(maha2)) throw std::domain_error("covariance is singular");
    return std::exp(-0.5 * maha2);
}

Eigen::Matrix<double, 2, 3> perspective_jacobian(const Vec3& t, double fx, double fy) {
    const double iz = 1.0 / t.z();
    const double iz2 = iz * iz;
    Eigen::Matrix<double, 2, 3> j;
    j << fx * iz, 0.0, -fx * t.x() * iz2,
         0.0, fy * iz, -fy * t.y() * iz2;
    return j;
}

std::optional<ProjectedCov> project_covariance(const Mat3& cov_cam, const Vec3& mu_cam,
                                               double fx, double fy) {
    if (!(mu_cam.z() > kNearPlane)) return std::nullopt;
    const auto j = perspective_jacobian(mu_cam, fx, fy);
    Mat2 cov = j * cov_cam * j.transpose();
    cov(0, 0) += kCov2dFloor;
    cov(1, 1) += kCov2dFloor;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    ProjectedCov out;
    out.cov = cov;
    out.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
    return out;
}

namespace {

// One cyclic-Jacobi sweep pass; returns eigenvalues/vectors of a symmetric 3x3.
SymEig3 jacobi_sym3(const Mat3& c) {
    Mat3 a = c;
    Mat3 v = Mat3::Identity();
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
        if (off < 1e-60) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double cs = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * cs;
                Mat3 rot = Mat3::Identity();
                rot(p, p) = cs;
                rot(q, q) = cs;
                rot(p, q) = sn;
                rot(q, p) = -sn;
                a = rot.transpose() * a * rot;
                a(p, q) = a(q, p) = 0.0;
                v = v * rot;
            }
        }
    }
    SymEig3 out;
    out.values = a.diagonal();
    out.vectors = v;
    return out;
}

void sort_eig_ascending(SymEig3& e) {
    int idx[3] = {0, 1, 2};
    for (int i = 0; i < 2; ++i)
        for (int j = i + 1; j < 3; ++j)
            if (e.values(idx[j]) < e.values(idx[i])) std::swap(idx[i], idx[j]);
    const Vec3 vals = e.values;
    const Mat3 vecs = e.vectors;
    for (int k = 0; k < 3; ++k) {
        e.values(k) = vals(idx[k]);
        e.vectors.col(k) = vecs.col(idx[k]);
    }
    if (e.vectors.determinant() < 0) e.vectors.col(2) = -e.vectors.col(2);
}

} // namespace

SymEig3 eigendecompose_sym3(const Mat3& c_in) {
    const Mat3 c = 0.5 * (c_in + c_in.transpose());
    const double scale = c.cwiseAbs().maxCoeff();
    if (scale == 0.0) {
        SymEig3 e;
        e.values.setZero();
        e.vectors.setIdentity();
        return e;
    }

    // Trigonometric closed form for the characteristic roots.
    const double m = c.trace() / 3.0;
    const Mat3 k = c - m * Mat3::Identity();
    const double p2 = k.squaredNorm() / 6.0;
    const double det_k = k.determinant();

    SymEig3 e;
    bool analytic_ok = p2 > 1e-24 * scale * scale;
    if (analytic_ok) {
        const double p = std::sqrt(p2);
        double r = det_k / (2.0 * p * p * p);
        r = std::clamp(r, -1.0, 1.0);
        const double phi = std::acos(r) / 3.0;
        const double two_pi_3 = 2.0943951023931953;
        Vec3 vals;
        vals(2) = m + 2.0 * p * std::cos(phi);
        vals(0) = m + 2.0 * p * std::cos(phi + two_pi_3);
        vals(1) = 3.0 * m - vals(0) - vals(2);

        // The discriminant of the 2x2 deflation must be well separated or the
        // cross-product eigenvector extraction loses accuracy.
        const double sep = std::min(std::abs(vals(1) - vals(0)), std::abs(vals(2) - vals(1)));
        if (sep > 1e-12 * scale) {
            Mat3 vecs;
            for (int i = 0; i < 3; ++i) {
                const Mat3 a = c - vals(i) * Mat3::Identity();
                const Vec3 r0 = a.row(0), r1 = a.row(1), r2 = a.row(2);
                Vec3 cand[3] = {r0.cross(r1), r0.cross(r2), r1.cross(r2)};
                int best = 0;
                double best_n = cand[0].squaredNorm();
                for (int j = 1; j < 3; ++j) {
                    const double n = cand[j].squaredNorm();
                    if (n > best_n) {
                        best = j;
                        best_n = n;
                    }
                }
                if (best_n < 1e-24 * scale * scale * scale * scale) {
                    analytic_ok = false;
                    break;
                }
                vecs.col(i) = cand[best] / std::sqrt(best_n);
            }
            if (analytic_ok) {
                // Re-orthogonalize the middle vector against its neighbours.
                vecs.col(1) -= vecs.col(1).dot(vecs.col(0)) * vecs.col(0);
                vecs.col(1).normalize();
                vecs.col(2) = vecs.col(0).cross(vecs.col(1));
                e.values = vals;
                e.vectors = vecs;
                sort_eig_ascending(e);
                return e;
            }
        } else {
            analytic_ok = false;
        }
    }

    e = jacobi_sym3(c);
    sort_eig_ascending(e);
    return e;
}

namespace {
// Band constants of the real spherical harmonics basis.
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};
} // namespace

void sh_basis(const Vec3& dir, int degree, std::array<double, kShCoeffsPerChannel>& b) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    b.fill(0.0);
    b[0] = kSh0;
    if (degree < 1) return;
    b[1] = -kC1 * y;
    b[2] = kC1 * z;
    b[3] = -kC1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    b[4] = kC2[0] * x * y;
    b[5] = kC2[1] * y * z;
    b[6] = kC2[2] * (2.0 * zz - xx - yy);
    b[7] = kC2[3] * x * z;
    b[8] = kC2[4] * (xx - yy);
    if (degree < 3) return;
    b[9] = kC3[0] * y * (3.0 * xx - yy);
    b[10] = kC3[1] * x * y * z;
    b[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    b[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    b[14] = kC3[5] * z * (xx - yy);
    b[15] = kC3[6] * x * (xx - 3.0 * yy);
}

void sh_basis_grad(const Vec3& dir, int degree, std::array<Vec3, kShCoeffsPerChannel>& g) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    for (auto& v : g) v.setZero();
    if (degree < 1) return;
    g[1] = Vec3(0.0, -kC1, 0.0);
    g[2] = Vec3(0.0, 0.0, kC1);
    g[3] = Vec3(-kC1, 0.0, 0.0);
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    g[4] = kC2[0] * Vec3(y, x, 0.0);
    g[5] = kC2[1] * Vec3(0.0, z, y);
    g[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
    g[7] = kC2[3] * Vec3(z, 0.0, x);
    g[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) return;
    g[9] = kC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    g[10] = kC3[1] * Vec3(y * z, x * z, x * y);
    g[11] = kC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    g[12] = kC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    g[13] = kC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    g[14] = kC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
    g[15] = kC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
}

Vec3 eval_sh(std::span<const double> coeffs, const Vec3& view_dir, int degree) {
    if (degree < 0 || degree > kShMaxDegree)
        throw std::invalid_argument("sh degree out of range");
    if (coeffs.size() % 3 != 0)
        throw std::invalid_argument("sh coefficient count not a multiple of 3");
    const std::size_t per_channel = coeffs.size() / 3;
    const std::size_t need = static_cast<std::size_t>((degree + 1) * (degree + 1));
    if (per_channel < need)
        throw std::invalid_argument("sh coefficients do not cover requested degree");

    std::array<double, kShCoeffsPerChannel> b;
    sh_basis(view_dir, degree, b);
    Vec3 rgb;
    for (int ch = 0; ch < 3; ++ch) {
        double v = 0.0;
        for (std::size_t i = 0; i < need; ++i) v += coeffs[ch * per_channel + i] * b[i];
        rgb(ch) = v + 0.5;
    }
    return rgb;
}

int min_scale_axis(const Vec3& s) {
    int k = 0;
    if (s(1) < s(k)) k = 1;
    if (s(2) < s(k)) k = 2;
    return k;
}

Vec3 gaussian_normal(const Mat3& rotation, const Vec3& scale) {
    if (!(scale.x() > 0.0 && scale.y() > 0.0 && scale.z() > 0.0))
        throw std::invalid_argument("scale must be strictly positive");
    return rotation.col(min_scale_axis(scale));
}

} // namespace pancake
