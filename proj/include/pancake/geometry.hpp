#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <optional>
#include <span>

namespace pancake {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// Unnormalized rotation parameters; consumers normalize before use.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    double norm() const;
    Quat normalized() const;
    static Quat identity() { return {1.0, 0.0, 0.0, 0.0}; }
};

inline constexpr double kNearPlane = 0.01;     // camera-space z cull threshold
inline constexpr double kCov2dFloor = 0.3;     // pixel^2 added to both diagonals
inline constexpr int kShMaxDegree = 3;
inline constexpr int kShCoeffsPerChannel = 16; // (3+1)^2
inline constexpr int kShStride = 3 * kShCoeffsPerChannel;
inline constexpr double kSh0 = 0.28209479177387814;

// Rotation matrix from a (possibly unnormalized) quaternion.
// Throws std::invalid_argument on a zero-norm quaternion.
Mat3 quat_to_rotation(const Quat& q);

// Chain-rule helper: given dL/dR, returns dL/d(raw quaternion), accounting
// for the internal normalization.
Quat quat_rotation_backward(const Quat& q_raw, const Mat3& dL_dR);

// Sigma = R diag(s)^2 R^T for strictly positive scales.
Mat3 build_covariance(const Vec3& scale, const Quat& q);

// exp(-1/2 (x-mu)^T Sigma^{-1} (x-mu)). Throws on a singular covariance.
double eval_gaussian(const Vec3& x, const Vec3& mu, const Mat3& sigma);

struct ProjectedCov {
    Mat2 cov;     // includes the low-pass diagonal floor
    Mat2 conic;   // inverse of cov
};

// Perspective projection of a camera-frame covariance onto the image plane.
// Returns nullopt (cull) when the mean is at or behind the near plane.
std::optional<ProjectedCov> project_covariance(const Mat3& cov_cam, const Vec3& mu_cam,
                                               double fx, double fy);

// The 2x3 perspective Jacobian at a camera-frame point.
Eigen::Matrix<double, 2, 3> perspective_jacobian(const Vec3& mu_cam, double fx, double fy);

struct SymEig3 {
    Vec3 values;   // ascending
    Mat3 vectors;  // columns, orthonormal
};

// Analytic symmetric 3x3 eigendecomposition with a cyclic-Jacobi fallback
// for ill-conditioned discriminants and repeated eigenvalues.
SymEig3 eigendecompose_sym3(const Mat3& c);

// Real spherical harmonics basis values for a unit direction, bands 0..degree.
void sh_basis(const Vec3& dir, int degree, std::array<double, kShCoeffsPerChannel>& out);

// d(basis_i)/d(dir) for the same layout.
void sh_basis_grad(const Vec3& dir, int degree,
                   std::array<Vec3, kShCoeffsPerChannel>& out);

// RGB = sum_c coeffs * basis + 0.5 per channel. Coefficients are
// channel-major: coeffs[ch * per_channel + i]. Throws when the requested
// degree exceeds what the coefficient vector stores.
Vec3 eval_sh(std::span<const double> coeffs, const Vec3& view_dir, int degree);

// Column of R picked by the smallest scale component (ties to the lowest
// axis index).
Vec3 gaussian_normal(const Mat3& rotation, const Vec3& scale);
int min_scale_axis(const Vec3& scale);

} // namespace pancake
