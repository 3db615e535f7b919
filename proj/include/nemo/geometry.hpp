#pragma once

#include <Eigen/Dense>

namespace nemo {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

namespace geometry {

/// [v]x, so that skew(v) * w == v.cross(w).
Mat3 skew(const Vec3& v);

/// Inverse of skew() applied to the antisymmetric part of m:
/// returns (m21 - m12, m02 - m20, m10 - m01). For any u, <m, skew(u)> == u.dot(vee_asym(m)).
Vec3 vee_asym(const Mat3& m);

/// Rodrigues exponential map so(3) -> SO(3).
Mat3 so3_exp(const Vec3& w);

/// Right Jacobian of the exponential map: d/de exp(w + e) = exp(w) [Jr(w) e]x.
Mat3 so3_right_jacobian(const Vec3& w);

/// Nearest rotation in the Frobenius sense (polar decomposition via SVD).
/// Throws DegenerateRotation for a collapsed column or a reflection (det < 0).
Mat3 reorthonormalize(const Mat3& r);

/// Frobenius norm of R^T R - I.
double orthonormality_error(const Mat3& r);

Mat3 rot_x(double angle);
Mat3 rot_y(double angle);
Mat3 rot_z(double angle);

}  // namespace geometry
}  // namespace nemo
