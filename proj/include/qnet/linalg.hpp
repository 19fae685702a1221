#pragma once

#include <Eigen/Dense>
#include <complex>

namespace qnet {

using Complex = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using Vec3 = Eigen::Vector3d;

// Polarization rotations are written on the Poincare sphere in the H/V
// basis: S1 <-> sigma_z, S2 <-> sigma_x, S3 <-> sigma_y. A rotation by
// `angle` about unit axis n is exp(-i angle/2 n.sigma).

Mat2 identity2();
Mat2 stokes_rotation(const Vec3& axis, double angle);
/// Axis-angle vector form: direction is the axis, norm is the angle.
Mat2 stokes_rotation(const Vec3& axis_angle);
Mat2 rotation_s1(double angle);
Mat2 rotation_s2(double angle);
Mat2 rotation_s3(double angle);
/// Real-space rotation of linear polarization by theta (a 2*theta turn about S3).
Mat2 polarization_rotator(double theta);

bool is_unitary(const Mat2& u, double tol = 1e-9);
/// Frobenius distance after removing the best global phase.
double phase_distance(const Mat2& a, const Mat2& b);

}  // namespace qnet
