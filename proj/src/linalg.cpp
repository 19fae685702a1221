#include "qnet/linalg.hpp"

#include <cmath>

namespace qnet {

namespace {
const Complex kI{0.0, 1.0};
}

Mat2 identity2() { return Mat2::Identity(); }

Mat2 stokes_rotation(const Vec3& axis, double angle) {
  const double norm = axis.norm();
  if (norm == 0.0 || angle == 0.0) return identity2();
  const Vec3 n = axis / norm;
  Mat2 sz, sx, sy;
  sz << 1.0, 0.0, 0.0, -1.0;
  sx << 0.0, 1.0, 1.0, 0.0;
  sy << 0.0, -kI, kI, 0.0;
  const Mat2 gen = n.x() * sz + n.y() * sx + n.z() * sy;
  return std::cos(angle / 2.0) * identity2() - kI * std::sin(angle / 2.0) * gen;
}

Mat2 stokes_rotation(const Vec3& axis_angle) {
  return stokes_rotation(axis_angle, axis_angle.norm());
}

Mat2 rotation_s1(double angle) { return stokes_rotation(Vec3::UnitX(), angle); }
Mat2 rotation_s2(double angle) { return stokes_rotation(Vec3::UnitY(), angle); }
Mat2 rotation_s3(double angle) { return stokes_rotation(Vec3::UnitZ(), angle); }

Mat2 polarization_rotator(double theta) {
  Mat2 r;
  r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  return r;
}

bool is_unitary(const Mat2& u, double tol) {
  return (u.adjoint() * u - identity2()).norm() < tol;
}

double phase_distance(const Mat2& a, const Mat2& b) {
  const Complex overlap = (b.adjoint() * a).trace();
  const Complex phase = std::abs(overlap) > 0.0 ? overlap / std::abs(overlap) : Complex{1.0, 0.0};
  return (a - phase * b).norm();
}

}  // namespace qnet
