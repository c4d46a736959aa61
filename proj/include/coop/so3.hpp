#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace coop {

using Eigen::Matrix3d;
using Eigen::Vector3d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

namespace so3 {

/// Tolerance used to accept a matrix as a rotation.
inline constexpr double kRotationTol = 1e-9;

/// Skew-symmetric matrix such that hat(v) * w == v.cross(w).
inline Matrix3d hat(const Vector3d& v) {
  Matrix3d m;
  m << 0.0, -v(2), v(1),
       v(2), 0.0, -v(0),
       -v(1), v(0), 0.0;
  return m;
}

/// Inverse of hat(). Throws std::invalid_argument if `a` has a symmetric
/// part with Frobenius norm above 1e-6.
inline Vector3d vee(const Matrix3d& a) {
  if ((0.5 * (a + a.transpose())).norm() > 1e-6) {
    throw std::invalid_argument("vee: input matrix is not antisymmetric");
  }
  return Vector3d(0.5 * (a(2, 1) - a(1, 2)), 0.5 * (a(0, 2) - a(2, 0)),
                  0.5 * (a(1, 0) - a(0, 1)));
}

inline Matrix3d proj_a(const Matrix3d& a) { return 0.5 * (a - a.transpose()); }
inline Matrix3d proj_s(const Matrix3d& a) { return 0.5 * (a + a.transpose()); }

/// Frobenius inner product tr(A^T B).
inline double inner(const Matrix3d& a, const Matrix3d& b) {
  return (a.transpose() * b).trace();
}

/// vee(proj_a(A)) without the antisymmetry check (it holds by construction).
inline Vector3d skew_vector(const Matrix3d& a) {
  return Vector3d(0.5 * (a(2, 1) - a(1, 2)), 0.5 * (a(0, 2) - a(2, 0)),
                  0.5 * (a(1, 0) - a(0, 1)));
}

/// Rodrigues formula. Below ||w|| = 1e-8 the second-order Taylor expansion
/// is used; both branches agree to machine precision there.
inline Matrix3d exp(const Vector3d& w) {
  const double theta = w.norm();
  const Matrix3d k = hat(w);
  double a;
  double b;
  if (theta < 1e-8) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Matrix3d::Identity() + a * k + b * k * k;
}

/// R_e = R_d^T R.
inline Matrix3d rotation_error(const Matrix3d& r, const Matrix3d& r_d) {
  return r_d.transpose() * r;
}

/// tr(I - R_e), in [0, 4] for rotations.
inline double attitude_potential(const Matrix3d& r_e) { return 3.0 - r_e.trace(); }

inline double orthogonality_error(const Matrix3d& r) {
  return (r.transpose() * r - Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

inline bool is_rotation(const Matrix3d& r, double tol = kRotationTol) {
  return r.allFinite() && orthogonality_error(r) <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// Nearest rotation in the Frobenius sense (polar decomposition via SVD).
/// Never called implicitly by the integrators.
inline Matrix3d orthonormalize(const Matrix3d& r) {
  Eigen::JacobiSVD<Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d u = svd.matrixU();
  const Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

}  // namespace so3
}  // namespace coop
