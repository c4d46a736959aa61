#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "coop/dynamics.hpp"

namespace coop::testing {

/// Deterministic random inputs for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed = 1) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

  Vector3d vec3(double scale = 1.0) { return scale * Vector3d(normal(), normal(), normal()); }

  Vector6d vec6(double scale = 1.0) {
    Vector6d v;
    for (int k = 0; k < 6; ++k) v(k) = scale * normal();
    return v;
  }

  Matrix3d mat3(double scale = 1.0) {
    Matrix3d m;
    for (int k = 0; k < 9; ++k) m(k) = scale * normal();
    return m;
  }

  /// Axis-angle with uniform axis and angle in [0, max_angle].
  Matrix3d rotation(double max_angle = M_PI) {
    Vector3d axis = vec3();
    while (axis.norm() < 1e-6) axis = vec3();
    const double angle = uniform(0.0, max_angle);
    return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  }

  Pose pose() {
    Pose p;
    p.x = vec3(2.0);
    p.R = rotation();
    return p;
  }

  /// Positive principal moments satisfying the triangle inequality, rotated.
  BodyParams body(int attachments = 3) {
    BodyParams b;
    b.mass = uniform(0.5, 30.0);
    const double a = uniform(0.3, 4.0), c = uniform(0.3, 4.0);
    const double d = uniform(0.05 + std::abs(a - c), a + c - 0.05);
    const Matrix3d q = rotation();
    b.inertia_cm = q * Vector3d(a, c, d).asDiagonal() * q.transpose();
    b.r_p = vec3(0.8);
    for (int i = 0; i < attachments; ++i) b.attachments.push_back(vec3(0.8));
    return b;
  }

 private:
  std::mt19937_64 rng_;
};

inline Matrix3d rot_z(double theta) { return Eigen::AngleAxisd(theta, Vector3d::UnitZ()).toRotationMatrix(); }

/// Relative error with a floor of one on the scale.
inline double rel_err(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).norm() / (1.0 + want.norm());
}

}  // namespace coop::testing
