#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coop/so3.hpp"

namespace coop {

/// Stacked [linear; angular] rates of the measurement point, world frame.
using Twist = Vector6d;
/// Stacked [linear; angular] accelerations.
using Accel = Vector6d;
/// Stacked [force; torque].
using Wrench = Vector6d;

/// Configuration q = (x, R) of the measurement point.
struct Pose {
  Vector3d x = Vector3d::Zero();
  Matrix3d R = Matrix3d::Identity();
};

enum class FrictionMode { kNone, kBodyViscous, kContact };

/// All friction matrices are diagonal; only their diagonals are stored.
struct FrictionParams {
  FrictionMode mode = FrictionMode::kNone;
  Vector6d viscous_body = Vector6d::Zero();
  std::vector<Vector6d> viscous_contact;   // one per attachment
  std::vector<Vector6d> coulomb_contact;   // one per attachment
};

/// Ground truth for the manipulated body. The controllers never read this.
struct BodyParams {
  double mass = 1.0;
  Matrix3d inertia_cm = Matrix3d::Identity();
  /// Measurement point relative to the center of mass, body frame.
  Vector3d r_p = Vector3d::Zero();
  /// Agent attachment points relative to the measurement point, body frame.
  std::vector<Vector3d> attachments;
  /// Constant generalized gravity term, zero in free space.
  Vector6d gravity = Vector6d::Zero();
  FrictionParams friction;
};

struct AppliedWrench {
  Wrench tau = Wrench::Zero();
  bool active = true;
};

class DynamicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// J_p = I_cm + m((r_p^T r_p) I - r_p r_p^T).
inline Matrix3d inertia_about_point(const BodyParams& body) {
  const Vector3d& r = body.r_p;
  return body.inertia_cm +
         body.mass * (r.squaredNorm() * Matrix3d::Identity() - r * r.transpose());
}

/// Throws std::invalid_argument naming the offending field.
inline void validate(const BodyParams& body) {
  if (!(body.mass > 0.0) || !std::isfinite(body.mass)) {
    throw std::invalid_argument("body.mass must be positive and finite");
  }
  const Matrix3d& i = body.inertia_cm;
  if (!i.allFinite() || (i - i.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + i.norm())) {
    throw std::invalid_argument("body.inertia_cm must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix3d> eig(i);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw std::invalid_argument("body.inertia_cm must be positive definite");
  }
  if (!body.r_p.allFinite()) throw std::invalid_argument("body.r_p must be finite");
  for (const auto& r : body.attachments) {
    if (!r.allFinite()) throw std::invalid_argument("body.attachments must be finite");
  }
  const auto& f = body.friction;
  if ((f.viscous_body.array() < 0.0).any()) {
    throw std::invalid_argument("friction.viscous_body must be nonnegative");
  }
  if (f.mode == FrictionMode::kContact) {
    if (f.viscous_contact.size() != body.attachments.size() ||
        f.coulomb_contact.size() != body.attachments.size()) {
      throw std::invalid_argument(
          "friction: contact coefficients must have one entry per attachment");
    }
    for (std::size_t k = 0; k < f.viscous_contact.size(); ++k) {
      if ((f.viscous_contact[k].array() < 0.0).any() ||
          (f.coulomb_contact[k].array() < 0.0).any()) {
        throw std::invalid_argument("friction: contact coefficients must be nonnegative");
      }
    }
  }
}

/// Re-express the body about the point P' = P + R * offset. Inertial and
/// attachment geometry only; friction and gravity are carried over as-is.
inline BodyParams shifted(const BodyParams& body, const Vector3d& offset) {
  BodyParams out = body;
  out.r_p = body.r_p + offset;
  for (auto& r : out.attachments) r -= offset;
  return out;
}

inline Matrix6d inertia_matrix(const BodyParams& body, const Pose& q) {
  const double m = body.mass;
  const Matrix3d rp_hat = so3::hat(q.R * body.r_p);
  Matrix6d h;
  h.topLeftCorner<3, 3>() = m * Matrix3d::Identity();
  h.topRightCorner<3, 3>() = m * rp_hat;
  h.bottomLeftCorner<3, 3>() = -m * rp_hat;
  h.bottomRightCorner<3, 3>() = q.R * inertia_about_point(body) * q.R.transpose();
  return h;
}

inline Matrix6d coriolis_matrix(const BodyParams& body, const Pose& q, const Twist& qd) {
  const double m = body.mass;
  const Vector3d rho = q.R * body.r_p;
  const Matrix3d w_hat = so3::hat(qd.tail<3>());
  const Matrix3d a = m * w_hat * so3::hat(rho);
  Matrix6d c;
  c.topLeftCorner<3, 3>().setZero();
  c.topRightCorner<3, 3>() = a;
  c.bottomLeftCorner<3, 3>() = -a;
  c.bottomRightCorner<3, 3>() =
      w_hat * q.R * inertia_about_point(body) * q.R.transpose() -
      m * so3::hat(rho.cross(qd.head<3>()));
  return c;
}

/// Grasp matrix M(q, r) mapping a wrench applied at P + R r to P.
inline Matrix6d grasp_matrix(const Matrix3d& R, const Vector3d& r) {
  Matrix6d g = Matrix6d::Identity();
  g.bottomLeftCorner<3, 3>() = so3::hat(R * r);
  return g;
}

/// M(r) * w without forming the matrix.
inline Wrench apply_grasp(const Matrix3d& R, const Vector3d& r, const Wrench& w) {
  Wrench out = w;
  out.tail<3>() += (R * r).cross(w.head<3>());
  return out;
}

/// M(r)^T * qd: rates of the body-fixed point P + R r.
inline Twist point_twist(const Matrix3d& R, const Vector3d& r, const Twist& qd) {
  Twist out = qd;
  out.head<3>() += qd.tail<3>().cross(R * r);
  return out;
}

/// Element-wise sign with sgn(0) = 0.
inline Vector6d sgn(const Vector6d& v) {
  Vector6d out;
  for (int k = 0; k < 6; ++k) out(k) = (v(k) > 0.0) - (v(k) < 0.0);
  return out;
}

inline Matrix6d block_rotation(const Matrix3d& R) {
  Matrix6d b = Matrix6d::Zero();
  b.topLeftCorner<3, 3>() = R;
  b.bottomRightCorner<3, 3>() = R;
  return b;
}

/// Friction wrench about P (enters the dynamics with a minus sign).
inline Wrench friction_wrench(const BodyParams& body, const Pose& q, const Twist& qd) {
  const auto& f = body.friction;
  switch (f.mode) {
    case FrictionMode::kNone:
      return Wrench::Zero();
    case FrictionMode::kBodyViscous: {
      const Matrix6d b = block_rotation(q.R);
      return b * f.viscous_body.asDiagonal() * (b.transpose() * qd);
    }
    case FrictionMode::kContact: {
      Wrench total = Wrench::Zero();
      for (std::size_t i = 0; i < body.attachments.size(); ++i) {
        const Vector3d& r = body.attachments[i];
        const Twist v = point_twist(q.R, r, qd);
        const Wrench local = f.viscous_contact[i].cwiseProduct(v) +
                             f.coulomb_contact[i].cwiseProduct(sgn(v));
        total += apply_grasp(q.R, r, local);
      }
      return total;
    }
  }
  return Wrench::Zero();
}

/// Sum of M_i tau_i over active agents.
inline Wrench total_wrench(const BodyParams& body, const Pose& q,
                           std::span<const AppliedWrench> wrenches) {
  if (wrenches.size() != body.attachments.size()) {
    throw std::invalid_argument("forward_dynamics: one wrench per attachment required");
  }
  Wrench total = Wrench::Zero();
  for (std::size_t i = 0; i < wrenches.size(); ++i) {
    if (!wrenches[i].active) continue;
    total += apply_grasp(q.R, body.attachments[i], wrenches[i].tau);
  }
  return total;
}

/// Solves H qdd = tau - C qd - g - friction.
inline Accel forward_dynamics_total(const BodyParams& body, const Pose& q, const Twist& qd,
                                    const Wrench& tau) {
  const Matrix6d h = inertia_matrix(body, q);
  const Eigen::LLT<Matrix6d> llt(h);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
    throw DynamicsError("inertia matrix is numerically singular; check body parameters");
  }
  const Wrench rhs = tau - coriolis_matrix(body, q, qd) * qd - body.gravity -
                     friction_wrench(body, q, qd);
  return llt.solve(rhs);
}

inline Accel forward_dynamics(const BodyParams& body, const Pose& q, const Twist& qd,
                              std::span<const AppliedWrench> wrenches) {
  return forward_dynamics_total(body, q, qd, total_wrench(body, q, wrenches));
}

inline double kinetic_energy(const BodyParams& body, const Pose& q, const Twist& qd) {
  return 0.5 * qd.dot(inertia_matrix(body, q) * qd);
}

/// The cylindrical payload used in the reference 3D study. Attachment
/// points are tabulated from the center of mass; they are stored here
/// relative to the measurement point, which coincides with agent 1.
inline BodyParams reference_body() {
  BodyParams body;
  body.mass = 1.89e4;
  body.inertia_cm = Eigen::Vector3d(1.54e4, 1.54e4, 2.37e3).asDiagonal();
  body.r_p = Vector3d(0.0, 0.0, 1.5);
  const Vector3d from_cm[6] = {{0.0, 0.0, 1.5},  {0.0, 0.0, -1.5}, {0.5, 0.0, 0.0},
                               {-0.5, 0.0, 0.0}, {0.0, 0.5, 0.0},  {0.0, -0.5, 0.0}};
  for (const auto& r : from_cm) body.attachments.push_back(r - body.r_p);
  return body;
}

}  // namespace coop
