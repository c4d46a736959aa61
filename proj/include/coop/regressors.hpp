#pragma once

#include <optional>
#include <vector>

#include "coop/dynamics.hpp"
#include "coop/tracking.hpp"

namespace coop {

// Parameter-vector sizes.
inline constexpr int kObjectParams = 10;          // [m, m r_p, vech(J_p)]
inline constexpr int kGeomParams = 3;             // r
inline constexpr int kBodyFrictionParams = 6;     // diag(Lambda_D)
inline constexpr int kContactViscousParams = 33;  // d, d_k r_j, d_k r_a r_b
inline constexpr int kContactCoulombParams = 15;  // d_C, d_C,k r_j

using ObjectRegressor = Eigen::Matrix<double, 6, kObjectParams>;
using GeomRegressor = Eigen::Matrix<double, 6, kGeomParams>;
using ObjectParamVec = Eigen::Matrix<double, kObjectParams, 1>;

namespace detail {

// Index pairs of vech(), ordered (11, 22, 33, 12, 13, 23).
inline constexpr int kVechRow[6] = {0, 1, 2, 0, 0, 1};
inline constexpr int kVechCol[6] = {0, 1, 2, 1, 2, 2};

/// L(b) with J b = L(b) vech(J) for symmetric J.
inline Eigen::Matrix<double, 3, 6> inertia_action(const Vector3d& b) {
  Eigen::Matrix<double, 3, 6> l;
  l << b(0), 0.0, 0.0, b(1), b(2), 0.0,
       0.0, b(1), 0.0, b(0), 0.0, b(2),
       0.0, 0.0, b(2), 0.0, b(0), b(1);
  return l;
}

}  // namespace detail

inline Eigen::Matrix<double, 6, 1> vech(const Matrix3d& j) {
  Eigen::Matrix<double, 6, 1> v;
  for (int p = 0; p < 6; ++p) v(p) = j(detail::kVechRow[p], detail::kVechCol[p]);
  return v;
}

inline Matrix3d unvech(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Matrix3d j;
  for (int p = 0; p < 6; ++p) {
    j(detail::kVechRow[p], detail::kVechCol[p]) = v(p);
    j(detail::kVechCol[p], detail::kVechRow[p]) = v(p);
  }
  return j;
}

/// True object parameters o = [m, m r_p, vech(J_p)].
inline ObjectParamVec object_params(const BodyParams& body) {
  ObjectParamVec o;
  o(0) = body.mass;
  o.segment<3>(1) = body.mass * body.r_p;
  o.segment<6>(4) = vech(inertia_about_point(body));
  return o;
}

/// Y_o with Y_o o = H(q) qdd_r + C(q, qd) qd_r.
inline ObjectRegressor regressor_object(const Pose& q, const Twist& qd, const Twist& qd_r,
                                        const Accel& qdd_r) {
  const Matrix3d& R = q.R;
  const Vector3d xdot = qd.head<3>();
  const Matrix3d w_hat = so3::hat(qd.tail<3>());
  const Vector3d v_l = qd_r.head<3>();
  const Vector3d v_w = qd_r.tail<3>();
  const Vector3d a_l = qdd_r.head<3>();
  const Vector3d a_w = qdd_r.tail<3>();
  const Matrix3d vw_hat = so3::hat(v_w);

  ObjectRegressor y = ObjectRegressor::Zero();
  y.block<3, 1>(0, 0) = a_l;
  y.block<3, 3>(0, 1) = -(so3::hat(a_w) + w_hat * vw_hat) * R;
  y.block<3, 3>(3, 1) = (so3::hat(a_l) + w_hat * so3::hat(v_l) - vw_hat * so3::hat(xdot)) * R;
  y.block<3, 6>(3, 4) = R * detail::inertia_action(R.transpose() * a_w) +
                        w_hat * R * detail::inertia_action(R.transpose() * v_w);
  return y;
}

/// Object regressor with the constant gravity column appended; its true
/// parameter is the effort share (1 for a single agent).
inline Eigen::MatrixXd regressor_object_with_gravity(const Pose& q, const Twist& qd,
                                                     const Twist& qd_r, const Accel& qdd_r,
                                                     const Vector6d& gravity) {
  Eigen::MatrixXd y(6, kObjectParams + 1);
  y.leftCols<kObjectParams>() = regressor_object(q, qd, qd_r, qdd_r);
  y.col(kObjectParams) = gravity;
  return y;
}

/// Y_g with -(M(r_hat) - M(r)) F = Y_g (r_hat - r). Only the force block
/// of F enters.
inline GeomRegressor regressor_geometric(const Wrench& f, const Matrix3d& R) {
  GeomRegressor y = GeomRegressor::Zero();
  y.bottomRows<3>() = so3::hat(f.head<3>()) * R;
  return y;
}

/// Y_f with Y_f diag(Lambda_D) = blkdiag(R,R) Lambda_D blkdiag(R,R)^T qd_r.
inline Matrix6d regressor_body_friction(const Matrix3d& R, const Twist& qd_r) {
  const Matrix6d b = block_rotation(R);
  return b * (b.transpose() * qd_r).asDiagonal();
}

/// Lumped contact-viscous parameters for diagonal D and moment arm r.
inline Eigen::VectorXd lump_contact_viscous(const Vector6d& d, const Vector3d& r) {
  Eigen::VectorXd p(kContactViscousParams);
  p.head<6>() = d;
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 3; ++j) p(6 + 3 * k + j) = d(k) * r(j);
    for (int q = 0; q < 6; ++q) {
      p(15 + 6 * k + q) = d(k) * r(detail::kVechRow[q]) * r(detail::kVechCol[q]);
    }
  }
  return p;
}

/// Y_D with Y_D lump_contact_viscous(D, r) = M(r) D M(r)^T qd_r.
inline Eigen::MatrixXd regressor_contact_viscous(const Matrix3d& R, const Twist& qd_r) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(6, kContactViscousParams);
  const Vector3d u_l = qd_r.head<3>();
  const Vector3d u_w = qd_r.tail<3>();
  const Matrix3d uw_r = so3::hat(u_w) * R;
  for (int k = 0; k < 3; ++k) {
    const Vector3d e_k = Vector3d::Unit(k);
    y(k, k) = u_l(k);
    y(3 + k, 3 + k) = u_w(k);
    for (int j = 0; j < 3; ++j) {
      const int c = 6 + 3 * k + j;
      y(k, c) = uw_r(k, j);
      y.block<3, 1>(3, c) = -u_l(k) * e_k.cross(R.col(j));
    }
    for (int q = 0; q < 6; ++q) {
      const int a = detail::kVechRow[q];
      const int b = detail::kVechCol[q];
      Vector3d col = R.col(a).cross(e_k) * uw_r(k, b);
      if (a != b) col += R.col(b).cross(e_k) * uw_r(k, a);
      y.block<3, 1>(3, 15 + 6 * k + q) = col;
    }
  }
  return y;
}

/// Lumped Coulomb parameters for diagonal D_C and moment arm r.
inline Eigen::VectorXd lump_contact_coulomb(const Vector6d& dc, const Vector3d& r) {
  Eigen::VectorXd p(kContactCoulombParams);
  p.head<6>() = dc;
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 3; ++j) p(6 + 3 * k + j) = dc(k) * r(j);
  }
  return p;
}

/// Y_C with Y_C lump_contact_coulomb(D_C, r) = M(r) D_C sgn(v), where v is
/// the agent's own measured twist.
inline Eigen::MatrixXd regressor_contact_coulomb(const Matrix3d& R, const Twist& v_meas) {
  const Vector6d sg = sgn(v_meas);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(6, kContactCoulombParams);
  for (int k = 0; k < 3; ++k) {
    y(k, k) = sg(k);
    y(3 + k, 3 + k) = sg(3 + k);
    for (int j = 0; j < 3; ++j) {
      y.block<3, 1>(3, 6 + 3 * k + j) = -sg(k) * Vector3d::Unit(k).cross(R.col(j));
    }
  }
  return y;
}

/// Numeric rank relative to the largest singular value.
inline int numeric_rank(const Eigen::VectorXd& singular_values, double rel_tol = 1e-8) {
  if (singular_values.size() == 0) return 0;
  const double cutoff = rel_tol * singular_values.maxCoeff();
  int rank = 0;
  for (Eigen::Index k = 0; k < singular_values.size(); ++k) {
    if (singular_values(k) > cutoff) ++rank;
  }
  return rank;
}

struct ExcitationReport {
  Eigen::MatrixXd gram;
  /// Singular values of the Jacobi-scaled Gram D^-1/2 G D^-1/2.
  Eigen::VectorXd singular_values;
  int rank = 0;
  int block_size = kObjectParams + kGeomParams;
};

/// Integrates Y_N^T Y_N over [t0, t0 + duration] along the desired
/// trajectory, with Y_N the per-agent block [Y_o, Y_g] repeated for each
/// agent. Y_g is evaluated at the feedforward force alpha_i * Y_o o of the
/// given body. Rank is taken on the Jacobi-scaled Gram so that parameters of
/// very different magnitudes do not mask each other.
inline ExcitationReport excitation_gram(const TrajectorySpec& spec, const BodyParams& body,
                                        int agents, double t0, double duration, int samples,
                                        std::optional<std::vector<double>> alphas = std::nullopt) {
  if (agents < 1) throw std::invalid_argument("excitation_gram: need at least one agent");
  if (!(duration > 0.0)) throw std::invalid_argument("excitation_gram: window must be positive");
  if (samples < 10) throw std::invalid_argument("excitation_gram: need at least 10 samples");
  if (t0 < 0.0) throw std::invalid_argument("excitation_gram: t0 must be nonnegative");
  std::vector<double> alpha = alphas.value_or(std::vector<double>(agents, 1.0 / agents));
  if (static_cast<int>(alpha.size()) != agents) {
    throw std::invalid_argument("excitation_gram: one alpha per agent required");
  }

  const double h = duration / samples;
  const int block = kObjectParams + kGeomParams;
  const ObjectParamVec o = object_params(body);
  DesiredTrajectory traj(spec, h);
  const long skip = static_cast<long>(std::llround(t0 / h));
  for (long k = 0; k < skip; ++k) traj.advance();

  Eigen::MatrixXd yn(6, block * agents);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(block * agents, block * agents);
  for (int k = 0; k < samples; ++k) {
    const DesiredState d = traj.state();
    const ObjectRegressor yo = regressor_object(d.pose, d.rates, d.rates, d.accel);
    const Wrench ff = yo * o;
    for (int i = 0; i < agents; ++i) {
      yn.block<6, kObjectParams>(0, block * i) = yo;
      yn.block<6, kGeomParams>(0, block * i + kObjectParams) =
          regressor_geometric(alpha[i] * ff, d.pose.R);
    }
    gram.noalias() += h * yn.transpose() * yn;
    traj.advance();
  }

  ExcitationReport rep;
  rep.block_size = block;
  Eigen::VectorXd scale = gram.diagonal();
  for (Eigen::Index k = 0; k < scale.size(); ++k) {
    scale(k) = scale(k) > 0.0 ? 1.0 / std::sqrt(scale(k)) : 0.0;
  }
  const Eigen::MatrixXd scaled = scale.asDiagonal() * gram * scale.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
  rep.singular_values = svd.singularValues();
  rep.rank = numeric_rank(rep.singular_values);
  rep.gram = std::move(gram);
  return rep;
}

}  // namespace coop
