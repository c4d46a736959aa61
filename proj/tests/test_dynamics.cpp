#include <algorithm>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "coop/dynamics.hpp"
#include "support.hpp"

using namespace coop;
using coop::testing::Gen;

namespace {

/// Central difference of H along the true flow R' = hat(w) R.
Matrix6d h_dot_fd(const BodyParams& b, const Pose& q, const Twist& qd, double dt = 1e-6) {
  Pose p = q, m = q;
  p.R = Eigen::AngleAxisd(dt * qd.tail<3>().norm(), qd.tail<3>().normalized()).toRotationMatrix() * q.R;
  m.R = Eigen::AngleAxisd(-dt * qd.tail<3>().norm(), qd.tail<3>().normalized()).toRotationMatrix() * q.R;
  return (inertia_matrix(b, p) - inertia_matrix(b, m)) / (2.0 * dt);
}

std::vector<AppliedWrench> zero_wrenches(std::size_t n) { return std::vector<AppliedWrench>(n); }

}  // namespace

TEST(InertiaMatrix, ReferenceBodyAtIdentity) {
  const BodyParams b = reference_body();
  const Matrix6d h = inertia_matrix(b, Pose{});
  const double m = 1.89e4;
  EXPECT_TRUE((h.topLeftCorner<3, 3>().isApprox(m * Matrix3d::Identity(), 0.0)));
  // J_p = I_cm + m (|r_p|^2 I - r_p r_p^T) with r_p = 1.5 e_z.
  EXPECT_DOUBLE_EQ(h(3, 3), 1.54e4 + m * 2.25);
  EXPECT_DOUBLE_EQ(h(4, 4), 1.54e4 + m * 2.25);
  EXPECT_DOUBLE_EQ(h(5, 5), 2.37e3);
  // Coupling block m hat(r_p), since v_cm = v + hat(R r_p) w.
  EXPECT_DOUBLE_EQ(h(0, 4), -m * 1.5);
  EXPECT_DOUBLE_EQ(h(1, 3), m * 1.5);
}

TEST(InertiaMatrix, CollocatedMeasurementPoint) {
  BodyParams b;
  b.mass = 3.0;
  b.inertia_cm << 2, 0.1, 0, 0.1, 3, 0.2, 0, 0.2, 4;
  const Matrix6d h = inertia_matrix(b, Pose{});
  Matrix6d want = Matrix6d::Zero();
  want.topLeftCorner<3, 3>() = 3.0 * Matrix3d::Identity();
  want.bottomRightCorner<3, 3>() = b.inertia_cm;
  EXPECT_TRUE(h.isApprox(want, 0.0));
}

TEST(InertiaMatrix, SymmetricPositiveDefinite) {
  Gen g(21);
  for (int k = 0; k < 1000; ++k) {
    const Matrix6d h = inertia_matrix(g.body(), g.pose());
    EXPECT_LE((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-12 * h.norm());
    Eigen::SelfAdjointEigenSolver<Matrix6d> eig(0.5 * (h + h.transpose()));
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(InertiaMatrix, SchurComplementIdentity) {
  Gen g(22);
  for (int k = 0; k < 1000; ++k) {
    const BodyParams b = g.body();
    const Matrix3d R = g.rotation();
    const Matrix3d rho = so3::hat(R * b.r_p);
    const Matrix3d lhs = R * inertia_about_point(b) * R.transpose() + b.mass * rho * rho;
    const Matrix3d rhs = R * b.inertia_cm * R.transpose();
    EXPECT_LE((lhs - rhs).norm(), 1e-9 * rhs.norm());
  }
}

TEST(CoriolisMatrix, VanishesAtRest) {
  Gen g(23);
  const BodyParams b = g.body();
  EXPECT_TRUE(coriolis_matrix(b, g.pose(), Twist::Zero()).isZero(0.0));
}

TEST(CoriolisMatrix, SkewSymmetryAgainstFiniteDifference) {
  Gen g(24);
  for (int k = 0; k < 1000; ++k) {
    const BodyParams b = g.body();
    const Pose q = g.pose();
    const Twist qd = g.vec6();
    const Matrix6d n = h_dot_fd(b, q, qd) - 2.0 * coriolis_matrix(b, q, qd);
    EXPECT_LE((n + n.transpose()).cwiseAbs().maxCoeff(), 1e-5);
    const Vector6d s = g.vec6();
    EXPECT_LE(std::abs(s.dot(n * s)), 1e-6);
  }
}

TEST(CoriolisMatrix, PowerBalanceOfFreeBody) {
  // qd^T (Hdot - 2C) qd = 0: kinetic energy changes only through applied wrenches.
  Gen g(25);
  for (int k = 0; k < 200; ++k) {
    const BodyParams b = g.body();
    const Pose q = g.pose();
    const Twist qd = g.vec6();
    const Matrix6d hd = h_dot_fd(b, q, qd);
    EXPECT_NEAR(qd.dot((hd - 2.0 * coriolis_matrix(b, q, qd)) * qd), 0.0, 1e-6);
  }
}

TEST(GraspMatrix, IdentityAtZeroOffset) {
  Gen g(26);
  EXPECT_TRUE(grasp_matrix(g.rotation(), Vector3d::Zero()).isApprox(Matrix6d::Identity(), 0.0));
}

TEST(GraspMatrix, InverseAndProductIdentities) {
  Gen g(27);
  for (int k = 0; k < 500; ++k) {
    const Matrix3d R = g.rotation();
    const Vector3d ri = g.vec3(), rj = g.vec3();
    const Matrix6d mi = grasp_matrix(R, ri), mj = grasp_matrix(R, rj);
    EXPECT_LE((mi * grasp_matrix(R, -ri) - Matrix6d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((mi * mj - (mi + mj - Matrix6d::Identity())).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(GraspMatrix, MomentTransportOracle) {
  Gen g(28);
  for (int k = 0; k < 200; ++k) {
    const Matrix3d R = g.rotation();
    const Vector3d r = g.vec3();
    const Wrench w = g.vec6();
    // Force f at P + R r produces moment (R r) x f about P.
    Wrench want = w;
    want.tail<3>() = w.tail<3>() + (R * r).cross(w.head<3>());
    EXPECT_LE((apply_grasp(R, r, w) - want).norm(), 1e-13);
    EXPECT_LE((grasp_matrix(R, r) * w - want).norm(), 1e-13);
    // Velocity of the point P + R r.
    const Twist qd = g.vec6();
    Twist v = qd;
    v.head<3>() = qd.head<3>() + qd.tail<3>().cross(R * r);
    EXPECT_LE((point_twist(R, r, qd) - v).norm(), 1e-13);
    EXPECT_LE((grasp_matrix(R, r).transpose() * qd - v).norm(), 1e-13);
  }
}

TEST(FrictionWrench, NoneIsZero) {
  Gen g(29);
  const BodyParams b = g.body();
  EXPECT_TRUE(friction_wrench(b, g.pose(), g.vec6()).isZero(0.0));
}

TEST(FrictionWrench, BodyViscousDiagonalCase) {
  BodyParams b;
  b.friction.mode = FrictionMode::kBodyViscous;
  b.friction.viscous_body.setOnes();
  const Twist qd = Twist::Unit(0);
  EXPECT_TRUE(friction_wrench(b, Pose{}, qd).isApprox(Wrench::Unit(0), 0.0));
}

TEST(FrictionWrench, CollocatedContact) {
  BodyParams b;
  b.attachments = {Vector3d::Zero()};
  b.friction.mode = FrictionMode::kContact;
  b.friction.viscous_contact = {Vector6d::Ones()};
  b.friction.coulomb_contact = {Vector6d::Zero()};
  EXPECT_TRUE(friction_wrench(b, Pose{}, Twist::Unit(0)).isApprox(Wrench::Unit(0), 0.0));
}

TEST(FrictionWrench, ContactMatchesDenseGraspOracle) {
  Gen g(30);
  BodyParams b = g.body(4);
  b.friction.mode = FrictionMode::kContact;
  for (int i = 0; i < 4; ++i) {
    b.friction.viscous_contact.push_back(g.vec6().cwiseAbs());
    b.friction.coulomb_contact.push_back(g.vec6().cwiseAbs());
  }
  const Pose q = g.pose();
  const Twist qd = g.vec6();
  Wrench want = Wrench::Zero();
  for (int i = 0; i < 4; ++i) {
    const Matrix6d m = grasp_matrix(q.R, b.attachments[i]);
    const Twist v = m.transpose() * qd;
    Vector6d sg;
    for (int k = 0; k < 6; ++k) sg(k) = v(k) > 0 ? 1.0 : (v(k) < 0 ? -1.0 : 0.0);
    want += m * (b.friction.viscous_contact[i].asDiagonal() * v + b.friction.coulomb_contact[i].asDiagonal() * sg);
  }
  EXPECT_LE((friction_wrench(b, q, qd) - want).norm(), 1e-12 * (1.0 + want.norm()));
}

TEST(ForwardDynamics, EquilibriumAtRest) {
  Gen g(31);
  const BodyParams b = g.body();
  EXPECT_TRUE(forward_dynamics(b, g.pose(), Twist::Zero(), zero_wrenches(3)).isZero(1e-14));
}

TEST(ForwardDynamics, NewtonsLawAtCenterOfMass) {
  BodyParams b;
  b.mass = 7.0;
  b.inertia_cm = Vector3d(1, 2, 3).asDiagonal();
  b.attachments = {Vector3d::Zero()};
  const Vector3d a(0.3, -1.0, 2.0);
  std::vector<AppliedWrench> w(1);
  w[0].tau.head<3>() = b.mass * a;
  const Accel qdd = forward_dynamics(b, Pose{}, Twist::Zero(), w);
  EXPECT_LE((qdd.head<3>() - a).norm(), 1e-14);
  EXPECT_LE(qdd.tail<3>().norm(), 1e-14);
}

TEST(ForwardDynamics, InactiveAgentsContributeNothing) {
  Gen g(32);
  const BodyParams b = g.body(3);
  const Pose q = g.pose();
  const Twist qd = g.vec6();
  std::vector<AppliedWrench> w(3);
  for (auto& x : w) x.tau = g.vec6(5.0);
  std::vector<AppliedWrench> off = w;
  off[1].active = false;
  std::vector<AppliedWrench> zero = w;
  zero[1].tau.setZero();
  EXPECT_LE((forward_dynamics(b, q, qd, off) - forward_dynamics(b, q, qd, zero)).norm(), 1e-13);
}

TEST(ForwardDynamics, EquivariantUnderAgentRelabeling) {
  Gen g(33);
  BodyParams b = g.body(5);
  const Pose q = g.pose();
  const Twist qd = g.vec6();
  std::vector<AppliedWrench> w(5);
  for (auto& x : w) x.tau = g.vec6(3.0);
  std::vector<int> perm = {3, 0, 4, 1, 2};
  BodyParams bp = b;
  std::vector<AppliedWrench> wp(5);
  for (int i = 0; i < 5; ++i) {
    bp.attachments[i] = b.attachments[perm[i]];
    wp[i] = w[perm[i]];
  }
  const Accel a = forward_dynamics(b, q, qd, w), ap = forward_dynamics(bp, q, qd, wp);
  EXPECT_LE((a - ap).norm(), 1e-12 * (1.0 + a.norm()));
}

TEST(ForwardDynamics, RejectsWrongWrenchCount) {
  Gen g(34);
  const BodyParams b = g.body(3);
  EXPECT_THROW(forward_dynamics(b, Pose{}, Twist::Zero(), zero_wrenches(2)), std::invalid_argument);
}

TEST(ForwardDynamics, KineticEnergyConservedWithoutWrench) {
  Gen g(35);
  BodyParams b = g.body(1);
  Pose q = g.pose();
  Twist qd = g.vec6();
  const double e0 = kinetic_energy(b, q, qd);
  const double h = 1e-3;
  const auto w = zero_wrenches(1);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    // Heun with exponential-map rotation updates.
    const Accel a1 = forward_dynamics(b, q, qd, w);
    Pose qp;
    qp.x = q.x + h * qd.head<3>();
    qp.R = so3::exp(h * qd.tail<3>()) * q.R;
    const Twist qdp = qd + h * a1;
    const Accel a2 = forward_dynamics(b, qp, qdp, w);
    q.x += 0.5 * h * (qd.head<3>() + qdp.head<3>());
    q.R = so3::exp(0.5 * h * (qd.tail<3>() + qdp.tail<3>())) * q.R;
    qd += 0.5 * h * (a1 + a2);
    worst = std::max(worst, std::abs(kinetic_energy(b, q, qd) - e0) / e0);
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(BodyValidation, RejectsBadFields) {
  BodyParams b = reference_body();
  b.mass = -1.0;
  EXPECT_THROW(validate(b), std::invalid_argument);
  b = reference_body();
  b.inertia_cm(0, 1) = 5.0;
  EXPECT_THROW(validate(b), std::invalid_argument);
  b = reference_body();
  b.inertia_cm(2, 2) = -1.0;
  EXPECT_THROW(validate(b), std::invalid_argument);
  b = reference_body();
  b.friction.mode = FrictionMode::kContact;
  EXPECT_THROW(validate(b), std::invalid_argument);
  EXPECT_NO_THROW(validate(reference_body()));
}

TEST(ReferenceBody, AttachmentsAverageToCenterOfMass) {
  const BodyParams b = reference_body();
  ASSERT_EQ(b.attachments.size(), 6u);
  Vector3d mean = Vector3d::Zero();
  for (const auto& r : b.attachments) mean += r;
  mean /= 6.0;
  // Attachments are stored from P; their tabulated mean about the CM is zero.
  EXPECT_LE((mean + b.r_p).norm(), 1e-15);
  EXPECT_TRUE(b.attachments[0].isZero(0.0));
}
