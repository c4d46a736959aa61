#include <vector>

#include <gtest/gtest.h>

#include "coop/controller.hpp"
#include "support.hpp"

using namespace coop;
using coop::testing::Gen;
using coop::testing::rel_err;

namespace {

Eigen::MatrixXd dense(Gen& g, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = g.normal();
  return m;
}

Eigen::VectorXd params(Gen& g) { return dense(g, kObjectParams, 1); }

Eigen::VectorXd positive_params(Gen& g) {
  return params(g).cwiseAbs() + Eigen::VectorXd::Constant(kObjectParams, 0.1);
}

DesiredState matching(const Pose& q, const Twist& qd, const Accel& a) {
  DesiredState d;
  d.pose = q;
  d.rates = qd;
  d.accel = a;
  return d;
}

GainConfig test_gains(Gen& g) {
  GainConfig gains;
  gains.gamma_o = positive_params(g).asDiagonal();
  gains.gamma_r = 0.1 * Matrix3d::Identity();
  gains.k_d.setZero();
  gains.k_d.diagonal() = g.vec6().cwiseAbs() + Vector6d::Constant(0.5);
  gains.lambda = 1.5;
  gains.deadband = 0.01;
  return gains;
}

AgentState perfect_agent(const BodyParams& b, int id, double alpha) {
  AgentState a;
  a.id = id;
  a.o_hat = alpha * object_params(b);
  a.r_hat = b.attachments[id];
  return a;
}

}  // namespace

TEST(AgentControl, ZeroEstimatesGiveDampingOnly) {
  Gen g(81);
  const GainConfig gains = test_gains(g);
  Measurement m{g.pose(), g.vec6()};
  DesiredState d = matching(g.pose(), g.vec6(), g.vec6());
  AgentState a;
  const ControlOutput out = agent_control(a, gains, m, d);
  EXPECT_LE((out.wrench + gains.k_d * out.terms.error.s).norm(), 1e-12);
}

TEST(AgentControl, PerfectEstimatesOnTrajectory) {
  Gen g(82);
  const GainConfig gains = test_gains(g);
  const BodyParams b = g.body(1);
  const Pose q = g.pose();
  const Twist qd = g.vec6();
  const Accel a = g.vec6();
  const ControlOutput out = agent_control(perfect_agent(b, 0, 1.0), gains, {q, qd}, matching(q, qd, a));
  EXPECT_LE(out.terms.error.s.norm(), 1e-15);
  const Wrench body_wrench = inertia_matrix(b, q) * a + coriolis_matrix(b, q, qd) * qd;
  EXPECT_LE(rel_err(out.wrench, grasp_matrix(q.R, -b.attachments[0]) * body_wrench), 1e-12);
}

TEST(AgentControl, PerfectEstimatesSumToRigidBodyWrench) {
  Gen g(83);
  const GainConfig gains = test_gains(g);
  for (int n : {1, 2, 5}) {
    const BodyParams b = g.body(n);
    const Measurement m{g.pose(), g.vec6()};
    const DesiredState d = matching(g.pose(), g.vec6(), g.vec6());
    Wrench sum = Wrench::Zero();
    TrackingTerms terms;
    for (int i = 0; i < n; ++i) {
      const ControlOutput out = agent_control(perfect_agent(b, i, 1.0 / n), gains, m, d);
      sum += apply_grasp(m.pose.R, b.attachments[i], out.wrench);
      terms = out.terms;
    }
    const Wrench want = inertia_matrix(b, m.pose) * terms.qdd_r +
                        coriolis_matrix(b, m.pose, m.twist) * terms.qd_r -
                        static_cast<double>(n) * gains.k_d * terms.error.s;
    EXPECT_LE(rel_err(sum, want), 1e-11) << "N = " << n;
  }
}

TEST(AgentControl, NoAdaptationOnTrajectory) {
  Gen g(84);
  const GainConfig gains = test_gains(g);
  AgentState a;
  a.o_hat = params(g);
  a.r_hat = g.vec3();
  const Pose q = g.pose();
  const Twist qd = g.vec6();
  const ControlOutput out = agent_control(a, gains, {q, qd}, matching(q, qd, g.vec6()), std::nullopt, true);
  EXPECT_TRUE(out.estimate_rates.o.isZero(0.0));
  EXPECT_TRUE(out.estimate_rates.r.isZero(0.0));
}

TEST(AgentControl, DeadbandFreezesEstimatesButNotTheWrench) {
  Gen g(85);
  const GainConfig gains = test_gains(g);
  AgentState a;
  a.o_hat = params(g);
  DesiredState d = matching(Pose{}, Twist::Zero(), Accel::Unit(0));
  Measurement inside;
  inside.pose.x = Vector3d(0.006, 0, 0);  // ||s|| = 0.009
  const ControlOutput in = agent_control(a, gains, inside, d);
  EXPECT_NEAR(in.terms.error.s.norm(), 0.009, 1e-15);
  EXPECT_TRUE(in.estimate_rates.o.isZero(0.0));
  EXPECT_TRUE(in.estimate_rates.r.isZero(0.0));
  EXPECT_GT(in.wrench.norm(), 0.0);

  Measurement outside;
  outside.pose.x = Vector3d(0.0074, 0, 0);  // ||s|| = 0.0111
  const ControlOutput out = agent_control(a, gains, outside, d);
  EXPECT_GT(out.estimate_rates.o.norm(), 0.0);
  // An explicit decision overrides the deadband test.
  EXPECT_TRUE(agent_control(a, gains, outside, d, std::nullopt, false).estimate_rates.o.isZero(0.0));
}

TEST(AgentControl, InactiveAgentIsSilent) {
  Gen g(86);
  const GainConfig gains = test_gains(g);
  AgentState a;
  a.active = false;
  a.o_hat = params(g);
  const ControlOutput out = agent_control(a, gains, {g.pose(), g.vec6()}, matching(g.pose(), g.vec6(), g.vec6()));
  EXPECT_TRUE(out.wrench.isZero(0.0));
  EXPECT_TRUE(out.estimate_rates.o.isZero(0.0));
  const AgentState next = advanced(a, EstimateRates::zero(kObjectParams), 1.0);
  EXPECT_TRUE(next.o_hat == a.o_hat);
}

TEST(AgentControl, PureFunctionOfInputs) {
  Gen g(87);
  const GainConfig gains = test_gains(g);
  AgentState a;
  a.o_hat = params(g);
  a.r_hat = g.vec3();
  const Measurement m{g.pose(), g.vec6()};
  const DesiredState d = matching(g.pose(), g.vec6(), g.vec6());
  const ControlOutput x = agent_control(a, gains, m, d);
  const ControlOutput y = agent_control(a, gains, m, d);
  EXPECT_TRUE(x.wrench == y.wrench);
  EXPECT_TRUE(x.estimate_rates.o == y.estimate_rates.o);
  EXPECT_TRUE(x.estimate_rates.r == y.estimate_rates.r);
}

TEST(AgentControl, GeometricRateUsesPrecursor) {
  Gen g(88);
  GainConfig gains = test_gains(g);
  AgentState a;
  a.o_hat = params(g);
  a.r_hat = g.vec3();
  const Measurement m{g.pose(), g.vec6()};
  const DesiredState d = matching(g.pose(), g.vec6(), g.vec6());
  const ControlOutput out = agent_control(a, gains, m, d, std::nullopt, true);
  const Vector3d want = -gains.gamma_r * regressor_geometric(out.precursor, m.pose.R).transpose() * out.terms.error.s;
  EXPECT_LE((out.estimate_rates.r - want).norm(), 1e-14 * (1.0 + want.norm()));
  EXPECT_LE((out.wrench - apply_grasp(m.pose.R, -a.r_hat, out.precursor)).norm(), 1e-12);

  gains.gamma_r.setZero();
  EXPECT_TRUE(agent_control(a, gains, m, d, std::nullopt, true).estimate_rates.r.isZero(0.0));
}

TEST(AgentControl, ContactCompensationNeedsOwnTwist) {
  Gen g(89);
  GainConfig gains = test_gains(g);
  gains.compensation = FrictionMode::kContact;
  AgentState a;
  const Measurement m{g.pose(), g.vec6()};
  const DesiredState d = matching(g.pose(), g.vec6(), g.vec6());
  EXPECT_THROW(agent_control(a, gains, m, d), std::invalid_argument);
  EXPECT_NO_THROW(agent_control(a, gains, m, d, g.vec6()));
}

TEST(AgentControl, RejectsMismatchedEstimateSize) {
  Gen g(90);
  GainConfig gains = test_gains(g);
  AgentState a;
  a.o_hat = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(agent_control(a, gains, {g.pose(), g.vec6()}, DesiredState{}), std::invalid_argument);
}

TEST(BregmanRates, QuadraticIsGradientLaw) {
  Gen g(91);
  const Eigen::MatrixXd gamma = positive_params(g).asDiagonal();
  const Eigen::MatrixXd y = dense(g, 6, kObjectParams);
  const Vector6d s = g.vec6();
  const Eigen::VectorXd est = dense(g, kObjectParams, 1);
  const Eigen::VectorXd got = bregman_rates(est, gamma, Regularizer{}, y, s);
  EXPECT_LE((got + gamma * y.transpose() * s).norm(), 1e-12 * (1.0 + got.norm()));
}

TEST(BregmanRates, FullQuadraticFloorReducesToQuadratic) {
  Gen g(92);
  const Eigen::MatrixXd gamma = positive_params(g).asDiagonal();
  const Eigen::MatrixXd y = dense(g, 6, kObjectParams);
  const Vector6d s = g.vec6();
  const Eigen::VectorXd est = 5.0 * dense(g, kObjectParams, 1);
  Regularizer reg;
  reg.kind = RegularizerKind::kSmoothedL1;
  reg.epsilon = 1e-3;
  reg.quadratic_floor = 1.0;
  const Eigen::VectorXd got = bregman_rates(est, gamma, reg, y, s);
  EXPECT_LE((got - bregman_rates(est, gamma, Regularizer{}, y, s)).norm(), 1e-12 * (1.0 + got.norm()));
}

TEST(BregmanRates, SmoothedL1FiniteAtZeroAndSlowerNearZero) {
  Gen g(93);
  const Eigen::MatrixXd gamma = Eigen::MatrixXd::Identity(kObjectParams, kObjectParams);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Ones(6, kObjectParams);
  const Vector6d s = Vector6d::Ones();
  Regularizer reg;
  reg.kind = RegularizerKind::kSmoothedL1;
  reg.epsilon = 1e-3;
  const Eigen::VectorXd at_zero = bregman_rates(Eigen::VectorXd::Zero(kObjectParams), gamma, reg, y, s);
  EXPECT_TRUE(at_zero.allFinite());
  const Eigen::VectorXd far = bregman_rates(Eigen::VectorXd::Constant(kObjectParams, 1.0), gamma, reg, y, s);
  EXPECT_LT(at_zero.cwiseAbs().maxCoeff(), far.cwiseAbs().minCoeff());
  // Sign follows the gradient law.
  EXPECT_TRUE((far.array() < 0.0).all());
}

TEST(BregmanRates, SmoothedL1RequiresDiagonalGain) {
  Regularizer reg;
  reg.kind = RegularizerKind::kSmoothedL1;
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Identity(kObjectParams, kObjectParams);
  gamma(0, 1) = gamma(1, 0) = 0.1;
  EXPECT_THROW(bregman_rates(Eigen::VectorXd::Zero(kObjectParams), gamma, reg,
                             Eigen::MatrixXd::Ones(6, kObjectParams), Vector6d::Ones()),
               std::invalid_argument);
}

TEST(BregmanDivergence, QuadraticClosedForm) {
  Gen g(94);
  const Eigen::MatrixXd gamma = positive_params(g).asDiagonal();
  const Eigen::VectorXd a = dense(g, kObjectParams, 1);
  const Eigen::VectorXd b = dense(g, kObjectParams, 1);
  const Eigen::VectorXd e = b - a;
  const double want = 0.5 * (e.array().square() / gamma.diagonal().array()).sum();
  EXPECT_NEAR(bregman_divergence(a, b, gamma, Regularizer{}), want, 1e-12 * (1.0 + want));
}

TEST(BregmanDivergence, NonnegativeAndZeroAtTruth) {
  Gen g(95);
  Regularizer reg;
  reg.kind = RegularizerKind::kSmoothedL1;
  reg.epsilon = 1e-2;
  reg.quadratic_floor = 1e-2;
  reg.reference_magnitude = 2e-2;
  reg.scale = Eigen::VectorXd::LinSpaced(kObjectParams, 0.5, 5.0);
  const Eigen::MatrixXd gamma = Eigen::VectorXd::LinSpaced(kObjectParams, 0.1, 2.0).asDiagonal();
  for (int k = 0; k < 200; ++k) {
    const Eigen::VectorXd a = dense(g, kObjectParams, 1);
    const Eigen::VectorXd b = dense(g, kObjectParams, 1);
    EXPECT_GE(bregman_divergence(a, b, gamma, reg), 0.0);
    EXPECT_NEAR(bregman_divergence(a, a, gamma, reg), 0.0, 1e-15);
  }
}

TEST(BregmanDivergence, RateAlongAdaptationLaw) {
  // d/dt d_psi(a || a_hat) = -(a_hat - a)^T Y^T s along a_hat' = bregman_rates.
  Gen g(96);
  Regularizer l1;
  l1.kind = RegularizerKind::kSmoothedL1;
  l1.epsilon = 1e-2;
  l1.quadratic_floor = 1e-2;
  l1.reference_magnitude = 2e-2;
  l1.scale = Eigen::VectorXd::LinSpaced(kObjectParams, 0.5, 5.0);
  const Eigen::MatrixXd gamma = Eigen::VectorXd::LinSpaced(kObjectParams, 0.1, 2.0).asDiagonal();
  for (const Regularizer& reg : {Regularizer{}, l1}) {
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd a = 0.1 * dense(g, kObjectParams, 1);
      const Eigen::VectorXd est = 0.1 * dense(g, kObjectParams, 1);
      const Eigen::MatrixXd y = dense(g, 6, kObjectParams);
      const Vector6d s = g.vec6();
      const Eigen::VectorXd rate = bregman_rates(est, gamma, reg, y, s);
      const double dt = 1e-7 / (1.0 + rate.norm());
      const double fd = (bregman_divergence(a, est + dt * rate, gamma, reg) -
                         bregman_divergence(a, est - dt * rate, gamma, reg)) /
                        (2.0 * dt);
      const double want = -(est - a).dot(y.transpose() * s);
      EXPECT_NEAR(fd, want, 1e-5 * (1.0 + std::abs(want)));
    }
  }
}

TEST(LyapunovValue, ZeroOnlyAtPerfectEstimatesAndZeroError) {
  Gen g(97);
  const GainConfig gains = test_gains(g);
  const BodyParams b = g.body(3);
  std::vector<AgentState> agents;
  for (int i = 0; i < 3; ++i) agents.push_back(perfect_agent(b, i, 1.0 / 3));
  const Pose q = g.pose();
  EXPECT_EQ(lyapunov_value(agents, gains, b, q, Vector6d::Zero()), 0.0);
  const Vector6d s = g.vec6();
  EXPECT_NEAR(lyapunov_value(agents, gains, b, q, s), 0.5 * s.dot(inertia_matrix(b, q) * s), 1e-12);
  agents[1].r_hat += Vector3d(0.01, 0, 0);
  EXPECT_GT(lyapunov_value(agents, gains, b, q, Vector6d::Zero()), 0.0);
}

TEST(LyapunovValue, InactiveAgentsMeasuredAgainstZeroShare) {
  Gen g(98);
  const GainConfig gains = test_gains(g);
  const BodyParams b = g.body(2);
  std::vector<AgentState> agents = {perfect_agent(b, 0, 1.0), perfect_agent(b, 1, 0.0)};
  agents[1].active = false;
  EXPECT_EQ(lyapunov_value(agents, gains, b, Pose{}, Vector6d::Zero()), 0.0);
}

TEST(InitialAgents, DeterministicAndPrefixStable) {
  const Eigen::VectorXd o_std = Eigen::VectorXd::LinSpaced(kObjectParams, 1.0, 10.0);
  const auto a = initial_agents(3, 42, o_std, 0.2);
  const auto b = initial_agents(5, 42, o_std, 0.2);
  const auto c = initial_agents(3, 43, o_std, 0.2);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(a[i].id, i);
    EXPECT_TRUE(a[i].o_hat == b[i].o_hat);
    EXPECT_TRUE(a[i].r_hat == b[i].r_hat);
    EXPECT_FALSE(a[i].o_hat == c[i].o_hat);
  }
  EXPECT_THROW(initial_agents(0, 1, o_std, 0.2), std::invalid_argument);
}

TEST(GainValidation, RejectsBadGains) {
  GainConfig g;
  EXPECT_NO_THROW(validate(g));
  GainConfig bad = g;
  bad.k_d(0, 0) = -1.0;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad = g;
  bad.lambda = 0.0;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad = g;
  bad.deadband = -0.1;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad = g;
  bad.gamma_o = Eigen::MatrixXd::Identity(4, 4);
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad = g;
  bad.gravity_column = Vector6d::Unit(2);
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad.gamma_o = Eigen::MatrixXd::Identity(kObjectParams + 1, kObjectParams + 1);
  EXPECT_NO_THROW(validate(bad));
  bad = g;
  bad.regularizer.kind = RegularizerKind::kSmoothedL1;
  bad.regularizer.epsilon = 0.0;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad.regularizer.epsilon = 1e-3;
  bad.regularizer.quadratic_floor = 1.0;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad.regularizer.quadratic_floor = 0.0;
  bad.regularizer.scale = Eigen::VectorXd::Ones(3);
  EXPECT_THROW(validate(bad), std::invalid_argument);
}
