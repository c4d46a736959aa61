#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "coop/dynamics.hpp"
#include "coop/regressors.hpp"
#include "coop/tracking.hpp"

namespace coop {

enum class RegularizerKind { kQuadratic, kSmoothedL1 };

/// Potential used for the object-parameter adaptation law. For the
/// smoothed l1 case, psi(a) = sum_k (scale_k^2 / gamma_k) phi(a_k / scale_k)
/// with curvature
///   phi''(x) = ((1 - mu) c(x) + mu) / ((1 - mu) c(x_ref) + mu),
///   c(x) = (eps^2 / (x^2 + eps^2))^{3/2},
/// i.e. a scaled sqrt(x^2 + eps^2) plus a quadratic floor mu. phi''(x_ref) = 1,
/// so parameters of magnitude x_ref adapt as under the quadratic potential.
/// mu = 0 is the pure smoothed l1 potential.
struct Regularizer {
  RegularizerKind kind = RegularizerKind::kQuadratic;
  double epsilon = 1e-3;
  double quadratic_floor = 0.0;
  double reference_magnitude = 0.0;
  /// Per-parameter normalization; empty means all ones.
  Eigen::VectorXd scale;
};

struct GainConfig {
  Eigen::MatrixXd gamma_o = Eigen::MatrixXd::Identity(kObjectParams, kObjectParams);
  Matrix3d gamma_r = 1e-3 * Matrix3d::Identity();
  Matrix6d gamma_f = Matrix6d::Identity();
  Eigen::MatrixXd gamma_d = Eigen::MatrixXd::Identity(kContactViscousParams, kContactViscousParams);
  Eigen::MatrixXd gamma_c = Eigen::MatrixXd::Identity(kContactCoulombParams, kContactCoulombParams);
  Matrix6d k_d = Matrix6d::Identity();
  double lambda = 1.5;
  double deadband = 0.01;
  Regularizer regularizer;
  /// Friction terms the agents compensate for.
  FrictionMode compensation = FrictionMode::kNone;
  /// When set, the object regressor carries this constant column.
  std::optional<Vector6d> gravity_column;

  int object_dim() const { return kObjectParams + (gravity_column ? 1 : 0); }
};

inline bool is_spd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + m.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

/// Positive semidefinite with zero allowed (Gamma_r = 0 switches geometric
/// adaptation off).
inline bool is_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + m.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  return eig.eigenvalues().minCoeff() >= -1e-12 * (1.0 + m.cwiseAbs().maxCoeff());
}

/// Adaptation gains may be zero (that disables the corresponding law);
/// K_D must be positive definite.
inline void validate(const GainConfig& g) {
  if (g.gamma_o.rows() != g.object_dim()) {
    throw std::invalid_argument("gains.gamma_o: dimension does not match the object parameters");
  }
  if (!is_psd(g.gamma_o)) throw std::invalid_argument("gains.gamma_o must be symmetric PSD");
  if (!is_psd(g.gamma_r)) throw std::invalid_argument("gains.gamma_r must be symmetric PSD");
  if (!is_psd(g.gamma_f)) throw std::invalid_argument("gains.gamma_f must be symmetric PSD");
  if (g.gamma_d.rows() != kContactViscousParams || !is_psd(g.gamma_d)) {
    throw std::invalid_argument("gains.gamma_d must be a 33x33 symmetric PSD matrix");
  }
  if (g.gamma_c.rows() != kContactCoulombParams || !is_psd(g.gamma_c)) {
    throw std::invalid_argument("gains.gamma_c must be a 15x15 symmetric PSD matrix");
  }
  if (!is_spd(g.k_d)) throw std::invalid_argument("gains.k_d must be symmetric positive definite");
  if (!(g.lambda > 0.0) || !std::isfinite(g.lambda)) {
    throw std::invalid_argument("gains.lambda must be positive");
  }
  if (!(g.deadband >= 0.0)) throw std::invalid_argument("gains.deadband must be nonnegative");
  if (g.regularizer.kind == RegularizerKind::kSmoothedL1) {
    if (!(g.regularizer.epsilon > 0.0)) {
      throw std::invalid_argument("gains.regularizer.epsilon must be positive");
    }
    if (!(g.regularizer.quadratic_floor >= 0.0 && g.regularizer.quadratic_floor < 1.0)) {
      throw std::invalid_argument("gains.regularizer.quadratic_floor must lie in [0, 1)");
    }
    if (!(g.regularizer.reference_magnitude >= 0.0) ||
        !std::isfinite(g.regularizer.reference_magnitude)) {
      throw std::invalid_argument("gains.regularizer.reference_magnitude must be >= 0");
    }
    if (!g.gamma_o.isDiagonal()) {
      throw std::invalid_argument("gains.gamma_o must be diagonal for the smoothed l1 regularizer");
    }
  }
  if (g.regularizer.scale.size() != 0 &&
      (g.regularizer.scale.size() != g.object_dim() || (g.regularizer.scale.array() <= 0.0).any())) {
    throw std::invalid_argument("gains.regularizer.scale: one positive entry per object parameter");
  }
}

/// Gains of the reference 3D study. Gamma_o is scaled by the true
/// parameter magnitudes.
inline GainConfig reference_gains(const BodyParams& body) {
  GainConfig g;
  const ObjectParamVec o = object_params(body);
  g.gamma_o = (0.3 * (o.cwiseAbs().array() + 0.01)).matrix().asDiagonal();
  g.gamma_r = 1e-3 * Matrix3d::Identity();
  g.k_d.setZero();
  g.k_d.diagonal() << 5e4, 5e4, 5e4, 5e3, 5e3, 5e3;
  g.lambda = 1.5;
  g.deadband = 0.01;
  return g;
}

/// One agent's local estimates.
struct AgentState {
  int id = 0;
  bool active = true;
  Eigen::VectorXd o_hat = Eigen::VectorXd::Zero(kObjectParams);
  Vector3d r_hat = Vector3d::Zero();
  Vector6d f_hat = Vector6d::Zero();
  Eigen::VectorXd d_hat = Eigen::VectorXd::Zero(kContactViscousParams);
  Eigen::VectorXd c_hat = Eigen::VectorXd::Zero(kContactCoulombParams);
};

/// Time derivatives of every estimate in AgentState.
struct EstimateRates {
  Eigen::VectorXd o;
  Vector3d r = Vector3d::Zero();
  Vector6d f = Vector6d::Zero();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(kContactViscousParams);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(kContactCoulombParams);

  static EstimateRates zero(int object_dim) {
    EstimateRates r;
    r.o = Eigen::VectorXd::Zero(object_dim);
    return r;
  }
};

/// state + scale * rates (inactive agents are returned unchanged).
inline AgentState advanced(const AgentState& a, const EstimateRates& rates, double scale) {
  if (!a.active) return a;
  AgentState out = a;
  out.o_hat += scale * rates.o;
  out.r_hat += scale * rates.r;
  out.f_hat += scale * rates.f;
  out.d_hat += scale * rates.d;
  out.c_hat += scale * rates.c;
  return out;
}

inline EstimateRates operator+(const EstimateRates& a, const EstimateRates& b) {
  EstimateRates out;
  out.o = a.o + b.o;
  out.r = a.r + b.r;
  out.f = a.f + b.f;
  out.d = a.d + b.d;
  out.c = a.c + b.c;
  return out;
}

/// Shared measurement of the tracked point.
struct Measurement {
  Pose pose;
  Twist twist = Twist::Zero();
};

/// Regressors evaluated at one measurement.
struct AgentRegressors {
  Eigen::MatrixXd y_o;
  Matrix6d y_f = Matrix6d::Zero();
  Eigen::MatrixXd y_d;
  Eigen::MatrixXd y_c;
};

inline AgentRegressors agent_regressors(const GainConfig& gains, const Measurement& meas,
                                        const TrackingTerms& terms,
                                        const std::optional<Twist>& v_self) {
  AgentRegressors y;
  if (gains.gravity_column) {
    y.y_o = regressor_object_with_gravity(meas.pose, meas.twist, terms.qd_r, terms.qdd_r,
                                          *gains.gravity_column);
  } else {
    y.y_o = regressor_object(meas.pose, meas.twist, terms.qd_r, terms.qdd_r);
  }
  switch (gains.compensation) {
    case FrictionMode::kNone:
      break;
    case FrictionMode::kBodyViscous:
      y.y_f = regressor_body_friction(meas.pose.R, terms.qd_r);
      break;
    case FrictionMode::kContact:
      if (!v_self) {
        throw std::invalid_argument("contact friction compensation needs the agent's own twist");
      }
      y.y_d = regressor_contact_viscous(meas.pose.R, terms.qd_r);
      y.y_c = regressor_contact_coulomb(meas.pose.R, *v_self);
      break;
  }
  return y;
}

namespace detail {

inline Eigen::VectorXd regularizer_scale(const Regularizer& reg, Eigen::Index n) {
  return reg.scale.size() == n ? reg.scale : Eigen::VectorXd::Ones(n);
}

inline double l1_c(double x, double eps) {
  const double ratio = (eps * eps) / (x * x + eps * eps);
  return ratio * std::sqrt(ratio);
}

/// Normalization 1 / ((1 - mu) c(x_ref) + mu).
inline double l1_norm(const Regularizer& reg) {
  const double mu = reg.quadratic_floor;
  return 1.0 / ((1.0 - mu) * l1_c(reg.reference_magnitude, reg.epsilon) + mu);
}

/// 1 / phi''(x) for the smoothed l1 potential.
inline double l1_inverse_curvature(double x, const Regularizer& reg) {
  const double mu = reg.quadratic_floor;
  const double curvature = ((1.0 - mu) * l1_c(x, reg.epsilon) + mu) * l1_norm(reg);
  if (!(curvature > 0.0) || !std::isfinite(1.0 / curvature)) {
    throw std::domain_error("bregman_rates: potential Hessian is not positive definite");
  }
  return 1.0 / curvature;
}

inline double l1_phi(double x, const Regularizer& reg) {
  const double eps = reg.epsilon;
  const double mu = reg.quadratic_floor;
  return ((1.0 - mu) * eps * (std::sqrt(x * x + eps * eps) - eps) + 0.5 * mu * x * x) *
         l1_norm(reg);
}

inline double l1_dphi(double x, const Regularizer& reg) {
  const double eps = reg.epsilon;
  const double mu = reg.quadratic_floor;
  return ((1.0 - mu) * eps * x / std::sqrt(x * x + eps * eps) + mu * x) * l1_norm(reg);
}

}  // namespace detail

/// Mirror-descent form of the object-parameter law,
/// a_dot = -(Hess psi(a))^{-1} Y^T s. For the quadratic potential this is
/// exactly -Gamma Y^T s.
inline Eigen::VectorXd bregman_rates(const Eigen::VectorXd& estimate, const Eigen::MatrixXd& gamma,
                                     const Regularizer& reg, const Eigen::MatrixXd& y,
                                     const Vector6d& s) {
  const Eigen::VectorXd g = y.transpose() * s;
  if (reg.kind == RegularizerKind::kQuadratic) return -gamma * g;
  if (!gamma.isDiagonal()) {
    throw std::invalid_argument("bregman_rates: smoothed l1 requires a diagonal gain");
  }
  if (!(reg.epsilon > 0.0)) {
    throw std::domain_error("bregman_rates: potential Hessian is not positive definite");
  }
  const Eigen::VectorXd scale = detail::regularizer_scale(reg, estimate.size());
  Eigen::VectorXd rates(estimate.size());
  for (Eigen::Index k = 0; k < estimate.size(); ++k) {
    rates(k) = -gamma(k, k) *
               detail::l1_inverse_curvature(estimate(k) / scale(k), reg) * g(k);
  }
  return rates;
}

/// Bregman divergence psi(a) - psi(a_hat) - (a - a_hat)^T grad psi(a_hat) of
/// the object-parameter potential, linearized at the estimate so that its
/// rate along bregman_rates is -(a_hat - a)^T Y^T s. Reduces to
/// 0.5 e^T Gamma^{-1} e for the quadratic case.
inline double bregman_divergence(const Eigen::VectorXd& truth, const Eigen::VectorXd& estimate,
                                 const Eigen::MatrixXd& gamma, const Regularizer& reg) {
  const Eigen::VectorXd e = estimate - truth;
  if (reg.kind == RegularizerKind::kQuadratic) {
    return 0.5 * e.dot(gamma.ldlt().solve(e));
  }
  const Eigen::VectorXd scale = detail::regularizer_scale(reg, truth.size());
  double d = 0.0;
  for (Eigen::Index k = 0; k < truth.size(); ++k) {
    const double w = scale(k) * scale(k) / gamma(k, k);
    const double xa = truth(k) / scale(k);
    const double xb = estimate(k) / scale(k);
    d += w * (detail::l1_phi(xa, reg) - detail::l1_phi(xb, reg) -
              (xa - xb) * detail::l1_dphi(xb, reg));
  }
  return d;
}

/// Adaptation laws given the composite error, regressors, and the wrench
/// precursor F that produced this step's wrench. Zero when `adapt` is false;
/// the simulator decides `adapt` from the deadband once per step.
inline EstimateRates adaptation_rates(const AgentState& agent, const GainConfig& gains,
                                      const Matrix3d& R, const AgentRegressors& y,
                                      const Vector6d& s, const Wrench& f_precursor, bool adapt) {
  EstimateRates rates = EstimateRates::zero(gains.object_dim());
  if (!agent.active || !adapt) return rates;
  rates.o = bregman_rates(agent.o_hat, gains.gamma_o, gains.regularizer, y.y_o, s);
  rates.r = -gains.gamma_r * (regressor_geometric(f_precursor, R).transpose() * s);
  switch (gains.compensation) {
    case FrictionMode::kNone:
      break;
    case FrictionMode::kBodyViscous:
      rates.f = -gains.gamma_f * (y.y_f.transpose() * s);
      break;
    case FrictionMode::kContact:
      rates.d = -gains.gamma_d * (y.y_d.transpose() * s);
      rates.c = -gains.gamma_c * (y.y_c.transpose() * s);
      break;
  }
  return rates;
}

inline bool outside_deadband(const Vector6d& s, double deadband) { return s.norm() > deadband; }

struct ControlOutput {
  Wrench wrench = Wrench::Zero();
  /// F_i, the wrench before the grasp inverse.
  Wrench precursor = Wrench::Zero();
  EstimateRates estimate_rates;
  TrackingTerms terms;
};

/// tau_i = M(-r_hat) F_i with F_i = Y_o o_hat - K_D s plus the friction
/// feedforward of the compensated mode. `adapt` overrides the deadband test.
inline ControlOutput agent_control(const AgentState& agent, const GainConfig& gains,
                                   const Measurement& meas, const DesiredState& des,
                                   const std::optional<Twist>& v_self = std::nullopt,
                                   std::optional<bool> adapt = std::nullopt) {
  ControlOutput out;
  out.terms = tracking_terms(meas.pose, meas.twist, des, gains.lambda);
  out.estimate_rates = EstimateRates::zero(gains.object_dim());
  if (!agent.active) return out;
  if (agent.o_hat.size() != gains.object_dim()) {
    throw std::invalid_argument("agent_control: o_hat size does not match the gain configuration");
  }
  const Vector6d& s = out.terms.error.s;
  const AgentRegressors y = agent_regressors(gains, meas, out.terms, v_self);

  Wrench f = y.y_o * agent.o_hat - gains.k_d * s;
  switch (gains.compensation) {
    case FrictionMode::kNone:
      break;
    case FrictionMode::kBodyViscous:
      f += y.y_f * agent.f_hat;
      break;
    case FrictionMode::kContact:
      f += y.y_d * agent.d_hat + y.y_c * agent.c_hat;
      break;
  }
  out.precursor = f;
  out.wrench = apply_grasp(meas.pose.R, -agent.r_hat, f);
  const bool on = adapt.value_or(outside_deadband(s, gains.deadband));
  out.estimate_rates = adaptation_rates(agent, gains, meas.pose.R, y, s, f, on);
  return out;
}

/// Per-agent parameter truths under effort share alpha.
struct AgentTruth {
  Eigen::VectorXd o;
  Vector3d r = Vector3d::Zero();
  Vector6d f = Vector6d::Zero();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(kContactViscousParams);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(kContactCoulombParams);
};

inline AgentTruth agent_truth(const BodyParams& body, const GainConfig& gains, int id,
                              double alpha) {
  if (id < 0 || id >= static_cast<int>(body.attachments.size())) {
    throw std::out_of_range("agent_truth: agent id has no attachment");
  }
  AgentTruth t;
  t.o = Eigen::VectorXd::Zero(gains.object_dim());
  t.o.head<kObjectParams>() = alpha * object_params(body);
  if (gains.gravity_column) t.o(kObjectParams) = alpha;
  t.r = body.attachments[id];
  t.f = alpha * body.friction.viscous_body;
  if (body.friction.mode == FrictionMode::kContact) {
    t.d = lump_contact_viscous(body.friction.viscous_contact[id], t.r);
    t.c = lump_contact_coulomb(body.friction.coulomb_contact[id], t.r);
  }
  return t;
}

namespace detail {

inline double quad_inv(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& e) {
  if (e.isZero(0.0)) return 0.0;
  return 0.5 * e.dot(gamma.ldlt().solve(e));
}

}  // namespace detail

/// Parameter-error part of V for one agent. Blocks with zero gain are
/// not adapted and are left out.
inline double estimate_energy(const AgentState& a, const GainConfig& gains,
                              const AgentTruth& truth) {
  double v = bregman_divergence(truth.o, a.o_hat, gains.gamma_o, gains.regularizer);
  if (!gains.gamma_r.isZero(0.0)) v += detail::quad_inv(gains.gamma_r, a.r_hat - truth.r);
  switch (gains.compensation) {
    case FrictionMode::kNone:
      break;
    case FrictionMode::kBodyViscous:
      v += detail::quad_inv(gains.gamma_f, a.f_hat - truth.f);
      break;
    case FrictionMode::kContact:
      v += detail::quad_inv(gains.gamma_d, a.d_hat - truth.d);
      v += detail::quad_inv(gains.gamma_c, a.c_hat - truth.c);
      break;
  }
  return v;
}

/// V = 1/2 s^T H s + sum of the estimate energies, with true per-agent
/// parameters alpha_i o: alpha_i = 1 / (number active) for active agents and
/// 0 for deactivated ones, whose frozen estimates stay in the sum.
/// `body` must be expressed about the measurement point.
inline double lyapunov_value(std::span<const AgentState> agents, const GainConfig& gains,
                             const BodyParams& body, const Pose& q, const Vector6d& s) {
  int n_active = 0;
  for (const auto& a : agents) n_active += a.active ? 1 : 0;
  double v = 0.5 * s.dot(inertia_matrix(body, q) * s);
  const double alpha = n_active > 0 ? 1.0 / n_active : 0.0;
  for (const auto& a : agents) {
    v += estimate_energy(a, gains, agent_truth(body, gains, a.id, a.active ? alpha : 0.0));
  }
  return v;
}

/// Initial estimates: o_hat ~ N(0, diag(o_std)^2), r_hat ~ N(0, r_std^2 I),
/// friction estimates zero. Each agent draws from its own stream seeded by
/// (seed, id), so adding agents leaves existing draws unchanged.
inline std::vector<AgentState> initial_agents(int n, std::uint64_t seed,
                                              const Eigen::VectorXd& o_std, double r_std) {
  if (n < 1) throw std::invalid_argument("agents.count must be at least 1");
  std::vector<AgentState> agents;
  agents.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    AgentState a;
    a.id = i;
    a.o_hat.resize(o_std.size());
    for (Eigen::Index k = 0; k < o_std.size(); ++k) a.o_hat(k) = o_std(k) * normal(rng);
    for (int k = 0; k < 3; ++k) a.r_hat(k) = r_std * normal(rng);
    agents.push_back(std::move(a));
  }
  return agents;
}

}  // namespace coop
