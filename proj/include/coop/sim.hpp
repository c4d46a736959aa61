#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "coop/controller.hpp"
#include "coop/dynamics.hpp"
#include "coop/tracking.hpp"

namespace coop {

enum class MeasurementKind { kBroadcast, kCentroid };

struct MeasurementModel {
  MeasurementKind kind = MeasurementKind::kBroadcast;
  /// Broadcasting agent (0-based) for kBroadcast.
  int agent = 0;
};

struct Fault {
  double time = 0.0;
  std::vector<int> agents;
};

struct ScenarioConfig {
  std::string name = "custom";
  BodyParams body;
  int agent_count = 1;
  /// Diagonal of the initial o_hat covariance (one entry per object parameter).
  Eigen::VectorXd initial_cov_o = Eigen::VectorXd::Ones(kObjectParams);
  /// Isotropic initial r_hat covariance.
  double initial_cov_r = 2.0;
  std::uint64_t seed = 0;
  GainConfig gains;
  TrajectorySpec trajectory;
  double step = 1e-2;
  double duration = 60.0;
  MeasurementModel measurement;
  std::vector<Fault> faults;
  /// Initial plant pose relative to the desired one: position offset and
  /// rotation vector (R_0 = exp(rotation) R_d(0)), and twist offset from
  /// the desired rates at t = 0 (zero: no initial rate error).
  Vector3d initial_position_offset = Vector3d::Zero();
  Vector3d initial_rotation_offset = Vector3d::Zero();
  Twist initial_twist_offset = Twist::Zero();
  int record_stride = 10;
  /// Hold the stage-one wrenches and estimate rates through the corrector.
  bool zero_order_hold = false;
};

inline void validate(const ScenarioConfig& c) {
  validate(c.body);
  validate(c.gains);
  validate(c.trajectory);
  if (c.agent_count < 1) throw std::invalid_argument("agents.count must be at least 1");
  if (static_cast<int>(c.body.attachments.size()) != c.agent_count) {
    throw std::invalid_argument("agents.count must equal the number of body.attachments");
  }
  if (c.initial_cov_o.size() != c.gains.object_dim() || (c.initial_cov_o.array() < 0.0).any()) {
    throw std::invalid_argument(
        "agents.initial_cov_o: one nonnegative entry per object parameter required");
  }
  if (!(c.initial_cov_r >= 0.0)) throw std::invalid_argument("agents.initial_cov_r must be >= 0");
  if (!(c.step > 0.0) || !std::isfinite(c.step)) throw std::invalid_argument("step must be positive");
  if (!(c.duration > 0.0) || !std::isfinite(c.duration)) {
    throw std::invalid_argument("duration must be positive");
  }
  if (c.record_stride < 1) throw std::invalid_argument("record_stride must be at least 1");
  if (c.measurement.kind == MeasurementKind::kBroadcast &&
      (c.measurement.agent < 0 || c.measurement.agent >= c.agent_count)) {
    throw std::invalid_argument("measurement.agent is not a valid agent index");
  }
  for (const auto& f : c.faults) {
    if (!(f.time >= 0.0 && f.time <= c.duration)) {
      throw std::invalid_argument("faults.time must lie within [0, duration]");
    }
    for (int id : f.agents) {
      if (id < 0 || id >= c.agent_count) throw std::invalid_argument("faults.agents: bad agent index");
    }
  }
  if (!c.initial_position_offset.allFinite() || !c.initial_rotation_offset.allFinite() ||
      !c.initial_twist_offset.allFinite()) {
    throw std::invalid_argument("initial offsets must be finite");
  }
}

/// Body-frame offset of the measured point from P.
inline Vector3d measurement_offset(const BodyParams& body, const MeasurementModel& model) {
  if (model.kind == MeasurementKind::kBroadcast) {
    return body.attachments.at(static_cast<std::size_t>(model.agent));
  }
  Vector3d mean = Vector3d::Zero();
  for (const auto& r : body.attachments) mean += r;
  return mean / static_cast<double>(body.attachments.size());
}

/// Shared measurement of the configured point. Broadcast returns the
/// exact state of the broadcasting agent's point; the centroid model
/// averages the agents' positions and twists, which equals the state of the
/// attachment centroid.
inline Measurement measurement(const BodyParams& body, const Pose& q, const Twist& qd,
                               const MeasurementModel& model) {
  Measurement m;
  m.pose.R = q.R;
  if (model.kind == MeasurementKind::kBroadcast) {
    const Vector3d& r = body.attachments.at(static_cast<std::size_t>(model.agent));
    m.pose.x = q.x + q.R * r;
    m.twist = point_twist(q.R, r, qd);
    return m;
  }
  const double n = static_cast<double>(body.attachments.size());
  m.pose.x.setZero();
  m.twist.setZero();
  for (const auto& r : body.attachments) {
    m.pose.x += q.x + q.R * r;
    m.twist += point_twist(q.R, r, qd);
  }
  m.pose.x /= n;
  m.twist /= n;
  return m;
}

/// Scalar/vector Heun step for x' = f(t, x); exposed for testing the scheme.
template <class F, class X>
X heun_step(const F& f, const X& x, double t, double h) {
  const X k1 = f(t, x);
  const X xp = x + h * k1;
  const X k2 = f(t + h, xp);
  return x + 0.5 * h * (k1 + k2);
}

class SimulationAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlantState {
  Pose pose;
  Twist twist = Twist::Zero();
  std::vector<AgentState> agents;
};

/// Rows sampled every record_stride steps, plus per-step V and deadband
/// bookkeeping used by the monotonicity checks.
struct SimRecord {
  std::vector<double> t;
  std::vector<double> s_norm;
  std::vector<double> rot_err;
  std::vector<Vector3d> x_err;
  std::vector<double> v;
  /// [row][agent]
  std::vector<std::vector<double>> o_err_norm;
  std::vector<std::vector<double>> r_err_norm;
  std::vector<std::vector<Eigen::VectorXd>> o_hat;
  std::vector<std::vector<Vector3d>> r_hat;
  std::vector<std::vector<Wrench>> wrench;
  std::vector<Pose> pose;
  std::vector<Twist> twist;

  /// Per step k (time k h), k = 0..steps.
  std::vector<double> step_v;
  std::vector<double> step_s_norm;
  /// Whether adaptation ran on the step from k to k+1 (size steps).
  std::vector<char> step_adapting;
  double step = 0.0;
  int agent_count = 0;
  std::vector<AgentState> final_agents;
};

namespace detail {

struct StageEval {
  Twist qdd = Twist::Zero();
  std::vector<EstimateRates> rates;
  std::vector<Wrench> wrenches;
  TrackingTerms terms;
};

inline StageEval evaluate_stage(const ScenarioConfig& c, const PlantState& st,
                                const DesiredState& des, bool adapt,
                                const std::vector<Wrench>* held_wrench = nullptr) {
  StageEval ev;
  const Measurement meas = measurement(c.body, st.pose, st.twist, c.measurement);
  const std::size_t n = st.agents.size();
  ev.rates.resize(n);
  ev.wrenches.assign(n, Wrench::Zero());
  std::vector<AppliedWrench> applied(n);
  for (std::size_t i = 0; i < n; ++i) {
    const AgentState& a = st.agents[i];
    std::optional<Twist> v_self;
    if (c.gains.compensation == FrictionMode::kContact) {
      v_self = point_twist(st.pose.R, c.body.attachments[i], st.twist);
    }
    const ControlOutput out = agent_control(a, c.gains, meas, des, v_self, adapt);
    ev.rates[i] = out.estimate_rates;
    ev.wrenches[i] = held_wrench ? (*held_wrench)[i] : out.wrench;
    applied[i] = {ev.wrenches[i], a.active};
    if (i == 0) ev.terms = out.terms;
  }
  if (n == 0) ev.terms = tracking_terms(meas.pose, meas.twist, des, c.gains.lambda);
  ev.qdd = forward_dynamics(c.body, st.pose, st.twist, applied);
  return ev;
}

inline bool finite(const PlantState& st) {
  if (!st.pose.x.allFinite() || !st.pose.R.allFinite() || !st.twist.allFinite()) return false;
  for (const auto& a : st.agents) {
    if (!a.o_hat.allFinite() || !a.r_hat.allFinite() || !a.f_hat.allFinite() ||
        !a.d_hat.allFinite() || !a.c_hat.allFinite()) {
      return false;
    }
  }
  return true;
}

}  // namespace detail

/// Deterministic augmented-state simulator.
class Simulator {
 public:
  explicit Simulator(ScenarioConfig config)
      : cfg_(std::move(config)), traj_(cfg_.trajectory, cfg_.step) {
    validate(cfg_);
    meas_body_ = shifted(cfg_.body, measurement_offset(cfg_.body, cfg_.measurement));
    // Place the plant so that the measured point starts at the offset pose.
    const DesiredState d0 = traj_.state();
    const Matrix3d r0 = so3::exp(cfg_.initial_rotation_offset) * d0.pose.R;
    const Vector3d offset = measurement_offset(cfg_.body, cfg_.measurement);
    state_.pose.R = r0;
    state_.pose.x = d0.pose.x + cfg_.initial_position_offset - r0 * offset;
    // Measured point twist = desired rates + offset; P's twist follows from
    // M(offset)^T qd with the same angular rate.
    const Twist meas_twist = d0.rates + cfg_.initial_twist_offset;
    state_.twist = meas_twist;
    state_.twist.head<3>() -= meas_twist.tail<3>().cross(r0 * offset);
    state_.agents = initial_agents(cfg_.agent_count, cfg_.seed, cfg_.initial_cov_o.cwiseSqrt(),
                                   std::sqrt(cfg_.initial_cov_r));
  }

  const ScenarioConfig& config() const { return cfg_; }
  const PlantState& state() const { return state_; }
  PlantState& mutable_state() { return state_; }
  double time() const { return traj_.time(); }
  long steps() const { return steps_; }
  const BodyParams& measured_body() const { return meas_body_; }

  /// Composite error of the current state against the current desired state.
  TrackingTerms terms() const {
    const Measurement m = measurement(cfg_.body, state_.pose, state_.twist, cfg_.measurement);
    return tracking_terms(m.pose, m.twist, traj_.state(), cfg_.gains.lambda);
  }

  double lyapunov() const {
    return lyapunov_value(state_.agents, cfg_.gains, meas_body_,
                          measurement(cfg_.body, state_.pose, state_.twist, cfg_.measurement).pose,
                          terms().error.s);
  }

  /// Deactivates agents whose fault time has been reached.
  void apply_faults() {
    const double t = time();
    for (const auto& f : cfg_.faults) {
      if (t + 1e-9 * cfg_.step < f.time) continue;
      for (int id : f.agents) state_.agents[static_cast<std::size_t>(id)].active = false;
    }
  }

  /// One Heun step. Returns whether adaptation was enabled for it; the
  /// deadband test is made once at the start of the step.
  bool step() {
    apply_faults();
    const double h = cfg_.step;
    const DesiredState d0 = traj_.state();
    const bool adapt = outside_deadband(terms().error.s, cfg_.gains.deadband);

    const detail::StageEval e1 = detail::evaluate_stage(cfg_, state_, d0, adapt);
    PlantState pred;
    pred.pose.x = state_.pose.x + h * state_.twist.head<3>();
    pred.pose.R = so3::exp(h * state_.twist.tail<3>()) * state_.pose.R;
    pred.twist = state_.twist + h * e1.qdd;
    pred.agents.reserve(state_.agents.size());
    for (std::size_t i = 0; i < state_.agents.size(); ++i) {
      pred.agents.push_back(advanced(state_.agents[i], e1.rates[i], h));
    }

    if (!detail::finite(pred)) abort_at(steps_ + 1);

    detail::StageEval e2;
    if (cfg_.zero_order_hold) {
      e2 = e1;
      std::vector<AppliedWrench> applied(state_.agents.size());
      for (std::size_t i = 0; i < applied.size(); ++i) {
        applied[i] = {e1.wrenches[i], state_.agents[i].active};
      }
      e2.qdd = forward_dynamics(cfg_.body, pred.pose, pred.twist, applied);
    } else {
      e2 = detail::evaluate_stage(cfg_, pred, traj_.predicted(), adapt);
    }

    PlantState next;
    next.pose.x = state_.pose.x + 0.5 * h * (state_.twist.head<3>() + pred.twist.head<3>());
    next.pose.R = so3::exp(0.5 * h * (state_.twist.tail<3>() + pred.twist.tail<3>())) * state_.pose.R;
    next.twist = state_.twist + 0.5 * h * (e1.qdd + e2.qdd);
    next.agents.reserve(state_.agents.size());
    for (std::size_t i = 0; i < state_.agents.size(); ++i) {
      next.agents.push_back(advanced(state_.agents[i], e1.rates[i] + e2.rates[i], 0.5 * h));
    }
    last_wrenches_ = e1.wrenches;

    if (!detail::finite(next)) abort_at(steps_ + 1);
    traj_.advance();
    ++steps_;
    state_ = std::move(next);
    return adapt;
  }

  const std::vector<Wrench>& last_wrenches() const { return last_wrenches_; }

 private:
  [[noreturn]] void abort_at(long step) const {
    std::ostringstream msg;
    msg.precision(17);
    msg << "non-finite state at t = " << static_cast<double>(step) * cfg_.step << " s (step " << step
        << ")";
    throw SimulationAbort(msg.str());
  }

  ScenarioConfig cfg_;
  DesiredTrajectory traj_;
  BodyParams meas_body_;
  PlantState state_;
  long steps_ = 0;
  std::vector<Wrench> last_wrenches_;
};

namespace detail {

inline void record_row(SimRecord& rec, const Simulator& sim, double v) {
  const auto& cfg = sim.config();
  const TrackingTerms terms = sim.terms();
  rec.t.push_back(sim.time());
  rec.s_norm.push_back(terms.error.s.norm());
  rec.rot_err.push_back(so3::attitude_potential(terms.error.R_e));
  rec.x_err.push_back(terms.error.x_err);
  rec.v.push_back(v);

  const auto& agents = sim.state().agents;
  int n_active = 0;
  for (const auto& a : agents) n_active += a.active ? 1 : 0;
  const double alpha = n_active > 0 ? 1.0 / n_active : 0.0;
  std::vector<double> oe;
  std::vector<double> re;
  std::vector<Eigen::VectorXd> oh;
  std::vector<Vector3d> rh;
  for (const auto& a : agents) {
    const AgentTruth truth =
        agent_truth(sim.measured_body(), cfg.gains, a.id, a.active ? alpha : 0.0);
    oe.push_back((a.o_hat - truth.o).norm());
    re.push_back((a.r_hat - truth.r).norm());
    oh.push_back(a.o_hat);
    rh.push_back(a.r_hat);
  }
  rec.o_err_norm.push_back(std::move(oe));
  rec.r_err_norm.push_back(std::move(re));
  rec.o_hat.push_back(std::move(oh));
  rec.r_hat.push_back(std::move(rh));
  std::vector<Wrench> w = sim.last_wrenches();
  w.resize(agents.size(), Wrench::Zero());
  rec.wrench.push_back(std::move(w));
  rec.pose.push_back(sim.state().pose);
  rec.twist.push_back(sim.state().twist);
}

}  // namespace detail

/// Runs a scenario to its horizon. Throws SimulationAbort (with the time
/// stamp) if the state becomes non-finite.
inline SimRecord run(const ScenarioConfig& config) {
  Simulator sim(config);
  SimRecord rec;
  rec.step = config.step;
  rec.agent_count = config.agent_count;
  const long steps = static_cast<long>(std::llround(config.duration / config.step));

  sim.apply_faults();
  double v = sim.lyapunov();
  rec.step_v.push_back(v);
  rec.step_s_norm.push_back(sim.terms().error.s.norm());
  detail::record_row(rec, sim, v);
  for (long k = 0; k < steps; ++k) {
    rec.step_adapting.push_back(sim.step() ? 1 : 0);
    sim.apply_faults();
    v = sim.lyapunov();
    rec.step_v.push_back(v);
    rec.step_s_norm.push_back(sim.terms().error.s.norm());
    if ((k + 1) % config.record_stride == 0) detail::record_row(rec, sim, v);
  }
  rec.final_agents = sim.state().agents;
  return rec;
}

struct RunSummary {
  double final_s = 0.0;
  double mean_s = 0.0;
  /// First time ||s|| dropped to the deadband, or -1.
  double entered_deadband = -1.0;
};

inline RunSummary summarize(const SimRecord& rec, double deadband) {
  RunSummary out;
  if (rec.step_s_norm.empty()) return out;
  out.final_s = rec.step_s_norm.back();
  out.mean_s = std::accumulate(rec.step_s_norm.begin(), rec.step_s_norm.end(), 0.0) /
               static_cast<double>(rec.step_s_norm.size());
  for (std::size_t k = 0; k < rec.step_s_norm.size(); ++k) {
    if (rec.step_s_norm[k] <= deadband) {
      out.entered_deadband = static_cast<double>(k) * rec.step;
      break;
    }
  }
  return out;
}

/// The Gamma_r = 0 variant: only the object parameters adapt.
inline ScenarioConfig without_geometric_adaptation(ScenarioConfig c) {
  c.name += "_no_geom";
  c.gains.gamma_r.setZero();
  return c;
}

/// PD-only variant: estimates pinned at zero and never adapted.
inline ScenarioConfig pd_only(ScenarioConfig c) {
  c.name += "_pd";
  c.initial_cov_o.setZero();
  c.initial_cov_r = 0.0;
  c.gains.gamma_o.setZero();
  c.gains.gamma_r.setZero();
  c.gains.gamma_f.setZero();
  c.gains.gamma_d.setZero();
  c.gains.gamma_c.setZero();
  return c;
}

struct BaselineReport {
  RunSummary nominal;
  RunSummary no_geom;
  RunSummary pd;
};

inline BaselineReport compare_baselines(const ScenarioConfig& config) {
  const double db = config.gains.deadband;
  return {summarize(run(config), db), summarize(run(without_geometric_adaptation(config)), db),
          summarize(run(pd_only(config)), db)};
}

}  // namespace coop
