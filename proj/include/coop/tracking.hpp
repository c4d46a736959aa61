#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "coop/dynamics.hpp"
#include "coop/so3.hpp"

namespace coop {

/// offset + sum_k amplitude_k * cos(frequency_k * t + phase_k). Phases may
/// be left empty (all zero).
struct SinusoidChannel {
  double offset = 0.0;
  std::vector<double> amplitudes;
  std::vector<double> frequencies;  // rad/s
  std::vector<double> phases;       // rad

  double phase(std::size_t k) const { return phases.empty() ? 0.0 : phases[k]; }

  double value(double t) const {
    double v = offset;
    for (std::size_t k = 0; k < amplitudes.size(); ++k) {
      v += amplitudes[k] * std::cos(frequencies[k] * t + phase(k));
    }
    return v;
  }

  double derivative(double t) const {
    double d = 0.0;
    for (std::size_t k = 0; k < amplitudes.size(); ++k) {
      d -= amplitudes[k] * frequencies[k] * std::sin(frequencies[k] * t + phase(k));
    }
    return d;
  }
};

/// Desired twist of the measurement point as six sinusoid banks
/// (vx, vy, vz, wx, wy, wz; world frame), plus the initial desired pose.
struct TrajectorySpec {
  std::array<SinusoidChannel, 6> channels;
  Pose initial;

  Twist rates(double t) const {
    Twist v;
    for (int k = 0; k < 6; ++k) v(k) = channels[k].value(t);
    return v;
  }

  Accel accel(double t) const {
    Accel a;
    for (int k = 0; k < 6; ++k) a(k) = channels[k].derivative(t);
    return a;
  }
};

inline void validate(const TrajectorySpec& spec) {
  for (int k = 0; k < 6; ++k) {
    const auto& c = spec.channels[k];
    const std::string where = "trajectory.channels[" + std::to_string(k) + "]";
    if (c.amplitudes.size() != c.frequencies.size()) {
      throw std::invalid_argument(where + ": amplitudes and frequencies differ in length");
    }
    if (!c.phases.empty() && c.phases.size() != c.amplitudes.size()) {
      throw std::invalid_argument(where + ": phases must be empty or match amplitudes");
    }
    if (c.amplitudes.empty()) {
      throw std::invalid_argument(where + ": at least one frequency is required");
    }
    if (!std::isfinite(c.offset)) throw std::invalid_argument(where + ".offset is not finite");
    for (std::size_t i = 0; i < c.amplitudes.size(); ++i) {
      if (!std::isfinite(c.amplitudes[i]) || !std::isfinite(c.frequencies[i]) ||
          !std::isfinite(c.phase(i))) {
        throw std::invalid_argument(where + ": non-finite coefficient");
      }
    }
  }
  if (!spec.initial.x.allFinite() || !so3::is_rotation(spec.initial.R)) {
    throw std::invalid_argument("trajectory.initial: invalid pose");
  }
}

/// Five-frequency bank used by the canned scenarios. Amplitudes and
/// frequencies are configuration, not measured data; phases follow a
/// golden-ratio sequence so the channels do not share zero crossings.
inline TrajectorySpec default_trajectory() {
  TrajectorySpec spec;
  const std::array<std::array<double, 5>, 6> freqs = {{
      {0.165, 0.4455, 0.7425, 1.1715, 1.65},
      {0.2145, 0.5115, 0.858, 1.2705, 1.5675},
      {0.2805, 0.3795, 0.957, 1.089, 1.4685},
      {0.11, 0.37, 0.49, 0.83, 0.97},
      {0.19, 0.29, 0.41, 0.61, 0.91},
      {0.15, 0.35, 0.55, 0.74, 0.86},
  }};
  const std::array<double, 5> lin_amp = {0.55, 0.44, 0.33, 0.22, 0.11};
  const std::array<double, 5> ang_amp = {0.1, 0.075, 0.05, 0.05, 0.05};
  constexpr double kGolden = 0.6180339887498949;
  for (int k = 0; k < 6; ++k) {
    auto& c = spec.channels[k];
    const auto& amp = k < 3 ? lin_amp : ang_amp;
    c.amplitudes.assign(amp.begin(), amp.end());
    c.frequencies.assign(freqs[k].begin(), freqs[k].end());
    for (int j = 0; j < 5; ++j) {
      const double u = kGolden * (5 * k + j + 1);
      c.phases.push_back(2.0 * std::numbers::pi * (u - std::floor(u)));
    }
  }
  return spec;
}

struct DesiredState {
  Pose pose;
  Twist rates = Twist::Zero();
  Accel accel = Accel::Zero();
};

/// Desired pose generated by integrating the desired twist with Heun's
/// method and exponential-map rotation updates, the same scheme as the plant.
class DesiredTrajectory {
 public:
  DesiredTrajectory(TrajectorySpec spec, double step)
      : spec_(std::move(spec)), step_(step), pose_(spec_.initial) {
    if (!(step > 0.0)) throw std::invalid_argument("trajectory step must be positive");
  }

  double time() const { return time_; }
  double step() const { return step_; }
  const TrajectorySpec& spec() const { return spec_; }

  DesiredState state() const { return {pose_, spec_.rates(time_), spec_.accel(time_)}; }

  /// Pose after one step from `pose` at time `t`, with step `h`.
  Pose propagate(const Pose& pose, double t, double h) const {
    const Twist v0 = spec_.rates(t);
    const Twist v1 = spec_.rates(t + h);
    Pose next;
    next.x = pose.x + 0.5 * h * (v0.head<3>() + v1.head<3>());
    next.R = so3::exp(0.5 * h * (v0.tail<3>() + v1.tail<3>())) * pose.R;
    return next;
  }

  /// Predictor stage used inside the plant integrator.
  DesiredState predicted() const {
    const Twist v0 = spec_.rates(time_);
    Pose p;
    p.x = pose_.x + step_ * v0.head<3>();
    p.R = so3::exp(step_ * v0.tail<3>()) * pose_.R;
    return {p, spec_.rates(time_ + step_), spec_.accel(time_ + step_)};
  }

  void advance() {
    pose_ = propagate(pose_, time_, step_);
    ++steps_;
    time_ = static_cast<double>(steps_) * step_;
  }

 private:
  TrajectorySpec spec_;
  double step_;
  Pose pose_;
  long steps_ = 0;
  double time_ = 0.0;
};

/// Desired state at time t >= 0, integrated from t = 0 with step h (the
/// final step is shortened when t is not a multiple of h).
inline DesiredState desired_state(const TrajectorySpec& spec, double t, double h) {
  if (t < 0.0) throw std::invalid_argument("desired_state: t must be nonnegative");
  DesiredTrajectory traj(spec, h);
  const long full = static_cast<long>(std::floor(t / h + 1e-9));
  for (long k = 0; k < full; ++k) traj.advance();
  DesiredState out = traj.state();
  const double rest = t - traj.time();
  if (rest > 1e-12) out.pose = traj.propagate(out.pose, traj.time(), rest);
  out.rates = spec.rates(t);
  out.accel = spec.accel(t);
  return out;
}

struct CompositeError {
  Vector6d s = Vector6d::Zero();
  Vector3d x_err = Vector3d::Zero();
  Matrix3d R_e = Matrix3d::Identity();
  Vector3d w_e = Vector3d::Zero();
};

inline void require_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("lambda must be a nonnegative finite number");
  }
}

inline CompositeError composite_error(const Pose& q, const Twist& qd, const DesiredState& des,
                                      double lambda) {
  require_lambda(lambda);
  CompositeError e;
  e.x_err = q.x - des.pose.x;
  e.R_e = so3::rotation_error(q.R, des.pose.R);
  e.w_e = qd.tail<3>() - des.rates.tail<3>();
  e.s.head<3>() = (qd.head<3>() - des.rates.head<3>()) + lambda * e.x_err;
  e.s.tail<3>() = e.w_e + lambda * des.pose.R * so3::skew_vector(e.R_e);
  return e;
}

/// qd_r such that s = qd - qd_r.
inline Twist reference_velocity(const Pose& q, const DesiredState& des, double lambda) {
  require_lambda(lambda);
  const Matrix3d r_e = so3::rotation_error(q.R, des.pose.R);
  Twist r;
  r.head<3>() = des.rates.head<3>() - lambda * (q.x - des.pose.x);
  r.tail<3>() = des.rates.tail<3>() - lambda * des.pose.R * so3::skew_vector(r_e);
  return r;
}

/// Exact time derivative of reference_velocity along the true flow.
inline Accel reference_accel(const Pose& q, const Twist& qd, const DesiredState& des,
                             double lambda) {
  require_lambda(lambda);
  const Matrix3d& r_d = des.pose.R;
  const Matrix3d r_e = so3::rotation_error(q.R, r_d);
  const Vector3d w_d = des.rates.tail<3>();
  const Vector3d w_e = qd.tail<3>() - w_d;
  const Matrix3d r_d_dot = so3::hat(w_d) * r_d;
  const Matrix3d r_e_dot = so3::hat(r_d.transpose() * w_e) * r_e;
  Accel a;
  a.head<3>() = des.accel.head<3>() - lambda * (qd.head<3>() - des.rates.head<3>());
  a.tail<3>() = des.accel.tail<3>() -
                lambda * (r_d_dot * so3::skew_vector(r_e) + r_d * so3::skew_vector(r_e_dot));
  return a;
}

/// Composite error together with the reference signals the controller needs.
struct TrackingTerms {
  CompositeError error;
  Twist qd_r = Twist::Zero();
  Accel qdd_r = Accel::Zero();
};

inline TrackingTerms tracking_terms(const Pose& q, const Twist& qd, const DesiredState& des,
                                    double lambda) {
  TrackingTerms t;
  t.error = composite_error(q, qd, des, lambda);
  t.qd_r = qd - t.error.s;
  t.qdd_r = reference_accel(q, qd, des, lambda);
  return t;
}

/// Samples of the attitude flow restricted to sigma = 0.
struct ReducedFlowReport {
  std::vector<double> t;
  std::vector<double> v_r;        // tr(I - R_e)
  std::vector<double> v_r_rate;   // -2 lambda ||P_a(R_e)^vee||^2
  std::vector<double> q0_sq;      // 1 - V_R / 4
  Matrix3d final_r_e = Matrix3d::Identity();

  /// V_R(0) exp(-2 lambda q0^2(0) t), the exponential envelope.
  double envelope(std::size_t k, double lambda) const {
    return v_r.front() * std::exp(-2.0 * lambda * q0_sq.front() * t[k]);
  }
};

/// Integrates dR_e/dt = -lambda P_a(R_e) R_e with exponential-map Heun
/// steps of sample_dt / substeps, sampling every sample_dt.
inline ReducedFlowReport reduced_flow_check(const Matrix3d& r_e0, double lambda, double duration,
                                            double sample_dt = -1.0, int substeps = 20) {
  if (!so3::is_rotation(r_e0)) throw std::invalid_argument("reduced_flow_check: R_e0 is not a rotation");
  if (r_e0.trace() <= -1.0 + 1e-6) {
    throw std::invalid_argument("reduced_flow_check: tr(R_e0) = -1 is excluded");
  }
  if (!(lambda > 0.0)) throw std::invalid_argument("reduced_flow_check: lambda must be positive");
  if (!(duration > 0.0)) throw std::invalid_argument("reduced_flow_check: duration must be positive");
  if (sample_dt <= 0.0) sample_dt = 0.01 / lambda;
  const double h = sample_dt / substeps;
  const auto field = [lambda](const Matrix3d& r) -> Vector3d {
    return -lambda * so3::skew_vector(r);
  };

  ReducedFlowReport rep;
  Matrix3d r = r_e0;
  const auto record = [&](double t) {
    const double v = so3::attitude_potential(r);
    rep.t.push_back(t);
    rep.v_r.push_back(v);
    rep.v_r_rate.push_back(-2.0 * lambda * so3::skew_vector(r).squaredNorm());
    rep.q0_sq.push_back(1.0 - 0.25 * v);
  };
  record(0.0);
  const long samples = static_cast<long>(std::ceil(duration / sample_dt - 1e-9));
  for (long k = 1; k <= samples; ++k) {
    for (int j = 0; j < substeps; ++j) {
      const Vector3d w1 = field(r);
      const Matrix3d rp = so3::exp(h * w1) * r;
      const Vector3d w2 = field(rp);
      r = so3::exp(0.5 * h * (w1 + w2)) * r;
    }
    record(static_cast<double>(k) * sample_dt);
  }
  rep.final_r_e = r;
  return rep;
}

}  // namespace coop
