#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "coop/controller.hpp"
#include "coop/dynamics.hpp"
#include "coop/regressors.hpp"
#include "coop/scenarios.hpp"
#include "coop/tracking.hpp"

namespace coop {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// Functions under test. Tests swap entries to confirm a check can fail.
struct CheckHooks {
  std::function<GeomRegressor(const Wrench&, const Matrix3d&)> geometric = regressor_geometric;
};

/// Random instances for the oracle checks.
class InstanceGenerator {
 public:
  explicit InstanceGenerator(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  Vector3d vec3(double scale = 1.0) { return scale * Vector3d(gauss(), gauss(), gauss()); }

  Vector6d vec6(double scale = 1.0) {
    Vector6d v;
    for (int k = 0; k < 6; ++k) v(k) = scale * gauss();
    return v;
  }

  Vector6d positive6(double lo, double hi) {
    Vector6d v;
    for (int k = 0; k < 6; ++k) v(k) = uniform(lo, hi);
    return v;
  }

  /// Uniform on SO(3) via a normalized Gaussian quaternion.
  Matrix3d rotation() {
    Eigen::Quaterniond q(gauss(), gauss(), gauss(), gauss());
    q.normalize();
    return q.toRotationMatrix();
  }

  Pose pose() {
    Pose p;
    p.x = vec3(2.0);
    p.R = rotation();
    return p;
  }

  /// Body with a physically valid principal inertia, arbitrary orientation.
  BodyParams body(int attachments = 3) {
    BodyParams b;
    b.mass = uniform(0.5, 20.0);
    Vector3d d(uniform(0.2, 5.0), uniform(0.2, 5.0), uniform(0.2, 5.0));
    // Keep the triangle inequality so the principal moments are realizable.
    const double cap = d(0) + d(1);
    d(2) = std::min(d(2), 0.99 * cap);
    const Matrix3d q = rotation();
    b.inertia_cm = q * d.asDiagonal() * q.transpose();
    b.r_p = vec3(0.7);
    for (int i = 0; i < attachments; ++i) b.attachments.push_back(vec3(0.7));
    return b;
  }

 private:
  double gauss() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  std::mt19937_64 rng_;
};

namespace check_detail {

inline double relative_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  const double denom = std::max({got.norm(), want.norm(), 1e-300});
  return (got - want).norm() / denom;
}

inline std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), pattern, a, b);
  return buf;
}

/// Runs f on n instances, tracking the worst relative error.
template <class F>
CheckResult oracle(const std::string& name, int n, double tol, std::uint64_t seed, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  InstanceGenerator gen(seed);
  double worst = 0.0;
  for (int k = 0; k < n; ++k) worst = std::max(worst, f(gen));
  CheckResult r;
  r.name = name;
  r.pass = worst <= tol && std::isfinite(worst);
  r.detail = fmt("worst relative error %.3g over %.0f instances", worst, n);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace check_detail

inline constexpr int kOracleInstances = 1000;
inline constexpr double kOracleTol = 1e-9;

inline CheckResult check_object_regressor(int n = kOracleInstances, std::uint64_t seed = 11) {
  return check_detail::oracle("regressor Y_o: Y_o o = H qdd_r + C qd_r", n, kOracleTol, seed,
                              [](InstanceGenerator& g) {
                                const BodyParams b = g.body();
                                const Pose q = g.pose();
                                const Twist qd = g.vec6(), qd_r = g.vec6();
                                const Accel qdd_r = g.vec6();
                                const Vector6d want = inertia_matrix(b, q) * qdd_r +
                                                      coriolis_matrix(b, q, qd) * qd_r;
                                const Vector6d got = regressor_object(q, qd, qd_r, qdd_r) * object_params(b);
                                return check_detail::relative_error(got, want);
                              });
}

inline CheckResult check_geometric_regressor(const CheckHooks& hooks = {},
                                             int n = kOracleInstances, std::uint64_t seed = 12) {
  return check_detail::oracle("regressor Y_g: -(M(r_hat) - M(r)) F = Y_g (r_hat - r)", n,
                              kOracleTol, seed, [&](InstanceGenerator& g) {
                                const Matrix3d R = g.rotation();
                                const Vector3d r = g.vec3(), r_hat = g.vec3();
                                const Wrench f = g.vec6(10.0);
                                const Vector6d want =
                                    -(grasp_matrix(R, r_hat) - grasp_matrix(R, r)) * f;
                                const Vector6d got = hooks.geometric(f, R) * (r_hat - r);
                                return check_detail::relative_error(got, want);
                              });
}

inline CheckResult check_body_friction_regressor(int n = kOracleInstances, std::uint64_t seed = 13) {
  return check_detail::oracle("regressor Y_f: Y_f diag(L) = B L B^T qd_r", n, kOracleTol, seed,
                              [](InstanceGenerator& g) {
                                const Matrix3d R = g.rotation();
                                const Twist qd_r = g.vec6();
                                const Vector6d lam = g.positive6(0.1, 5.0);
                                const Matrix6d b = block_rotation(R);
                                const Vector6d want = b * lam.asDiagonal() * b.transpose() * qd_r;
                                const Vector6d got = regressor_body_friction(R, qd_r) * lam;
                                return check_detail::relative_error(got, want);
                              });
}

inline CheckResult check_contact_viscous_regressor(int n = kOracleInstances, std::uint64_t seed = 14) {
  return check_detail::oracle("regressor Y_D: Y_D d = M(r) D M(r)^T qd_r", n, kOracleTol, seed,
                              [](InstanceGenerator& g) {
                                const Matrix3d R = g.rotation();
                                const Vector3d r = g.vec3();
                                const Twist qd_r = g.vec6();
                                const Vector6d d = g.positive6(0.1, 5.0);
                                const Matrix6d m = grasp_matrix(R, r);
                                const Vector6d want = m * d.asDiagonal() * m.transpose() * qd_r;
                                const Vector6d got =
                                    regressor_contact_viscous(R, qd_r) * lump_contact_viscous(d, r);
                                return check_detail::relative_error(got, want);
                              });
}

inline CheckResult check_contact_coulomb_regressor(int n = kOracleInstances, std::uint64_t seed = 15) {
  return check_detail::oracle("regressor Y_C: Y_C c = M(r) D_C sgn(v)", n, kOracleTol, seed,
                              [](InstanceGenerator& g) {
                                const Matrix3d R = g.rotation();
                                const Vector3d r = g.vec3();
                                const Twist v = g.vec6();
                                const Vector6d dc = g.positive6(0.1, 5.0);
                                const Vector6d want = grasp_matrix(R, r) * dc.asDiagonal() * sgn(v);
                                const Vector6d got =
                                    regressor_contact_coulomb(R, v) * lump_contact_coulomb(dc, r);
                                return check_detail::relative_error(got, want);
                              });
}

inline CheckResult check_inertia_spd(int n = kOracleInstances, std::uint64_t seed = 21) {
  const auto t0 = std::chrono::steady_clock::now();
  InstanceGenerator g(seed);
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const Matrix6d h = inertia_matrix(g.body(), g.pose());
    Eigen::SelfAdjointEigenSolver<Matrix6d> eig(h);
    const double sym = (h - h.transpose()).cwiseAbs().maxCoeff();
    worst = std::min(worst, sym <= 1e-12 * h.norm() ? eig.eigenvalues().minCoeff() : -1.0);
  }
  CheckResult r;
  r.name = "H symmetric positive definite";
  r.pass = worst > 0.0;
  r.detail = check_detail::fmt("smallest eigenvalue %.3g over %.0f instances", worst, n);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Central difference of H along R' = hat(w) R.
inline Matrix6d inertia_rate_fd(const BodyParams& b, const Pose& q, const Twist& qd, double dt = 1e-6) {
  Pose plus = q, minus = q;
  plus.R = so3::exp(dt * qd.tail<3>()) * q.R;
  minus.R = so3::exp(-dt * qd.tail<3>()) * q.R;
  return (inertia_matrix(b, plus) - inertia_matrix(b, minus)) / (2.0 * dt);
}

inline CheckResult check_skew_symmetry(int n = kOracleInstances, std::uint64_t seed = 22,
                                       double tol = 1e-5) {
  const auto t0 = std::chrono::steady_clock::now();
  InstanceGenerator g(seed);
  double worst = 0.0;
  for (int k = 0; k < n; ++k) {
    const BodyParams b = g.body();
    const Pose q = g.pose();
    const Twist qd = g.vec6();
    const Matrix6d n_mat = inertia_rate_fd(b, q, qd) - 2.0 * coriolis_matrix(b, q, qd);
    worst = std::max(worst, (n_mat + n_mat.transpose()).cwiseAbs().maxCoeff());
  }
  CheckResult r;
  r.name = "Hdot - 2C skew-symmetric (finite-difference Hdot)";
  r.pass = worst <= tol;
  r.detail = check_detail::fmt("max |N + N^T| entry %.3g over %.0f instances", worst, n);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline CheckResult check_schur_identity(int n = kOracleInstances, std::uint64_t seed = 23) {
  const auto t0 = std::chrono::steady_clock::now();
  InstanceGenerator g(seed);
  double worst = 0.0;
  for (int k = 0; k < n; ++k) {
    const BodyParams b = g.body();
    const Matrix3d R = g.rotation();
    const Matrix3d rho_hat = so3::hat(R * b.r_p);
    const Matrix3d lhs = R * inertia_about_point(b) * R.transpose() + b.mass * rho_hat * rho_hat;
    const Matrix3d rhs = R * b.inertia_cm * R.transpose();
    worst = std::max(worst, (lhs - rhs).norm() / rhs.norm());
  }
  CheckResult r;
  r.name = "Schur identity R J_p R^T + m hat(R r_p)^2 = R I_cm R^T";
  r.pass = worst <= kOracleTol;
  r.detail = check_detail::fmt("worst relative error %.3g over %.0f instances", worst, n);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Reduced attitude flow from random R_e(0) with tr(R_e(0)) > -0.9: the
/// potential stays under its exponential envelope and q0^2 never decreases.
inline CheckResult check_reduced_flow(int n = 100, std::uint64_t seed = 31, double lambda = 1.5,
                                      double duration = 5.0) {
  const auto t0 = std::chrono::steady_clock::now();
  InstanceGenerator g(seed);
  double worst_env = -std::numeric_limits<double>::infinity();
  double worst_q0 = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    Matrix3d r0 = g.rotation();
    while (r0.trace() <= -0.9) r0 = g.rotation();
    const ReducedFlowReport rep = reduced_flow_check(r0, lambda, duration);
    for (std::size_t j = 0; j < rep.t.size(); ++j) {
      // Relative slack for rounding in the potential itself.
      worst_env = std::max(worst_env, rep.v_r[j] - rep.envelope(j, lambda) - 1e-12 * rep.v_r.front());
      if (j > 0) worst_q0 = std::max(worst_q0, rep.q0_sq[j - 1] - rep.q0_sq[j] - 1e-14);
    }
  }
  CheckResult r;
  r.name = "reduced attitude flow: exponential envelope and monotone q0^2";
  r.pass = worst_env <= 0.0 && worst_q0 <= 0.0;
  r.detail = check_detail::fmt("max envelope excess %.3g, max q0^2 decrease %.3g", worst_env, worst_q0);
  r.detail += " over " + std::to_string(n) + " initial attitudes";
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

struct RankReport {
  int agents = 0;
  int rank = 0;
  int columns = 0;
};

inline RankReport excitation_rank(int agents, double window = 10.0, int samples = 1000) {
  const BodyParams body = reference_body_with_agents(agents);
  const ExcitationReport rep = excitation_gram(default_trajectory(), body, agents, 0.0, window, samples);
  return {agents, rep.rank, static_cast<int>(rep.singular_values.size())};
}

/// Stacked Gram rank stays at or below one agent's block (13) for N = 2
/// and N = 6; the single-agent rank is reported only.
inline CheckResult check_excitation_rank() {
  const auto t0 = std::chrono::steady_clock::now();
  const RankReport r1 = excitation_rank(1), r2 = excitation_rank(2), r6 = excitation_rank(6);
  CheckResult r;
  r.name = "stacked excitation Gram rank <= 13 (N = 2, 6)";
  r.pass = r2.rank <= kObjectParams + kGeomParams && r6.rank <= kObjectParams + kGeomParams;
  r.detail = "rank N=1: " + std::to_string(r1.rank) + "/" + std::to_string(r1.columns) +
             " (reported), N=2: " + std::to_string(r2.rank) + "/" + std::to_string(r2.columns) +
             ", N=6: " + std::to_string(r6.rank) + "/" + std::to_string(r6.columns);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// With Gamma diagonal and the quadratic potential the mirror law equals
/// -Gamma Y^T s.
inline CheckResult check_bregman_quadratic_reduction(int n = kOracleInstances, std::uint64_t seed = 41) {
  return check_detail::oracle("Bregman law with quadratic potential equals -Gamma Y^T s", n, 1e-12,
                              seed, [](InstanceGenerator& g) {
                                Eigen::MatrixXd y(6, kObjectParams);
                                for (int c = 0; c < kObjectParams; ++c) y.col(c) = g.vec6();
                                const Vector6d s = g.vec6();
                                Eigen::VectorXd est(kObjectParams), gd(kObjectParams);
                                for (int c = 0; c < kObjectParams; ++c) {
                                  est(c) = g.uniform(-2.0, 2.0);
                                  gd(c) = g.uniform(0.1, 3.0);
                                }
                                const Eigen::MatrixXd gamma = gd.asDiagonal();
                                Regularizer reg;
                                const Eigen::VectorXd want = -gamma * y.transpose() * s;
                                const Eigen::VectorXd got = bregman_rates(est, gamma, reg, y, s);
                                return check_detail::relative_error(got, want);
                              });
}

inline CheckResult check_so3_exp(int n = kOracleInstances, std::uint64_t seed = 51) {
  return check_detail::oracle("so3 exp is a rotation and inverts with -w", n, 1e-12, seed,
                              [](InstanceGenerator& g) {
                                const Vector3d w = g.vec3(2.0);
                                const Matrix3d r = so3::exp(w);
                                const double orth = so3::orthogonality_error(r);
                                const double inv = (so3::exp(-w) * r - Matrix3d::Identity()).norm();
                                return std::max(orth, inv);
                              });
}

inline std::vector<CheckResult> run_checks(const CheckHooks& hooks = {}) {
  return {check_object_regressor(),          check_geometric_regressor(hooks),
          check_body_friction_regressor(),   check_contact_viscous_regressor(),
          check_contact_coulomb_regressor(), check_inertia_spd(),
          check_skew_symmetry(),             check_schur_identity(),
          check_reduced_flow(),              check_excitation_rank(),
          check_bregman_quadratic_reduction(), check_so3_exp()};
}

}  // namespace coop
