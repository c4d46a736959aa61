#pragma once

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "coop/checks.hpp"
#include "coop/csv.hpp"
#include "coop/scenarios.hpp"
#include "coop/sim.hpp"

namespace coop {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  std::vector<std::string> details;
  double seconds = 0.0;
};

inline constexpr int kAcceptanceSeeds = 10;
inline constexpr int kRequiredSeeds = 9;
inline constexpr double kDeadband = 0.01;
inline constexpr double kStayBound = 0.05;
inline constexpr double kRotationBound = 1e-3;
inline constexpr double kLyapunovRelTol = 1e-6;
inline constexpr double kFinalVFloor = 1e-6;
inline constexpr double kSparsityThreshold = 1e-3;
inline constexpr double kComparableRatio = 2.0;
/// Window for the end-of-run ||s|| level in the sparsity comparison.
inline constexpr double kFinalWindow = 10.0;

namespace criteria_detail {

inline std::size_t step_index(const SimRecord& rec, double t) {
  const long k = std::lround(t / rec.step);
  return static_cast<std::size_t>(std::clamp<long>(k, 0, static_cast<long>(rec.step_s_norm.size()) - 1));
}

inline std::string fmt(const char* pattern, ...) __attribute__((format(printf, 1, 2)));
inline std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace criteria_detail

/// First time in [from, to] at which ||s|| <= bound, or -1.
inline double first_touch(const SimRecord& rec, double from, double to, double bound = kDeadband) {
  for (std::size_t k = criteria_detail::step_index(rec, from); k <= criteria_detail::step_index(rec, to); ++k) {
    if (rec.step_s_norm[k] <= bound) return static_cast<double>(k) * rec.step;
  }
  return -1.0;
}

inline double max_s(const SimRecord& rec, double from, double to) {
  double m = 0.0;
  for (std::size_t k = criteria_detail::step_index(rec, from); k <= criteria_detail::step_index(rec, to); ++k) {
    m = std::max(m, rec.step_s_norm[k]);
  }
  return m;
}

inline double mean_s(const SimRecord& rec, double from, double to) {
  double sum = 0.0;
  const std::size_t a = criteria_detail::step_index(rec, from), b = criteria_detail::step_index(rec, to);
  for (std::size_t k = a; k <= b; ++k) sum += rec.step_s_norm[k];
  return sum / static_cast<double>(b - a + 1);
}

/// Enters the deadband by t_enter and stays below the bound from then to t_end.
inline bool enters_and_stays(const SimRecord& rec, double from, double t_enter, double t_end) {
  const double t = first_touch(rec, from, t_enter);
  return t >= 0.0 && max_s(rec, t, t_end) <= kStayBound;
}

/// Steps k -> k+1 that are fault steps, i.e. agents switch off at (k+1) h.
inline std::vector<std::size_t> fault_steps(const ScenarioConfig& c) {
  std::vector<std::size_t> out;
  for (const auto& f : c.faults) {
    const long k = static_cast<long>(std::ceil(f.time / c.step - 1e-9)) - 1;
    if (k >= 0) out.push_back(static_cast<std::size_t>(k));
  }
  return out;
}

/// Steps where V rose by more than the tolerance, among steps that adapt
/// (outside the deadband) or switch agents off. Inside the deadband the
/// estimates are frozen and V is not expected to decrease.
inline std::vector<std::size_t> lyapunov_increases(const SimRecord& rec,
                                                   const std::vector<std::size_t>& extra_steps = {}) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k + 1 < rec.step_v.size(); ++k) {
    const bool watched = rec.step_adapting[k] ||
                         std::find(extra_steps.begin(), extra_steps.end(), k) != extra_steps.end();
    if (!watched) continue;
    const double dv = rec.step_v[k + 1] - rec.step_v[k];
    if (dv > kLyapunovRelTol * std::max(rec.step_v[k], 1.0)) out.push_back(k);
  }
  return out;
}

/// Fraction of object-parameter estimates, in regularizer-scale units,
/// whose magnitude is below the threshold.
inline double sparsity_fraction(const std::vector<AgentState>& agents, const Eigen::VectorXd& scale,
                                double threshold = kSparsityThreshold) {
  int small = 0, total = 0;
  for (const auto& a : agents) {
    for (Eigen::Index k = 0; k < a.o_hat.size(); ++k) {
      const double s = scale.size() ? scale(k) : 1.0;
      ++total;
      small += std::abs(a.o_hat(k) / s) < threshold ? 1 : 0;
    }
  }
  return total ? static_cast<double>(small) / total : 0.0;
}

/// Either a record or the abort message.
struct RunOutcome {
  std::optional<SimRecord> record;
  std::string abort;
};

inline RunOutcome try_run(const ScenarioConfig& c) {
  RunOutcome out;
  try {
    out.record = run(c);
  } catch (const SimulationAbort& e) {
    out.abort = e.what();
  }
  return out;
}

/// Multi-seed nominal, baseline and dropout runs shared by criteria 1-4.
struct SeedStudy {
  std::vector<RunOutcome> nominal, no_geom, pd, dropout;
  double nominal_seconds = 0.0;
};

inline SeedStudy run_seed_study(int seeds = kAcceptanceSeeds) {
  SeedStudy s;
  const auto t0 = std::chrono::steady_clock::now();
  for (int k = 0; k < seeds; ++k) s.nominal.push_back(try_run(se3_nominal(k)));
  s.nominal_seconds = criteria_detail::seconds_since(t0);
  for (int k = 0; k < seeds; ++k) {
    s.no_geom.push_back(try_run(baseline_no_geom(k)));
    s.pd.push_back(try_run(baseline_pd(k)));
    s.dropout.push_back(try_run(dropout_t30(k)));
  }
  return s;
}

inline CriterionResult criterion_tracking(const SeedStudy& s) {
  using criteria_detail::fmt;
  CriterionResult r{1, "nominal SE(3) tracking", false, {}, s.nominal_seconds};
  int ok = 0;
  for (std::size_t k = 0; k < s.nominal.size(); ++k) {
    const auto& o = s.nominal[k];
    if (!o.record) {
      r.details.push_back(fmt("seed %zu: aborted (%s)", k, o.abort.c_str()));
      continue;
    }
    const SimRecord& rec = *o.record;
    const double t_in = first_touch(rec, 0.0, 60.0);
    const double after = t_in >= 0.0 ? max_s(rec, t_in, 60.0) : NAN;
    const double rot = rec.rot_err.back();
    const bool pass = t_in >= 0.0 && after <= kStayBound && rot < kRotationBound;
    ok += pass;
    r.details.push_back(fmt("seed %zu: enters %.2f s, max ||s|| after %.4f, tr(I-R_e)(60) %.2e %s", k,
                            t_in, after, rot, pass ? "ok" : "MISS"));
  }
  r.pass = ok >= kRequiredSeeds && s.nominal_seconds < 60.0;
  r.details.push_back(fmt("%d/%zu seeds (need %d); runtime %.1f s (< 60 s)", ok, s.nominal.size(),
                          kRequiredSeeds, s.nominal_seconds));
  return r;
}

inline CriterionResult criterion_lyapunov(const SeedStudy& s) {
  using criteria_detail::fmt;
  CriterionResult r{2, "Lyapunov monotonicity", true, {}, 0.0};
  for (std::size_t k = 0; k < s.nominal.size(); ++k) {
    const auto& o = s.nominal[k];
    if (!o.record) {
      r.pass = false;
      r.details.push_back(fmt("seed %zu: aborted", k));
      continue;
    }
    const SimRecord& rec = *o.record;
    const auto bad = lyapunov_increases(rec);
    const double v_end = rec.step_v.back();
    const double v_10 = rec.step_v[criteria_detail::step_index(rec, rec.step * (rec.step_v.size() - 1) - kFinalWindow)];
    const bool pass = bad.empty() && v_end > kFinalVFloor;
    r.pass = r.pass && pass;
    r.details.push_back(fmt("seed %zu: %zu increases over tolerance, final V %.6g (change over last 10 s %.2e) %s",
                            k, bad.size(), v_end, (v_end - v_10) / std::max(v_10, 1.0), pass ? "ok" : "MISS"));
  }
  return r;
}

inline CriterionResult criterion_baselines(const SeedStudy& s) {
  using criteria_detail::fmt;
  CriterionResult r{3, "baselines fail to converge", false, {}, 0.0};
  const auto never_enters = [](const RunOutcome& o) {
    return !o.record || first_touch(*o.record, 0.0, 60.0) < 0.0;
  };
  const auto mean_of = [](const RunOutcome& o) {
    return o.record ? mean_s(*o.record, 0.0, 60.0) : std::numeric_limits<double>::infinity();
  };
  int ng_fail = 0, pd_fail = 0, mean_ok = 0;
  for (std::size_t k = 0; k < s.nominal.size(); ++k) {
    const bool a = never_enters(s.no_geom[k]), b = never_enters(s.pd[k]);
    ng_fail += a;
    pd_fail += b;
    const double mn = mean_of(s.nominal[k]), mg = mean_of(s.no_geom[k]), mp = mean_of(s.pd[k]);
    const bool smaller = mn < mg && mn < mp;
    mean_ok += smaller;
    r.details.push_back(fmt("seed %zu: mean ||s|| nominal %.4f, Gamma_r=0 %.4f%s, PD %.4f; enters: Gamma_r=0 %s, PD %s",
                            k, mn, mg, s.no_geom[k].record ? "" : " (aborted)", mp, a ? "no" : "yes",
                            b ? "no" : "yes"));
  }
  const int n = static_cast<int>(s.nominal.size());
  r.pass = ng_fail >= kRequiredSeeds && pd_fail >= kRequiredSeeds && mean_ok == n;
  r.details.push_back(fmt("Gamma_r=0 fails in %d/%d, PD fails in %d/%d (need %d); nominal mean smaller in %d/%d",
                          ng_fail, n, pd_fail, n, kRequiredSeeds, mean_ok, n));
  return r;
}

inline CriterionResult criterion_dropout(const SeedStudy& s) {
  using criteria_detail::fmt;
  CriterionResult r{4, "agent dropout", false, {}, 0.0};
  int ok = 0;
  for (std::size_t k = 0; k < s.dropout.size(); ++k) {
    const auto& o = s.dropout[k];
    if (!o.record) {
      r.details.push_back(fmt("seed %zu: aborted (%s)", k, o.abort.c_str()));
      continue;
    }
    const SimRecord& rec = *o.record;
    const ScenarioConfig c = dropout_t30(k);
    const auto jumps = lyapunov_increases(rec, fault_steps(c));
    const double t_jump = jumps.size() == 1 ? static_cast<double>(jumps[0] + 1) * rec.step : NAN;
    const double dv = jumps.size() == 1 ? rec.step_v[jumps[0] + 1] - rec.step_v[jumps[0]] : NAN;
    const bool one_jump = jumps.size() == 1 && std::abs(t_jump - 30.0) <= rec.step + 1e-9;
    const double t_back = first_touch(rec, 30.0 + rec.step, 90.0);
    const bool settles = t_back >= 0.0 && max_s(rec, t_back, 90.0) <= kStayBound;
    const bool pass = one_jump && t_back >= 0.0;
    ok += pass;
    r.details.push_back(fmt("seed %zu: %zu jump(s), at t = %.2f s (dV %.4g); re-enters deadband %.2f s%s %s", k,
                            jumps.size(), t_jump, dv, t_back, settles ? ", stays within 0.05" : "",
                            pass ? "ok" : "MISS"));
  }
  r.pass = ok >= kRequiredSeeds;
  r.details.push_back(fmt("%d/%zu seeds (need %d)", ok, s.dropout.size(), kRequiredSeeds));
  return r;
}

inline CriterionResult criterion_regressors() {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r{5, "regressor oracles", true, {}, 0.0};
  for (const auto& c : {check_object_regressor(), check_geometric_regressor(), check_body_friction_regressor(),
                        check_contact_viscous_regressor(), check_contact_coulomb_regressor()}) {
    r.pass = r.pass && c.pass;
    r.details.push_back(c.name + ": " + c.detail);
  }
  r.seconds = criteria_detail::seconds_since(t0);
  r.pass = r.pass && r.seconds < 10.0;
  r.details.push_back(criteria_detail::fmt("runtime %.2f s (< 10 s)", r.seconds));
  return r;
}

inline CriterionResult criterion_matrix_lemmas() {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r{6, "matrix lemmas", true, {}, 0.0};
  for (const auto& c : {check_inertia_spd(), check_skew_symmetry(), check_schur_identity()}) {
    r.pass = r.pass && c.pass;
    r.details.push_back(c.name + ": " + c.detail);
  }
  r.seconds = criteria_detail::seconds_since(t0);
  return r;
}

inline CriterionResult criterion_reduced_flow() {
  const CheckResult c = check_reduced_flow();
  return {7, "reduced attitude flow", c.pass, {c.detail}, c.seconds};
}

inline CriterionResult criterion_rank() {
  const CheckResult c = check_excitation_rank();
  return {8, "non-PE rank bound", c.pass, {c.detail}, c.seconds};
}

struct SparsityReport {
  double frac_l2 = 0.0, frac_l1 = 0.0;
  double final_l2 = 0.0, final_l1 = 0.0;
  std::string abort;
};

inline SparsityReport sparsity_study(std::uint64_t seed = 0) {
  SparsityReport rep;
  const auto [l2, l1] = bregman_l1_vs_l2(seed);
  try {
    const SimRecord r2 = run(l2);
    const SimRecord r1 = run(l1);
    rep.frac_l2 = sparsity_fraction(r2.final_agents, l2.gains.regularizer.scale);
    rep.frac_l1 = sparsity_fraction(r1.final_agents, l1.gains.regularizer.scale);
    rep.final_l2 = mean_s(r2, l2.duration - kFinalWindow, l2.duration);
    rep.final_l1 = mean_s(r1, l1.duration - kFinalWindow, l1.duration);
  } catch (const SimulationAbort& e) {
    rep.abort = e.what();
  }
  return rep;
}

inline CriterionResult criterion_sparsity(std::uint64_t seed = 0) {
  using criteria_detail::fmt;
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r{9, "Bregman sparsity", false, {}, 0.0};
  const SparsityReport s = sparsity_study(seed);
  if (!s.abort.empty()) {
    r.details.push_back("aborted: " + s.abort);
  } else {
    const double ratio = s.final_l1 / s.final_l2;
    r.pass = s.frac_l1 > s.frac_l2 && ratio <= kComparableRatio && ratio >= 1.0 / kComparableRatio;
    r.details.push_back(fmt("fraction |o_hat/scale| < 1e-3: smoothed-l1 %.3f, quadratic %.3f", s.frac_l1, s.frac_l2));
    r.details.push_back(fmt("mean ||s|| over the last 10 s: smoothed-l1 %.4g, quadratic %.4g (ratio %.2f, need within 2x)",
                            s.final_l1, s.final_l2, ratio));
  }
  r.seconds = criteria_detail::seconds_since(t0);
  return r;
}

inline CriterionResult criterion_determinism(std::uint64_t seed = 7) {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r{10, "determinism", true, {}, 0.0};
  const auto twice = [&](ScenarioConfig c, const std::string& label) {
    const std::string a = to_csv(run(c)), b = to_csv(run(c));
    const bool same = a == b;
    r.pass = r.pass && same;
    r.details.push_back(label + (same ? ": identical CSV bytes" : ": CSV differs"));
  };
  twice(se3_nominal(seed), "se3_nominal (full)");
  for (const auto& name : scenario_names()) {
    ScenarioConfig c = scenario_by_name(name, seed);
    c.duration = std::min(c.duration, 5.0);
    c.faults.erase(std::remove_if(c.faults.begin(), c.faults.end(),
                                  [&](const Fault& f) { return f.time > c.duration; }),
                   c.faults.end());
    twice(c, name + " (first 5 s)");
  }
  r.seconds = criteria_detail::seconds_since(t0);
  return r;
}

inline std::vector<CriterionResult> evaluate_criteria() {
  std::vector<CriterionResult> out;
  const auto t0 = std::chrono::steady_clock::now();
  const SeedStudy s = run_seed_study();
  const double study = criteria_detail::seconds_since(t0);
  out.push_back(criterion_tracking(s));
  out.push_back(criterion_lyapunov(s));
  out.push_back(criterion_baselines(s));
  out.push_back(criterion_dropout(s));
  out[1].seconds = out[2].seconds = out[3].seconds = study - s.nominal_seconds;
  out.push_back(criterion_regressors());
  out.push_back(criterion_matrix_lemmas());
  out.push_back(criterion_reduced_flow());
  out.push_back(criterion_rank());
  out.push_back(criterion_sparsity());
  out.push_back(criterion_determinism());
  return out;
}

inline std::string verdict_line(const CriterionResult& r) {
  return criteria_detail::fmt("criterion %2d %-28s %s (%.1f s)", r.id, r.title.c_str(), r.pass ? "PASS" : "FAIL",
                              r.seconds);
}

}  // namespace coop
