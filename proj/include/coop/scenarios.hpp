#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coop/sim.hpp"

namespace coop {

/// N = 6 reference body, reference gains, default trajectory bank, 60 s.
inline ScenarioConfig se3_nominal(std::uint64_t seed = 0) {
  ScenarioConfig c;
  c.name = "se3_nominal";
  c.body = reference_body();
  c.agent_count = static_cast<int>(c.body.attachments.size());
  c.gains = reference_gains(c.body);
  c.trajectory = default_trajectory();
  c.seed = seed;
  c.step = 1e-2;
  c.duration = 60.0;
  c.initial_position_offset = Vector3d(0.5, 0.0, 0.0);
  c.initial_rotation_offset = Vector3d(0.0, 0.0, 15.0 * std::numbers::pi / 180.0);
  return c;
}

inline ScenarioConfig baseline_no_geom(std::uint64_t seed = 0) {
  ScenarioConfig c = without_geometric_adaptation(se3_nominal(seed));
  c.name = "baseline_no_geom";
  return c;
}

inline ScenarioConfig baseline_pd(std::uint64_t seed = 0) {
  ScenarioConfig c = pd_only(se3_nominal(seed));
  c.name = "baseline_pd";
  return c;
}

/// Agents 3, 4, 5 drop out at t = 30 s; 90 s horizon.
inline ScenarioConfig dropout_t30(std::uint64_t seed = 0) {
  ScenarioConfig c = se3_nominal(seed);
  c.name = "dropout_t30";
  c.duration = 90.0;
  c.faults.push_back({30.0, {3, 4, 5}});
  return c;
}

/// Reference body with n attachment points spread over the cylinder
/// surface (radius 0.5, height 3). The first six are the reference ones.
inline BodyParams reference_body_with_agents(int n) {
  if (n < 1) throw std::invalid_argument("reference_body_with_agents: n must be positive");
  BodyParams body = reference_body();
  body.attachments.resize(std::min<std::size_t>(body.attachments.size(), n));
  const int extra = n - static_cast<int>(body.attachments.size());
  for (int k = 0; k < extra; ++k) {
    const double theta = 2.0 * std::numbers::pi * (k + 0.5) / extra;
    const double z = -1.2 + 2.4 * (k % 3) / 2.0;
    const Vector3d from_cm(0.5 * std::cos(theta), 0.5 * std::sin(theta), z);
    body.attachments.push_back(from_cm - body.r_p);
  }
  return body;
}

/// Quadratic and smoothed-l1 object-parameter adaptation on an N = 20 team
/// over 120 s. Parameters are compared in units of the regularizer scale.
inline std::pair<ScenarioConfig, ScenarioConfig> bregman_l1_vs_l2(std::uint64_t seed = 0) {
  ScenarioConfig l2 = se3_nominal(seed);
  l2.name = "bregman_l2";
  l2.body = reference_body_with_agents(20);
  l2.agent_count = 20;
  l2.duration = 120.0;
  const ObjectParamVec o = object_params(l2.body);
  const Eigen::VectorXd scale = (o.cwiseAbs().array() + 0.01).matrix();
  l2.gains.regularizer.scale = scale;
  // Initial estimates within a few smoothing widths of zero in scaled units.
  l2.initial_cov_o = (1e-4 * scale).cwiseAbs2();

  ScenarioConfig l1 = l2;
  l1.name = "bregman_l1";
  l1.gains.regularizer.kind = RegularizerKind::kSmoothedL1;
  l1.gains.regularizer.epsilon = 1e-2;
  l1.gains.regularizer.quadratic_floor = 1e-2;
  l1.gains.regularizer.reference_magnitude = 2e-2;
  return {l2, l1};
}

inline std::vector<std::string> scenario_names() {
  return {"se3_nominal", "baseline_no_geom", "baseline_pd", "dropout_t30", "bregman_l2",
          "bregman_l1"};
}

inline ScenarioConfig scenario_by_name(const std::string& name, std::uint64_t seed = 0) {
  if (name == "se3_nominal") return se3_nominal(seed);
  if (name == "baseline_no_geom") return baseline_no_geom(seed);
  if (name == "baseline_pd") return baseline_pd(seed);
  if (name == "dropout_t30") return dropout_t30(seed);
  if (name == "bregman_l2") return bregman_l1_vs_l2(seed).first;
  if (name == "bregman_l1") return bregman_l1_vs_l2(seed).second;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

}  // namespace coop
