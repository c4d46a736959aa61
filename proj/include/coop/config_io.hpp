#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coop/scenarios.hpp"
#include "coop/sim.hpp"

namespace coop {

/// Config parse or validation failure. The message starts with the dotted
/// path of the offending field (or the line/column for syntax errors).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::ordered_json;

namespace config_detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline std::string index(const std::string& path, std::size_t k) {
  return path + "[" + std::to_string(k) + "]";
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

inline int integer(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

inline bool boolean(const Json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

inline std::string string(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

inline std::vector<double> numbers(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number(j[k], index(path, k)));
  return out;
}

inline Eigen::VectorXd vector(const Json& j, const std::string& path, Eigen::Index n = -1) {
  const std::vector<double> v = numbers(j, path);
  if (n >= 0 && static_cast<Eigen::Index>(v.size()) != n) {
    fail(path, "expected " + std::to_string(n) + " numbers, got " + std::to_string(v.size()));
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// n numbers: diagonal. n*n numbers or n rows of n: row-major.
inline Eigen::MatrixXd matrix(const Json& j, const std::string& path, Eigen::Index n) {
  if (!j.is_array()) fail(path, "expected a diagonal list or a row-major matrix");
  if (!j.empty() && j[0].is_array()) {
    if (static_cast<Eigen::Index>(j.size()) != n) {
      fail(path, "expected " + std::to_string(n) + " rows");
    }
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) m.row(r) = vector(j[r], index(path, r), n).transpose();
    return m;
  }
  const std::vector<double> v = numbers(j, path);
  const auto size = static_cast<Eigen::Index>(v.size());
  if (size == n) return Eigen::Map<const Eigen::VectorXd>(v.data(), n).asDiagonal();
  if (size == n * n) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        v.data(), n, n);
  }
  fail(path, "expected " + std::to_string(n) + " (diagonal) or " + std::to_string(n * n) +
                 " (row-major) numbers, got " + std::to_string(size));
}

inline Json to_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  if (m.isDiagonal(0.0)) return to_json(Eigen::VectorXd(m.diagonal()));
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
  return out;
}

/// Walks an object, rejecting keys that no handler claims.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  template <class F>
  void maybe(const std::string& key, F&& f) {
    claimed_.push_back(key);
    if (j_.contains(key)) f(j_.at(key), join(path_, key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(claimed_.begin(), claimed_.end(), key) == claimed_.end()) {
        fail(join(path_, key), "unknown field");
      }
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::vector<std::string> claimed_;
};

template <class E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<FrictionMode> kFrictionModes[] = {
    {FrictionMode::kNone, "none"},
    {FrictionMode::kBodyViscous, "body_viscous"},
    {FrictionMode::kContact, "contact"}};
inline constexpr EnumName<RegularizerKind> kRegularizers[] = {
    {RegularizerKind::kQuadratic, "quadratic"}, {RegularizerKind::kSmoothedL1, "smoothed_l1"}};
inline constexpr EnumName<MeasurementKind> kMeasurements[] = {
    {MeasurementKind::kBroadcast, "broadcast"}, {MeasurementKind::kCentroid, "centroid"}};

template <class E, std::size_t N>
E parse_enum(const Json& j, const std::string& path, const EnumName<E> (&table)[N]) {
  const std::string s = string(j, path);
  std::string options;
  for (const auto& e : table) {
    if (s == e.name) return e.value;
    options += (options.empty() ? "" : ", ") + std::string(e.name);
  }
  fail(path, "unknown value '" + s + "' (expected one of " + options + ")");
}

template <class E, std::size_t N>
const char* enum_name(E v, const EnumName<E> (&table)[N]) {
  for (const auto& e : table) {
    if (e.value == v) return e.name;
  }
  return "?";
}

inline Json pose_to_json(const Pose& p) {
  Json j;
  j["x"] = to_json(p.x);
  j["R"] = matrix_to_json(p.R);
  return j;
}

inline void read_pose(const Json& j, const std::string& path, Pose& p) {
  Section sec(j, path);
  sec.maybe("x", [&](const Json& v, const std::string& w) { p.x = vector(v, w, 3); });
  sec.maybe("R", [&](const Json& v, const std::string& w) {
    p.R = matrix(v, w, 3);
    if (!so3::is_rotation(p.R)) fail(w, "not a rotation matrix");
  });
  sec.finish();
}

inline std::vector<Vector6d> vec6_list(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of 6-vectors");
  std::vector<Vector6d> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(vector(j[k], index(path, k), 6));
  return out;
}

inline Json vec6_list_to_json(const std::vector<Vector6d>& v) {
  Json out = Json::array();
  for (const auto& x : v) out.push_back(to_json(x));
  return out;
}

inline void read_body(const Json& j, const std::string& path, BodyParams& b) {
  Section sec(j, path);
  sec.maybe("mass", [&](const Json& v, const std::string& w) { b.mass = number(v, w); });
  sec.maybe("inertia_cm", [&](const Json& v, const std::string& w) { b.inertia_cm = matrix(v, w, 3); });
  sec.maybe("r_p", [&](const Json& v, const std::string& w) { b.r_p = vector(v, w, 3); });
  sec.maybe("attachments", [&](const Json& v, const std::string& w) {
    if (!v.is_array()) fail(w, "expected a list of 3-vectors");
    b.attachments.clear();
    for (std::size_t k = 0; k < v.size(); ++k) b.attachments.push_back(vector(v[k], index(w, k), 3));
  });
  sec.maybe("gravity", [&](const Json& v, const std::string& w) { b.gravity = vector(v, w, 6); });
  sec.maybe("friction", [&](const Json& v, const std::string& w) {
    Section f(v, w);
    f.maybe("mode", [&](const Json& x, const std::string& p) {
      b.friction.mode = parse_enum(x, p, kFrictionModes);
    });
    f.maybe("viscous_body", [&](const Json& x, const std::string& p) {
      b.friction.viscous_body = vector(x, p, 6);
    });
    f.maybe("viscous_contact", [&](const Json& x, const std::string& p) {
      b.friction.viscous_contact = vec6_list(x, p);
    });
    f.maybe("coulomb_contact", [&](const Json& x, const std::string& p) {
      b.friction.coulomb_contact = vec6_list(x, p);
    });
    f.finish();
  });
  sec.finish();
}

inline void read_gains(const Json& j, const std::string& path, GainConfig& g) {
  Section sec(j, path);
  // gravity_column first: it fixes the object dimension used by gamma_o.
  sec.maybe("gravity_column", [&](const Json& v, const std::string& w) {
    if (v.is_null()) {
      g.gravity_column.reset();
    } else {
      g.gravity_column = Vector6d(vector(v, w, 6));
    }
  });
  sec.maybe("gamma_o", [&](const Json& v, const std::string& w) { g.gamma_o = matrix(v, w, g.object_dim()); });
  sec.maybe("gamma_r", [&](const Json& v, const std::string& w) { g.gamma_r = matrix(v, w, 3); });
  sec.maybe("gamma_f", [&](const Json& v, const std::string& w) { g.gamma_f = matrix(v, w, 6); });
  sec.maybe("gamma_d", [&](const Json& v, const std::string& w) {
    g.gamma_d = matrix(v, w, kContactViscousParams);
  });
  sec.maybe("gamma_c", [&](const Json& v, const std::string& w) {
    g.gamma_c = matrix(v, w, kContactCoulombParams);
  });
  sec.maybe("k_d", [&](const Json& v, const std::string& w) { g.k_d = matrix(v, w, 6); });
  sec.maybe("lambda", [&](const Json& v, const std::string& w) { g.lambda = number(v, w); });
  sec.maybe("deadband", [&](const Json& v, const std::string& w) { g.deadband = number(v, w); });
  sec.maybe("compensation", [&](const Json& v, const std::string& w) {
    g.compensation = parse_enum(v, w, kFrictionModes);
  });
  sec.maybe("regularizer", [&](const Json& v, const std::string& w) {
    Section r(v, w);
    auto& reg = g.regularizer;
    r.maybe("kind", [&](const Json& x, const std::string& p) { reg.kind = parse_enum(x, p, kRegularizers); });
    r.maybe("epsilon", [&](const Json& x, const std::string& p) { reg.epsilon = number(x, p); });
    r.maybe("quadratic_floor", [&](const Json& x, const std::string& p) {
      reg.quadratic_floor = number(x, p);
    });
    r.maybe("reference_magnitude", [&](const Json& x, const std::string& p) {
      reg.reference_magnitude = number(x, p);
    });
    r.maybe("scale", [&](const Json& x, const std::string& p) { reg.scale = vector(x, p); });
    r.finish();
  });
  sec.finish();
}

inline void read_trajectory(const Json& j, const std::string& path, TrajectorySpec& t) {
  Section sec(j, path);
  sec.maybe("initial", [&](const Json& v, const std::string& w) { read_pose(v, w, t.initial); });
  sec.maybe("channels", [&](const Json& v, const std::string& w) {
    if (!v.is_array() || v.size() != 6) fail(w, "expected 6 channels (vx, vy, vz, wx, wy, wz)");
    for (std::size_t k = 0; k < 6; ++k) {
      auto& ch = t.channels[k];
      Section c(v[k], index(w, k));
      c.maybe("offset", [&](const Json& x, const std::string& p) { ch.offset = number(x, p); });
      c.maybe("amplitudes", [&](const Json& x, const std::string& p) { ch.amplitudes = numbers(x, p); });
      c.maybe("frequencies", [&](const Json& x, const std::string& p) { ch.frequencies = numbers(x, p); });
      c.maybe("phases", [&](const Json& x, const std::string& p) { ch.phases = numbers(x, p); });
      c.finish();
    }
  });
  sec.finish();
}

}  // namespace config_detail

/// Reads fields present in j on top of base. Unknown fields are errors.
inline ScenarioConfig scenario_from_json(const Json& j, ScenarioConfig base = {}) {
  using namespace config_detail;
  ScenarioConfig& c = base;
  Section sec(j, "");
  sec.maybe("name", [&](const Json& v, const std::string& w) { c.name = string(v, w); });
  sec.maybe("seed", [&](const Json& v, const std::string& w) {
    if (!v.is_number_unsigned()) fail(w, "expected a nonnegative integer");
    c.seed = v.get<std::uint64_t>();
  });
  sec.maybe("step", [&](const Json& v, const std::string& w) { c.step = number(v, w); });
  sec.maybe("duration", [&](const Json& v, const std::string& w) { c.duration = number(v, w); });
  sec.maybe("record_stride", [&](const Json& v, const std::string& w) { c.record_stride = integer(v, w); });
  sec.maybe("zero_order_hold", [&](const Json& v, const std::string& w) { c.zero_order_hold = boolean(v, w); });
  sec.maybe("body", [&](const Json& v, const std::string& w) { read_body(v, w, c.body); });
  sec.maybe("gains", [&](const Json& v, const std::string& w) { read_gains(v, w, c.gains); });
  sec.maybe("trajectory", [&](const Json& v, const std::string& w) { read_trajectory(v, w, c.trajectory); });
  sec.maybe("agents", [&](const Json& v, const std::string& w) {
    Section a(v, w);
    a.maybe("count", [&](const Json& x, const std::string& p) { c.agent_count = integer(x, p); });
    a.maybe("initial_cov_o", [&](const Json& x, const std::string& p) { c.initial_cov_o = vector(x, p); });
    a.maybe("initial_cov_r", [&](const Json& x, const std::string& p) { c.initial_cov_r = number(x, p); });
    a.finish();
  });
  sec.maybe("measurement", [&](const Json& v, const std::string& w) {
    Section m(v, w);
    m.maybe("kind", [&](const Json& x, const std::string& p) { c.measurement.kind = parse_enum(x, p, kMeasurements); });
    m.maybe("agent", [&](const Json& x, const std::string& p) { c.measurement.agent = integer(x, p); });
    m.finish();
  });
  sec.maybe("faults", [&](const Json& v, const std::string& w) {
    if (!v.is_array()) fail(w, "expected a list of faults");
    c.faults.clear();
    for (std::size_t k = 0; k < v.size(); ++k) {
      Fault f;
      Section fs(v[k], index(w, k));
      fs.maybe("time", [&](const Json& x, const std::string& p) { f.time = number(x, p); });
      fs.maybe("agents", [&](const Json& x, const std::string& p) {
        if (!x.is_array()) fail(p, "expected a list of agent indices");
        for (std::size_t i = 0; i < x.size(); ++i) f.agents.push_back(integer(x[i], index(p, i)));
      });
      fs.finish();
      c.faults.push_back(std::move(f));
    }
  });
  sec.maybe("initial", [&](const Json& v, const std::string& w) {
    Section i(v, w);
    i.maybe("position_offset", [&](const Json& x, const std::string& p) { c.initial_position_offset = vector(x, p, 3); });
    i.maybe("rotation_offset", [&](const Json& x, const std::string& p) { c.initial_rotation_offset = vector(x, p, 3); });
    i.maybe("twist_offset", [&](const Json& x, const std::string& p) { c.initial_twist_offset = vector(x, p, 6); });
    i.finish();
  });
  sec.finish();
  try {
    validate(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline Json scenario_to_json(const ScenarioConfig& c) {
  using namespace config_detail;
  Json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["step"] = c.step;
  j["duration"] = c.duration;
  j["record_stride"] = c.record_stride;
  j["zero_order_hold"] = c.zero_order_hold;

  Json& b = j["body"];
  b["mass"] = c.body.mass;
  b["inertia_cm"] = matrix_to_json(c.body.inertia_cm);
  b["r_p"] = to_json(c.body.r_p);
  b["attachments"] = Json::array();
  for (const auto& r : c.body.attachments) b["attachments"].push_back(to_json(r));
  b["gravity"] = to_json(c.body.gravity);
  b["friction"]["mode"] = enum_name(c.body.friction.mode, kFrictionModes);
  b["friction"]["viscous_body"] = to_json(c.body.friction.viscous_body);
  b["friction"]["viscous_contact"] = vec6_list_to_json(c.body.friction.viscous_contact);
  b["friction"]["coulomb_contact"] = vec6_list_to_json(c.body.friction.coulomb_contact);

  Json& g = j["gains"];
  g["gravity_column"] = c.gains.gravity_column ? to_json(*c.gains.gravity_column) : Json(nullptr);
  g["gamma_o"] = matrix_to_json(c.gains.gamma_o);
  g["gamma_r"] = matrix_to_json(c.gains.gamma_r);
  g["gamma_f"] = matrix_to_json(c.gains.gamma_f);
  g["gamma_d"] = matrix_to_json(c.gains.gamma_d);
  g["gamma_c"] = matrix_to_json(c.gains.gamma_c);
  g["k_d"] = matrix_to_json(c.gains.k_d);
  g["lambda"] = c.gains.lambda;
  g["deadband"] = c.gains.deadband;
  g["compensation"] = enum_name(c.gains.compensation, kFrictionModes);
  const auto& reg = c.gains.regularizer;
  g["regularizer"]["kind"] = enum_name(reg.kind, kRegularizers);
  g["regularizer"]["epsilon"] = reg.epsilon;
  g["regularizer"]["quadratic_floor"] = reg.quadratic_floor;
  g["regularizer"]["reference_magnitude"] = reg.reference_magnitude;
  g["regularizer"]["scale"] = to_json(reg.scale);

  Json& t = j["trajectory"];
  t["initial"] = pose_to_json(c.trajectory.initial);
  t["channels"] = Json::array();
  for (const auto& ch : c.trajectory.channels) {
    Json cj;
    cj["offset"] = ch.offset;
    cj["amplitudes"] = ch.amplitudes;
    cj["frequencies"] = ch.frequencies;
    cj["phases"] = ch.phases;
    t["channels"].push_back(std::move(cj));
  }

  j["agents"]["count"] = c.agent_count;
  j["agents"]["initial_cov_o"] = to_json(c.initial_cov_o);
  j["agents"]["initial_cov_r"] = c.initial_cov_r;
  j["measurement"]["kind"] = enum_name(c.measurement.kind, kMeasurements);
  j["measurement"]["agent"] = c.measurement.agent;
  j["faults"] = Json::array();
  for (const auto& f : c.faults) j["faults"].push_back(Json{{"time", f.time}, {"agents", f.agents}});
  j["initial"]["position_offset"] = to_json(c.initial_position_offset);
  j["initial"]["rotation_offset"] = to_json(c.initial_rotation_offset);
  j["initial"]["twist_offset"] = to_json(c.initial_twist_offset);
  return j;
}

namespace config_detail {

inline void apply_override(Json& j, const std::string& o) {
  const auto eq = o.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--override '" + o + "': expected KEY=VALUE");
  const std::string key = o.substr(0, eq);
  const std::string raw = o.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;  // bare words are strings
  }
  Json* node = &j;
  std::stringstream ks(key);
  std::string part;
  while (std::getline(ks, part, '.')) {
    if (part.empty()) throw ConfigError("--override '" + o + "': empty path component");
    const bool is_index = std::all_of(part.begin(), part.end(),
                                      [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); });
    if (is_index && node->is_array()) {
      const std::size_t i = std::stoul(part);
      if (i >= node->size()) throw ConfigError(key + ": index " + part + " out of range");
      node = &(*node)[i];
    } else {
      if (node->is_null()) *node = Json::object();
      if (!node->is_object()) throw ConfigError(key + ": '" + part + "' does not name a section");
      node = &(*node)[part];
    }
  }
  *node = std::move(value);
}

}  // namespace config_detail

/// Parses config text. A top-level "base" string names a canned scenario
/// whose values fill any field the text leaves out. Overrides are dotted
/// KEY=VALUE paths applied to the merged config, so they may address any
/// field of the base, including array elements by index.
inline ScenarioConfig parse_scenario(const std::string& text,
                                     const std::vector<std::string>& overrides = {}) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config syntax error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected an object at top level");
  ScenarioConfig base;
  if (j.contains("base")) {
    const Json b = j.at("base");
    if (!b.is_string()) throw ConfigError("base: expected a scenario name");
    std::uint64_t seed = 0;
    if (j.contains("seed") && j.at("seed").is_number_unsigned()) seed = j.at("seed").get<std::uint64_t>();
    try {
      base = scenario_by_name(b.get<std::string>(), seed);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("base: ") + e.what());
    }
    j.erase("base");
  }
  Json merged = scenario_to_json(base);
  merged.merge_patch(j);
  for (const auto& o : overrides) config_detail::apply_override(merged, o);
  return scenario_from_json(merged, std::move(base));
}

inline ScenarioConfig load_scenario(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario(ss.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline std::string dump_scenario(const ScenarioConfig& c) { return scenario_to_json(c).dump(2) + "\n"; }

}  // namespace coop
