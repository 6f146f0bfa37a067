#pragma once

// JSON session configuration. Every field is optional and falls back to the
// SessionConfig defaults; rotations are given as roll/pitch/yaw in degrees.
//
//   {
//     "rate_hz": 1000, "telemetry_decimation": 10,
//     "debounce_s": 0.05, "staleness_s": 0.2,
//     "controller": {"alpha_t": 0.25, "alpha_r": 0.4, "gain_k": 5.0,
//                    "v_max": 0.05, "omega_max": 0.5, "input_rpy_deg": [0, 0, 0]},
//     "geometry": {"l": 0.1, "shaft_length": 0.2,
//                  "ee_to_tip": {"translation": [0.3, 0, 0], "rpy_deg": [0, 0, 0]}},
//     "channel": {"point": [0.2, 0, 0], "direction": [1, 0, 0], "radius": 0.008,
//                 "mouth_position": 0.0, "length": 0.12},
//     "jaw": {"jaw_max": 0.6, "rate_limit": 1.5, "torque_limit": 0.5},
//     "initial_ee": {"translation": [0, 0, 0], "rpy_deg": [0, 0, 0]},
//     "tremor": {"amplitude": 0.005, "band": [6, 12], "seed": 1}
//   }

#include "rcmtel/session.hpp"

#include "json.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

namespace rcmtel {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace config_detail {

inline double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
  return v.get<double>();
}

inline Vec3 vec3(const json& j, const char* key, const Vec3& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
    throw ConfigError(std::string("config: '") + key + "' must be an array of 3 numbers");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

inline Rotation rpy_deg(const json& j, const char* key, const Rotation& fallback) {
  if (!j.contains(key)) return fallback;
  const Vec3 rpy = vec3(j, key, Vec3::Zero());
  return Rotation::from_rpy(deg2rad(rpy.x()), deg2rad(rpy.y()), deg2rad(rpy.z()));
}

inline RigidTransform transform(const json& j, const char* key, const RigidTransform& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& t = j.at(key);
  if (!t.is_object()) throw ConfigError(std::string("config: '") + key + "' must be an object");
  return {rpy_deg(t, "rpy_deg", fallback.rotation), vec3(t, "translation", fallback.translation)};
}

inline const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(std::string("config: '") + key + "' must be an object");
  return j.at(key);
}

}  // namespace config_detail

inline ControllerConfig controller_from_json(const json& c, ControllerConfig cfg = {}) {
  using namespace config_detail;
  cfg.alpha_t = number(c, "alpha_t", cfg.alpha_t);
  cfg.alpha_r = number(c, "alpha_r", cfg.alpha_r);
  cfg.gain_k = number(c, "gain_k", cfg.gain_k);
  cfg.v_max = number(c, "v_max", cfg.v_max);
  cfg.omega_max = number(c, "omega_max", cfg.omega_max);
  cfg.input_to_app = rpy_deg(c, "input_rpy_deg", cfg.input_to_app);
  return cfg;
}

inline TremorModel tremor_from_json(const json& t) {
  using namespace config_detail;
  double lo = 6.0, hi = 12.0;
  if (t.contains("band")) {
    const auto& b = t.at("band");
    if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number())
      throw ConfigError("config: tremor 'band' must be [low_hz, high_hz]");
    lo = b[0].get<double>();
    hi = b[1].get<double>();
  }
  std::uint64_t seed = 0;
  if (t.contains("seed")) {
    if (!t.at("seed").is_number_unsigned()) throw ConfigError("config: tremor 'seed' must be a non-negative integer");
    seed = t.at("seed").get<std::uint64_t>();
  }
  try {
    return TremorModel(number(t, "amplitude", 0.0), lo, hi, seed);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline SessionConfig session_config_from_json(const json& j) {
  using namespace config_detail;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  SessionConfig cfg;
  try {
    cfg.rate_hz = number(j, "rate_hz", cfg.rate_hz);
    if (j.contains("telemetry_decimation")) {
      if (!j.at("telemetry_decimation").is_number_integer())
        throw ConfigError("config: 'telemetry_decimation' must be an integer");
      cfg.telemetry_decimation = j.at("telemetry_decimation").get<int>();
    }
    cfg.debounce_s = number(j, "debounce_s", cfg.debounce_s);
    if (j.contains("staleness_s")) {
      if (j.at("staleness_s").is_null())
        cfg.staleness_s.reset();
      else
        cfg.staleness_s = number(j, "staleness_s", 0.2);
    }
    cfg.controller = controller_from_json(section(j, "controller"), cfg.controller);

    const json& g = section(j, "geometry");
    cfg.geometry.l = number(g, "l", cfg.geometry.l);
    cfg.geometry.shaft_length = number(g, "shaft_length", cfg.geometry.shaft_length);
    cfg.geometry.ee_to_tip = transform(g, "ee_to_tip", cfg.geometry.ee_to_tip);

    const json& ch = section(j, "channel");
    cfg.channel.point = vec3(ch, "point", cfg.channel.point);
    cfg.channel.direction = vec3(ch, "direction", cfg.channel.direction);
    if (cfg.channel.direction.norm() > 0.0) cfg.channel.direction.normalize();
    cfg.channel.radius = number(ch, "radius", cfg.channel.radius);
    cfg.channel.mouth_position = number(ch, "mouth_position", cfg.channel.mouth_position);
    cfg.channel.length = number(ch, "length", cfg.channel.length);

    const json& jaw = section(j, "jaw");
    cfg.jaw.jaw_max = number(jaw, "jaw_max", cfg.jaw.jaw_max);
    cfg.jaw.rate_limit = number(jaw, "rate_limit", cfg.jaw.rate_limit);
    cfg.jaw.torque_limit = number(jaw, "torque_limit", cfg.jaw.torque_limit);

    cfg.initial_ee = transform(j, "initial_ee", cfg.initial_ee);
    if (j.contains("tremor") && !j.at("tremor").is_null()) cfg.tremor = tremor_from_json(section(j, "tremor"));

    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Merges `patch` into `base` key by key; nested objects merge recursively.
inline void merge_json(json& base, const json& patch) {
  if (!patch.is_object()) return;
  for (const auto& [key, value] : patch.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object())
      merge_json(base[key], value);
    else
      base[key] = value;
  }
}

}  // namespace rcmtel
