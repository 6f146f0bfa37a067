#pragma once

// Wire format for the operator link: one JSON object per line (UTF-8).
// See docs/protocol.md for the field-by-field schema.

#include "rcmtel/session.hpp"

#include "json.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rcmtel::protocol {

using json = nlohmann::json;

enum class ErrorCode {
  syntax,           // not parseable as JSON
  not_object,       // top level is not an object
  missing_field,    // required field absent
  wrong_type,       // field present with the wrong JSON type or shape
  unknown_kind,     // kind is not one of the known message kinds
  range_violation,  // value outside its documented range
  stale_seq,        // seq not strictly greater than the last accepted seq
  busy,             // another operator session is active
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::syntax: return "syntax";
    case ErrorCode::not_object: return "not_object";
    case ErrorCode::missing_field: return "missing_field";
    case ErrorCode::wrong_type: return "wrong_type";
    case ErrorCode::unknown_kind: return "unknown_kind";
    case ErrorCode::range_violation: return "range_violation";
    case ErrorCode::stale_seq: return "stale_seq";
    case ErrorCode::busy: return "busy";
  }
  return "unknown";
}

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}
  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

// Accepted ranges for payload values.
inline constexpr double kMaxTwistComponent = 10.0;
inline constexpr double kMaxRcmOffset = 1.0;
inline constexpr double kMaxScale = 10.0;
inline constexpr double kMaxGain = 100.0;
inline constexpr double kMaxLinearClamp = 1.0;
inline constexpr double kMaxAngularClamp = 10.0;

namespace detail {

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline const json& field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ProtocolError(ErrorCode::missing_field, std::string("'") + key + "' is required");
  return *it;
}

inline double number_in(const json& v, const char* key, double lo, double hi) {
  if (!v.is_number()) throw ProtocolError(ErrorCode::wrong_type, std::string("'") + key + "' must be a number");
  const double x = v.get<double>();
  if (!(std::isfinite(x) && x >= lo && x <= hi))
    throw ProtocolError(ErrorCode::range_violation, std::string("'") + key + "' outside [" + std::to_string(lo) +
                                                        ", " + std::to_string(hi) + "]");
  return x;
}

inline Vec3 vec_in(const json& v, const char* key, double bound) {
  if (!v.is_array() || v.size() != 3)
    throw ProtocolError(ErrorCode::wrong_type, std::string("'") + key + "' must be an array of 3 numbers");
  return {number_in(v[0], key, -bound, bound), number_in(v[1], key, -bound, bound),
          number_in(v[2], key, -bound, bound)};
}

inline bool flag(const json& v, const char* key) {
  if (!v.is_boolean()) throw ProtocolError(ErrorCode::wrong_type, std::string("'") + key + "' must be a boolean");
  return v.get<bool>();
}

inline std::optional<double> optional_positive(const json& obj, const char* key, double hi) {
  auto it = obj.find(key);
  if (it == obj.end()) return std::nullopt;
  const double x = number_in(*it, key, 0.0, hi);
  if (!(x > 0.0)) throw ProtocolError(ErrorCode::range_violation, std::string("'") + key + "' must be > 0");
  return x;
}

inline Command decode_payload(std::string_view kind, const json& p) {
  if (kind == "twist") {
    return TwistCommand{{vec_in(field(p, "linear"), "linear", kMaxTwistComponent),
                         vec_in(field(p, "angular"), "angular", kMaxTwistComponent)}};
  }
  if (kind == "gripper") return GripperCommand{number_in(field(p, "value"), "value", 0.0, 1.0)};
  if (kind == "pedal") return PedalCommand{flag(field(p, "left"), "left"), flag(field(p, "right"), "right")};
  if (kind == "set_rcm") return SetRcmCommand{number_in(field(p, "offset"), "offset", kMinPivotArm, kMaxRcmOffset)};
  if (kind == "set_config") {
    SetConfigCommand c;
    c.alpha_t = optional_positive(p, "alpha_t", kMaxScale);
    c.alpha_r = optional_positive(p, "alpha_r", kMaxScale);
    c.gain_k = optional_positive(p, "gain_k", kMaxGain);
    c.v_max = optional_positive(p, "v_max", kMaxLinearClamp);
    c.omega_max = optional_positive(p, "omega_max", kMaxAngularClamp);
    return c;
  }
  throw ProtocolError(ErrorCode::unknown_kind, "unknown kind '" + std::string(kind) + "'");
}

}  // namespace detail

inline const char* kind_of(const Command& c) {
  static constexpr const char* names[] = {"twist", "gripper", "pedal", "set_rcm", "set_config"};
  return names[c.index()];
}

inline json twist_json(const Twist& tw) {
  return {{"linear", detail::vec_json(tw.linear)}, {"angular", detail::vec_json(tw.angular)}};
}

inline json to_json(const CommandMessage& msg) {
  json payload = std::visit(
      [](const auto& c) -> json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, TwistCommand>) {
          return twist_json(c.twist);
        } else if constexpr (std::is_same_v<T, GripperCommand>) {
          return {{"value", c.value}};
        } else if constexpr (std::is_same_v<T, PedalCommand>) {
          return {{"left", c.left}, {"right", c.right}};
        } else if constexpr (std::is_same_v<T, SetRcmCommand>) {
          return {{"offset", c.offset}};
        } else {
          json p = json::object();
          if (c.alpha_t) p["alpha_t"] = *c.alpha_t;
          if (c.alpha_r) p["alpha_r"] = *c.alpha_r;
          if (c.gain_k) p["gain_k"] = *c.gain_k;
          if (c.v_max) p["v_max"] = *c.v_max;
          if (c.omega_max) p["omega_max"] = *c.omega_max;
          return p;
        }
      },
      msg.command);
  return {{"kind", kind_of(msg.command)}, {"seq", msg.seq}, {"t_client", msg.t_client}, {"payload", payload}};
}

/// One line of the wire format, without the trailing newline.
inline std::string encode(const CommandMessage& msg) { return to_json(msg).dump(); }

inline CommandMessage from_json(const json& j) {
  using detail::field;
  if (!j.is_object()) throw ProtocolError(ErrorCode::not_object, "message must be a JSON object");

  const json& kind = field(j, "kind");
  if (!kind.is_string()) throw ProtocolError(ErrorCode::wrong_type, "'kind' must be a string");

  const json& seq = field(j, "seq");
  if (seq.is_number_integer() && !seq.is_number_unsigned())
    throw ProtocolError(ErrorCode::range_violation, "'seq' must be non-negative");
  if (!seq.is_number_unsigned()) throw ProtocolError(ErrorCode::wrong_type, "'seq' must be an integer");

  const json& t_client = field(j, "t_client");
  if (!t_client.is_number_integer()) throw ProtocolError(ErrorCode::wrong_type, "'t_client' must be an integer");
  if (!t_client.is_number_unsigned() && t_client.get<std::int64_t>() < 0)
    throw ProtocolError(ErrorCode::range_violation, "'t_client' must be non-negative");
  if (t_client.is_number_unsigned() &&
      t_client.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
    throw ProtocolError(ErrorCode::range_violation, "'t_client' too large");

  const json& payload = field(j, "payload");
  if (!payload.is_object()) throw ProtocolError(ErrorCode::wrong_type, "'payload' must be an object");

  CommandMessage msg;
  msg.seq = seq.get<std::uint64_t>();
  msg.t_client = t_client.get<std::int64_t>();
  msg.command = detail::decode_payload(kind.get_ref<const std::string&>(), payload);
  return msg;
}

/// Parses one wire line. Unknown fields are ignored.
inline CommandMessage decode(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ProtocolError(ErrorCode::syntax, e.what());
  } catch (const json::out_of_range& e) {
    throw ProtocolError(ErrorCode::range_violation, e.what());
  }
  return from_json(j);
}

/// Enforces strictly increasing seq within one operator session.
class SequenceGuard {
 public:
  void accept(const CommandMessage& msg) {
    if (last_ && msg.seq <= *last_)
      throw ProtocolError(ErrorCode::stale_seq,
                          "seq " + std::to_string(msg.seq) + " <= last accepted " + std::to_string(*last_));
    last_ = msg.seq;
  }
  void reset() { last_.reset(); }
  std::optional<std::uint64_t> last() const { return last_; }

 private:
  std::optional<std::uint64_t> last_;
};

/// Stateful decoder: decode plus the per-session sequence audit.
class Decoder {
 public:
  CommandMessage decode(std::string_view line) {
    CommandMessage msg = protocol::decode(line);
    guard_.accept(msg);
    return msg;
  }
  /// Sequence audit alone, for callers that validate between parse and accept.
  void accept(const CommandMessage& msg) { guard_.accept(msg); }
  void reset() { guard_.reset(); }

 private:
  SequenceGuard guard_;
};

inline json telemetry_json(const TelemetryFrame& f) {
  const auto q = f.world_EE.rotation.quaternion();
  return {{"kind", "telemetry"},
          {"t", f.t},
          {"ee", {{"p", detail::vec_json(f.world_EE.translation)}, {"q", {q[0], q[1], q[2], q[3]}}}},
          {"tip", detail::vec_json(f.tip)},
          {"jaw", f.jaw},
          {"rcm_drift", f.rcm_drift},
          {"enabled", f.enabled},
          {"commanded", twist_json(f.commanded)},
          {"gated", twist_json(f.gated)},
          {"clearance", f.clearance},
          {"last_seq_applied", f.last_seq_applied},
          {"fault", f.fault}};
}

inline std::string encode_telemetry(const TelemetryFrame& f) { return telemetry_json(f).dump(); }

inline std::string encode_error(ErrorCode code, const std::string& detail,
                                std::optional<std::uint64_t> seq = std::nullopt) {
  json j = {{"kind", "error"}, {"code", to_string(code)}, {"detail", detail}};
  if (seq) j["seq"] = *seq;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace rcmtel::protocol
