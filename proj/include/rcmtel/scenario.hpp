#pragma once

// Scripted scenarios, trajectory CSV files and trajectory summaries.
//
// A scenario file is JSON:
//   {
//     "duration": 10.0,
//     "config": { ...session config patch... },
//     "events": [ {"t": 0.0, "kind": "pedal", "payload": {"left": true, "right": true}},
//                 {"t": 0.2, "kind": "twist", "payload": {"linear": [..], "angular": [..]}} ]
//   }
// Event payloads use the wire schema. Scripted twists hold until the next
// twist event unless the config patch sets "staleness_s".

#include "rcmtel/config.hpp"
#include "rcmtel/metrics.hpp"
#include "rcmtel/protocol.hpp"
#include "rcmtel/session.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace rcmtel {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScenarioEvent {
  double t = 0.0;
  Command command;
};

struct Scenario {
  double duration = 0.0;
  json config_patch = json::object();
  std::vector<ScenarioEvent> events;
};

inline Scenario scenario_from_json(const json& j) {
  if (!j.is_object()) throw ScenarioError("scenario: top level must be an object");
  Scenario sc;
  if (!j.contains("duration") || !j.at("duration").is_number())
    throw ScenarioError("scenario: 'duration' (s) is required");
  sc.duration = j.at("duration").get<double>();
  if (!(sc.duration > 0.0 && std::isfinite(sc.duration))) throw ScenarioError("scenario: duration must be > 0");
  if (j.contains("config")) {
    if (!j.at("config").is_object()) throw ScenarioError("scenario: 'config' must be an object");
    sc.config_patch = j.at("config");
  }
  if (j.contains("events")) {
    const auto& events = j.at("events");
    if (!events.is_array()) throw ScenarioError("scenario: 'events' must be an array");
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto& e = events[i];
      try {
        if (!e.is_object() || !e.contains("t") || !e.at("t").is_number() || !e.contains("kind") ||
            !e.at("kind").is_string() || !e.contains("payload") || !e.at("payload").is_object())
          throw ScenarioError("needs numeric 't', string 'kind' and object 'payload'");
        const double t = e.at("t").get<double>();
        if (!(t >= 0.0 && t <= sc.duration)) throw ScenarioError("'t' outside [0, duration]");
        sc.events.push_back(
            {t, protocol::detail::decode_payload(e.at("kind").get_ref<const std::string&>(), e.at("payload"))});
      } catch (const std::exception& ex) {
        throw ScenarioError("scenario: event " + std::to_string(i) + ": " + ex.what());
      }
    }
  }
  std::stable_sort(sc.events.begin(), sc.events.end(),
                   [](const ScenarioEvent& a, const ScenarioEvent& b) { return a.t < b.t; });
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ScenarioError(path + ": " + e.what());
  }
  return scenario_from_json(j);
}

/// Effective session config JSON for a scenario: base config, twist holding
/// enabled, then the scenario's own patch.
inline json scenario_config_json(const json& base, const Scenario& sc) {
  json merged = base.is_object() ? base : json::object();
  merged["staleness_s"] = nullptr;
  merge_json(merged, sc.config_patch);
  return merged;
}

/// Runs the fixed-rate loop for round(duration * rate) ticks.
inline std::vector<TelemetryFrame> run_scenario(const Scenario& sc, const SessionConfig& cfg) {
  Session session(cfg);
  const auto ticks = static_cast<std::uint64_t>(std::llround(sc.duration * cfg.rate_hz));
  std::vector<TelemetryFrame> out;
  out.reserve(ticks);

  std::vector<CommandMessage> messages;
  messages.reserve(sc.events.size());
  for (std::size_t i = 0; i < sc.events.size(); ++i)
    messages.push_back({i + 1, std::llround(sc.events[i].t * 1000.0), sc.events[i].command});

  std::size_t next = 0;
  std::vector<CommandMessage> inbox;
  for (std::uint64_t k = 0; k < ticks; ++k) {
    inbox.clear();
    while (next < messages.size() &&
           static_cast<std::uint64_t>(std::llround(sc.events[next].t * cfg.rate_hz)) <= k)
      inbox.push_back(messages[next++]);
    out.push_back(session.tick(inbox));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory CSV

inline constexpr const char* kTrajectoryHeader =
    "t,ee_x,ee_y,ee_z,ee_qw,ee_qx,ee_qy,ee_qz,tip_x,tip_y,tip_z,rcm_drift_m,jaw_rad,clearance_m,enabled";

/// One CSV row; doubles use the shortest representation that round-trips.
inline std::string trajectory_row(const TelemetryFrame& f) {
  const auto q = f.world_EE.rotation.quaternion();
  const Vec3& p = f.world_EE.translation;
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}", f.t, p.x(), p.y(), p.z(), q[0], q[1], q[2],
                     q[3], f.tip.x(), f.tip.y(), f.tip.z(), f.rcm_drift, f.jaw, f.clearance, f.enabled ? 1 : 0);
}

inline void write_trajectory(std::ostream& out, std::span<const TelemetryFrame> frames) {
  out << kTrajectoryHeader << '\n';
  for (const auto& f : frames) out << trajectory_row(f) << '\n';
}

inline void write_trajectory(const std::string& path, std::span<const TelemetryFrame> frames) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_trajectory(out, frames);
}

/// Numeric CSV with a header row.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::invalid_argument("csv: no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
  }

  std::vector<double> values(std::size_t col) const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r[col]);
    return v;
  }

  /// Sampling rate from the first column, which must be uniformly spaced time.
  double rate() const {
    if (rows.size() < 2) throw std::invalid_argument("csv: need at least two rows to infer the rate");
    const double dt = rows[1][0] - rows[0][0];
    if (!(dt > 0.0)) throw std::invalid_argument("csv: time column must be increasing");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (std::abs(rows[i][0] - rows[i - 1][0] - dt) > 1e-6 * dt + 1e-12)
        throw std::invalid_argument("csv: time column is not uniformly sampled");
    }
    return 1.0 / dt;
  }
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: empty input");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.columns.push_back(trim(cell));
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        const std::string c = trim(cell);
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw std::invalid_argument("csv: line " + std::to_string(lineno) + ": non-numeric cell '" + cell + "'");
      }
    }
    if (row.size() != t.columns.size())
      throw std::invalid_argument("csv: line " + std::to_string(lineno) + ": wrong number of cells");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  return read_csv(in);
}

// ---------------------------------------------------------------------------
// Summaries

struct TrajectorySummary {
  double rms_accel_tip = 0.0;  // m/s^2
  double max_rcm_drift = 0.0;  // m
  double min_clearance = 0.0;  // m
  std::size_t fault_ticks = 0;
  std::size_t safety_violations = 0;  // disabled ticks with a nonzero gated twist
  std::size_t nonfinite_ticks = 0;
  std::size_t jaw_violations = 0;

  bool invariants_hold() const { return safety_violations == 0 && nonfinite_ticks == 0 && jaw_violations == 0; }
};

inline TrajectorySummary summarize(std::span<const TelemetryFrame> frames, const SessionConfig& cfg) {
  TrajectorySummary s;
  if (frames.empty()) return s;
  s.min_clearance = frames.front().clearance;
  metrics::SampledSignal<Vec3> tip{cfg.rate_hz, {}};
  tip.samples.reserve(frames.size());
  for (const auto& f : frames) {
    tip.samples.push_back(f.tip);
    s.max_rcm_drift = std::max(s.max_rcm_drift, f.rcm_drift);
    s.min_clearance = std::min(s.min_clearance, f.clearance);
    if (f.fault) ++s.fault_ticks;
    if (!f.enabled && !f.gated.is_exact_zero()) ++s.safety_violations;
    if (!f.gated.finite() || !is_finite(f.tip) || !is_finite(f.world_EE.translation)) ++s.nonfinite_ticks;
    if (f.jaw < 0.0 || f.jaw > cfg.jaw.jaw_max) ++s.jaw_violations;
  }
  if (tip.size() >= 3) s.rms_accel_tip = metrics::rms_accel_norm(tip);
  return s;
}

}  // namespace rcmtel
