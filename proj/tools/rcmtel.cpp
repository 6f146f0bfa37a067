// rcmtel: headless entry points for the RCM teleoperation simulator.
//
//   rcmtel run     --scenario s.json [--config c.json] --out traj.csv
//   rcmtel replay  --log session.ndjson --out traj.csv
//   rcmtel analyze --input traj.csv --metric rms-accel|window-rms|window-mdf
//   rcmtel serve   [--config c.json] [--host H] [--port P] [--http-port Q]
//
// Exit codes: 0 success, 2 config error, 3 scenario/log error,
// 4 runtime invariant violation.

#include "rcmtel/command_log.hpp"
#include "rcmtel/config.hpp"
#include "rcmtel/metrics.hpp"
#include "rcmtel/scenario.hpp"
#include "rcmtel/service.hpp"

#include "CLI11.hpp"

#include <fmt/core.h>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using rcmtel::json;

constexpr int kExitConfig = 2;
constexpr int kExitScenario = 3;
constexpr int kExitInvariant = 4;

struct Overrides {
  std::optional<double> rate, alpha_t, alpha_r, gain_k, rcm_offset;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* app) {
    app->add_option("--rate", rate, "Control rate, Hz");
    app->add_option("--alpha-t", alpha_t, "Translational scale");
    app->add_option("--alpha-r", alpha_r, "Rotational scale");
    app->add_option("--gain-k", gain_k, "Drift-correction gain, 1/s");
    app->add_option("--rcm-offset", rcm_offset, "RCM distance behind the tip, m");
    app->add_option("--seed", seed, "Tremor seed");
  }

  void apply(json& cfg) const {
    if (rate) cfg["rate_hz"] = *rate;
    if (alpha_t) cfg["controller"]["alpha_t"] = *alpha_t;
    if (alpha_r) cfg["controller"]["alpha_r"] = *alpha_r;
    if (gain_k) cfg["controller"]["gain_k"] = *gain_k;
    if (rcm_offset) cfg["geometry"]["l"] = *rcm_offset;
    if (seed && cfg.contains("tremor") && cfg["tremor"].is_object()) cfg["tremor"]["seed"] = *seed;
  }
};

json base_config(const std::string& path) {
  return path.empty() ? json::object() : rcmtel::load_json_file(path);
}

int cmd_run(const std::string& scenario_path, const std::string& config_path, const std::string& out_path,
            const Overrides& overrides) {
  rcmtel::Scenario sc;
  try {
    sc = rcmtel::load_scenario(scenario_path);
  } catch (const std::exception& e) {
    std::cerr << "scenario error: " << e.what() << '\n';
    return kExitScenario;
  }
  rcmtel::SessionConfig cfg;
  try {
    json cfg_json = rcmtel::scenario_config_json(base_config(config_path), sc);
    overrides.apply(cfg_json);
    cfg = rcmtel::session_config_from_json(cfg_json);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  const auto frames = rcmtel::run_scenario(sc, cfg);
  if (!out_path.empty()) rcmtel::write_trajectory(out_path, frames);
  const auto s = rcmtel::summarize(frames, cfg);
  fmt::print("ticks            {}\n", frames.size());
  fmt::print("rms_accel_tip    {:.6g} m/s^2\n", s.rms_accel_tip);
  fmt::print("max_rcm_drift    {:.6g} m\n", s.max_rcm_drift);
  fmt::print("min_clearance    {:.6g} m\n", s.min_clearance);
  if (s.fault_ticks > 0) fmt::print("fault_ticks      {}\n", s.fault_ticks);
  if (!s.invariants_hold() || s.fault_ticks > 0) {
    std::cerr << "invariant violation: safety=" << s.safety_violations << " nonfinite=" << s.nonfinite_ticks
              << " jaw=" << s.jaw_violations << " faults=" << s.fault_ticks << '\n';
    return kExitInvariant;
  }
  return 0;
}

int cmd_replay(const std::string& log_path, const std::string& out_path) {
  rcmtel::CommandLog log;
  try {
    std::ifstream in(log_path);
    if (!in) throw rcmtel::LogError("cannot open " + log_path);
    log = rcmtel::read_command_log(in);
  } catch (const std::exception& e) {
    std::cerr << "log error: " << e.what() << '\n';
    return kExitScenario;
  }
  std::vector<rcmtel::TelemetryFrame> frames;
  try {
    frames = rcmtel::replay(log);
  } catch (const rcmtel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  rcmtel::write_trajectory(out_path, frames);
  fmt::print("replayed {} ticks, {} messages\n", frames.size(), log.entries.size());
  return 0;
}

std::vector<std::string> split_columns(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string c;
  while (std::getline(ss, c, ',')) out.push_back(rcmtel::trim(c));
  return out;
}

int cmd_analyze(const std::string& input, const std::string& metric, std::string column, const std::string& xyz,
                double window, double hop, const std::string& out_path) {
  namespace m = rcmtel::metrics;
  rcmtel::metrics::FeatureSeries features;
  try {
    const auto table = rcmtel::read_csv(input);
    const double rate = table.rate();
    if (metric == "rms-accel") {
      const auto cols = split_columns(xyz);
      if (cols.size() != 3) throw std::invalid_argument("--xyz needs three column names");
      const std::size_t cx = table.column(cols[0]), cy = table.column(cols[1]), cz = table.column(cols[2]);
      m::SampledSignal<rcmtel::Vec3> sig{rate, {}};
      for (const auto& r : table.rows) sig.samples.emplace_back(r[cx], r[cy], r[cz]);
      features.starts = {0.0};
      features.values = {m::rms_accel_norm(sig)};
    } else {
      if (column.empty()) {
        if (table.columns.size() < 2) throw std::invalid_argument("no data column");
        column = table.columns[1];
      }
      const m::SampledSignal<double> sig{rate, table.values(table.column(column))};
      features = metric == "window-rms" ? m::window_rms(sig, window, hop) : m::window_mdf(sig, window, hop);
    }
  } catch (const std::exception& e) {
    std::cerr << "analyze error: " << e.what() << '\n';
    return kExitScenario;
  }

  std::ofstream file;
  if (!out_path.empty()) file.open(out_path);
  std::ostream& out = out_path.empty() ? std::cout : file;
  out << "window_start_s,value\n";
  for (std::size_t i = 0; i < features.values.size(); ++i)
    out << fmt::format("{},{}\n", features.starts[i], features.values[i]);
  return 0;
}

std::atomic<bool> g_stop{false};

int cmd_serve(const std::string& config_path, std::string host, std::optional<int> port, int http_port,
              const std::string& log_path, const std::string& traj_path, double duration,
              const Overrides& overrides) {
  rcmtel::ServiceOptions opts;
  try {
    opts.config = base_config(config_path);
    overrides.apply(opts.config);
    rcmtel::session_config_from_json(opts.config);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  // RCMTEL_ENDPOINT=host:port fills in whatever the flags left unset.
  if (const char* env = std::getenv("RCMTEL_ENDPOINT")) {
    const std::string ep(env);
    const auto colon = ep.rfind(':');
    if (host.empty()) host = colon == std::string::npos ? ep : ep.substr(0, colon);
    if (!port && colon != std::string::npos) {
      try {
        port = std::stoi(ep.substr(colon + 1));
      } catch (const std::exception&) {
        std::cerr << "config error: bad RCMTEL_ENDPOINT '" << ep << "'\n";
        return kExitConfig;
      }
    }
  }
  opts.host = host.empty() ? "127.0.0.1" : host;
  opts.port = port.value_or(7070);
  opts.http_port = http_port;
  opts.log_path = log_path;
  opts.trajectory_path = traj_path;

  rcmtel::Service service(std::move(opts));
  try {
    service.start();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  fmt::print("listening tcp {}:{}", host.empty() ? "127.0.0.1" : host, service.tcp_port());
  if (service.http_port() > 0) fmt::print(", http {}", service.http_port());
  fmt::print("\n");
  std::fflush(stdout);

  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  const auto t0 = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    if (duration > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= duration)
      break;
  }
  service.stop();
  const auto st = service.stats();
  fmt::print("ticks {} deadline_misses {} telemetry_dropped {}\n", st.ticks, st.deadline_misses,
             st.telemetry_dropped);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RCM-constrained teleoperation simulator"};
  app.require_subcommand(1);

  std::string scenario, config, out, log, input, metric = "rms-accel", column, xyz = "tip_x,tip_y,tip_z";
  std::string host, traj;
  std::optional<int> port;
  int http_port = 7071;
  double window = 0.5, hop = 0.5, duration = 0.0;
  Overrides overrides;

  auto* run = app.add_subcommand("run", "Run a scripted scenario");
  run->add_option("--scenario", scenario, "Scenario JSON")->required();
  run->add_option("--config", config, "Session config JSON");
  run->add_option("--out", out, "Trajectory CSV output");
  overrides.add_to(run);

  auto* rep = app.add_subcommand("replay", "Replay a recorded command log");
  rep->add_option("--log", log, "Command log (NDJSON)")->required();
  rep->add_option("--out", out, "Trajectory CSV output")->required();

  auto* ana = app.add_subcommand("analyze", "Compute metrics over a CSV trace");
  ana->add_option("--input", input, "Trajectory or signal CSV")->required();
  ana->add_option("--metric", metric, "rms-accel | window-rms | window-mdf")
      ->check(CLI::IsMember({"rms-accel", "window-rms", "window-mdf"}));
  ana->add_option("--column", column, "Signal column for windowed metrics");
  ana->add_option("--xyz", xyz, "Position columns for rms-accel");
  ana->add_option("--window", window, "Window length, s");
  ana->add_option("--hop", hop, "Hop, s");
  ana->add_option("--out", out, "Feature CSV output (default stdout)");

  auto* srv = app.add_subcommand("serve", "Run the live teleoperation service");
  srv->add_option("--config", config, "Session config JSON");
  srv->add_option("--host", host, "Bind address (env RCMTEL_ENDPOINT=host:port)");
  srv->add_option("--port", port, "TCP port for the NDJSON stream");
  srv->add_option("--http-port", http_port, "HTTP port for browsers (-1 disables)");
  srv->add_option("--log", log, "Record the command log here");
  srv->add_option("--trajectory", traj, "Write the trajectory CSV here on shutdown");
  srv->add_option("--duration", duration, "Stop after this many seconds (0 = until SIGINT)");
  overrides.add_to(srv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(scenario, config, out, overrides);
    if (*rep) return cmd_replay(log, out);
    if (*ana) return cmd_analyze(input, metric, column, xyz, window, hop, out);
    if (*srv) return cmd_serve(config, host, port, http_port, log, traj, duration, overrides);
  } catch (const rcmtel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvariant;
  }
  return 0;
}
