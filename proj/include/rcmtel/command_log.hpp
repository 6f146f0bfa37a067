#pragma once

// Recorded command streams. A log is NDJSON:
//   {"kind":"session","config":{...effective session config...}}
//   {"tick":N,"msg":{...wire message...}}      (zero or more, tick order)
//   {"kind":"end","ticks":T}
// Messages are stored with the tick that consumed them, so replaying the
// log through a fresh Session reproduces the live trajectory exactly.

#include "rcmtel/config.hpp"
#include "rcmtel/protocol.hpp"
#include "rcmtel/session.hpp"

#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace rcmtel {

class LogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CommandLogWriter {
 public:
  CommandLogWriter(std::ostream& out, const json& config) : out_(out) {
    out_ << json{{"kind", "session"}, {"config", config}}.dump() << '\n';
  }

  void record(std::uint64_t tick, std::span<const CommandMessage> inbox) {
    for (const auto& m : inbox) out_ << json{{"tick", tick}, {"msg", protocol::to_json(m)}}.dump() << '\n';
  }

  void finish(std::uint64_t ticks) {
    out_ << json{{"kind", "end"}, {"ticks", ticks}}.dump() << '\n';
    out_.flush();
  }

 private:
  std::ostream& out_;
};

struct CommandLog {
  json config;
  std::vector<std::pair<std::uint64_t, CommandMessage>> entries;
  std::uint64_t ticks = 0;
};

inline CommandLog read_command_log(std::istream& in) {
  CommandLog log;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  bool have_end = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw LogError("log line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || j.value("kind", "") != "session" || !j.contains("config"))
        throw LogError("log: first line must be the session header");
      log.config = j.at("config");
      have_header = true;
      continue;
    }
    if (j.is_object() && j.value("kind", "") == "end") {
      log.ticks = j.value("ticks", std::uint64_t{0});
      have_end = true;
      continue;
    }
    if (!j.is_object() || !j.contains("tick") || !j.at("tick").is_number_unsigned() || !j.contains("msg"))
      throw LogError("log line " + std::to_string(lineno) + ": expected {tick, msg}");
    const auto tick = j.at("tick").get<std::uint64_t>();
    if (!log.entries.empty() && tick < log.entries.back().first)
      throw LogError("log line " + std::to_string(lineno) + ": ticks out of order");
    try {
      log.entries.emplace_back(tick, protocol::from_json(j.at("msg")));
    } catch (const protocol::ProtocolError& e) {
      throw LogError("log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw LogError("log: empty");
  if (!have_end) log.ticks = log.entries.empty() ? 0 : log.entries.back().first + 1;
  return log;
}

inline std::vector<TelemetryFrame> replay(const CommandLog& log) {
  Session session(session_config_from_json(log.config));
  std::vector<TelemetryFrame> frames;
  frames.reserve(log.ticks);
  std::size_t next = 0;
  std::vector<CommandMessage> inbox;
  for (std::uint64_t k = 0; k < log.ticks; ++k) {
    inbox.clear();
    while (next < log.entries.size() && log.entries[next].first == k) inbox.push_back(log.entries[next++].second);
    frames.push_back(session.tick(inbox));
  }
  return frames;
}

}  // namespace rcmtel
