#pragma once

// Live teleoperation service.
//
// One real-time loop thread owns the Session. Network threads talk to it
// only through a latest-value Mailbox (commands in) and a TelemetryHub with
// bounded per-subscriber queues (telemetry out; full queues drop the oldest
// frame, the loop never waits on a reader).
//
// Transports, both carrying the same JSON payloads:
//   * TCP, newline-delimited messages in both directions (one operator)
//   * HTTP for browsers: POST /command (NDJSON body), GET /telemetry
//     (server-sent events), GET /health

#include "rcmtel/command_log.hpp"
#include "rcmtel/config.hpp"
#include "rcmtel/protocol.hpp"
#include "rcmtel/scenario.hpp"
#include "rcmtel/session.hpp"

#include "httplib.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace rcmtel {

/// Latest-wins command slots, drained once per tick. Partial config updates
/// are merged so that no field of an undrained update is lost.
class Mailbox {
 public:
  void push(const CommandMessage& msg) {
    std::lock_guard lock(m_);
    const std::size_t kind = msg.command.index();
    if (auto* cfg = std::get_if<SetConfigCommand>(&msg.command); cfg && slots_[kind]) {
      auto& pending = std::get<SetConfigCommand>(slots_[kind]->command);
      if (cfg->alpha_t) pending.alpha_t = cfg->alpha_t;
      if (cfg->alpha_r) pending.alpha_r = cfg->alpha_r;
      if (cfg->gain_k) pending.gain_k = cfg->gain_k;
      if (cfg->v_max) pending.v_max = cfg->v_max;
      if (cfg->omega_max) pending.omega_max = cfg->omega_max;
      slots_[kind]->seq = std::max(slots_[kind]->seq, msg.seq);
      slots_[kind]->t_client = msg.t_client;
      return;
    }
    slots_[kind] = msg;
  }

  /// Pending messages in a fixed kind order: config, rcm, pedal, gripper, twist.
  std::vector<CommandMessage> drain() {
    static constexpr std::size_t order[] = {4, 3, 2, 1, 0};
    std::vector<CommandMessage> out;
    std::lock_guard lock(m_);
    for (std::size_t k : order) {
      if (slots_[k]) {
        out.push_back(std::move(*slots_[k]));
        slots_[k].reset();
      }
    }
    return out;
  }

 private:
  std::mutex m_;
  std::optional<CommandMessage> slots_[std::variant_size_v<Command>];
};

class TelemetryHub {
 public:
  explicit TelemetryHub(std::size_t capacity = 64) : capacity_(capacity) {}

  int subscribe() {
    std::lock_guard lock(m_);
    const int id = next_id_++;
    queues_[id];
    return id;
  }

  void unsubscribe(int id) {
    std::lock_guard lock(m_);
    queues_.erase(id);
  }

  void publish(std::string line) {
    {
      std::lock_guard lock(m_);
      for (auto& [id, q] : queues_) {
        if (q.size() >= capacity_) {
          q.pop_front();
          ++dropped_;
        }
        q.push_back(line);
      }
    }
    cv_.notify_all();
  }

  std::optional<std::string> pop(int id, std::chrono::milliseconds timeout) {
    std::unique_lock lock(m_);
    auto ready = [&] {
      auto it = queues_.find(id);
      return closed_ || it == queues_.end() || !it->second.empty();
    };
    if (!cv_.wait_for(lock, timeout, ready)) return std::nullopt;
    auto it = queues_.find(id);
    if (it == queues_.end() || it->second.empty()) return std::nullopt;
    std::string line = std::move(it->second.front());
    it->second.pop_front();
    return line;
  }

  void close() {
    {
      std::lock_guard lock(m_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  std::uint64_t dropped() const {
    std::lock_guard lock(m_);
    return dropped_;
  }

 private:
  mutable std::mutex m_;
  std::condition_variable cv_;
  std::map<int, std::deque<std::string>> queues_;
  std::size_t capacity_;
  std::uint64_t dropped_ = 0;
  int next_id_ = 1;
  bool closed_ = false;
};

/// Single-operator arbitration. TCP operators hold the slot for the life of
/// their connection; the HTTP operator holds it on a lease renewed by each
/// POST.
class OperatorSlot {
 public:
  using Clock = std::chrono::steady_clock;
  static constexpr int kHttpOwner = -1;

  /// Returns true if `owner` holds the slot afterwards. `fresh` is set when
  /// the slot changed hands (the new owner starts a new seq sequence).
  bool acquire(int owner, bool* fresh = nullptr, std::chrono::milliseconds lease = std::chrono::milliseconds(1000)) {
    std::lock_guard lock(m_);
    const auto now = Clock::now();
    const bool free = owner_ == 0 || (owner_ == kHttpOwner && now > lease_expiry_);
    if (owner_ != owner && !free) return false;
    if (fresh) *fresh = owner_ != owner || (owner == kHttpOwner && now > lease_expiry_);
    owner_ = owner;
    if (owner == kHttpOwner) lease_expiry_ = now + lease;
    return true;
  }

  void release(int owner) {
    std::lock_guard lock(m_);
    if (owner_ == owner) owner_ = 0;
  }

  /// Frees the slot if the HTTP lease has lapsed; true when that happened.
  bool reap_expired_lease() {
    std::lock_guard lock(m_);
    if (owner_ != kHttpOwner || Clock::now() <= lease_expiry_) return false;
    owner_ = 0;
    return true;
  }

 private:
  std::mutex m_;
  int owner_ = 0;
  Clock::time_point lease_expiry_{};
};

struct ServiceOptions {
  json config = json::object();  // effective session config
  std::string host = "127.0.0.1";
  int port = 7070;        // 0 picks a free port
  int http_port = 7071;   // 0 picks a free port, negative disables HTTP
  std::string log_path;         // command log (optional)
  std::string trajectory_path;  // trajectory CSV written at stop (optional)
  bool keep_trajectory = false; // keep frames in memory even without a path
};

struct ServiceStats {
  std::uint64_t ticks = 0;
  std::uint64_t deadline_misses = 0;
  std::uint64_t telemetry_dropped = 0;
};

class Service {
 public:
  explicit Service(ServiceOptions opts)
      : opts_(std::move(opts)), cfg_(session_config_from_json(opts_.config)), session_(cfg_) {}

  ~Service() { stop(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the endpoints and starts all threads. Throws std::runtime_error
  /// when an endpoint cannot be bound.
  void start() {
    listen_fd_ = bind_tcp(opts_.host, opts_.port);
    try {
      tcp_port_ = local_port(listen_fd_);
      if (opts_.http_port >= 0) setup_http();
      if (!opts_.log_path.empty()) {
        log_file_.open(opts_.log_path);
        if (!log_file_) throw std::runtime_error("cannot write " + opts_.log_path);
        log_ = std::make_unique<CommandLogWriter>(log_file_, opts_.config);
      }
    } catch (...) {
      if (http_) {
        http_->stop();
        if (http_thread_.joinable()) http_thread_.join();
      }
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw;
    }
    running_ = true;
    loop_thread_ = std::thread([this] { control_loop(); });
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (http_) http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
    if (accept_thread_.joinable()) accept_thread_.join();
    {
      std::lock_guard lock(conn_m_);
      for (auto& t : connections_)
        if (t.joinable()) t.join();
      connections_.clear();
    }
    if (loop_thread_.joinable()) loop_thread_.join();
    hub_.close();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
    if (log_) log_->finish(session_.ticks());
    if (!opts_.trajectory_path.empty()) write_trajectory(opts_.trajectory_path, trajectory_);
  }

  bool running() const { return running_; }
  int tcp_port() const { return tcp_port_; }
  int http_port() const { return http_port_; }

  ServiceStats stats() const {
    return {ticks_.load(), misses_.load(), hub_.dropped()};
  }

  /// Frames recorded when keep_trajectory or trajectory_path is set; valid
  /// to read after stop().
  const std::vector<TelemetryFrame>& trajectory() const { return trajectory_; }

 private:
  // -- control loop ---------------------------------------------------------

  void control_loop() {
    using Clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(cfg_.period()));
    auto deadline = Clock::now() + period;
    const bool keep = opts_.keep_trajectory || !opts_.trajectory_path.empty();
    while (running_) {
      if (slot_.reap_expired_lease()) release_pedals();
      const std::vector<CommandMessage> inbox = mailbox_.drain();
      const std::uint64_t tick = session_.ticks();
      const TelemetryFrame frame = session_.tick(inbox);
      if (log_) log_->record(tick, inbox);
      if (keep) trajectory_.push_back(frame);
      enabled_ = frame.enabled;
      ticks_ = session_.ticks();
      if (tick % static_cast<std::uint64_t>(cfg_.telemetry_decimation) == 0)
        hub_.publish(protocol::encode_telemetry(frame));

      const auto now = Clock::now();
      if (now > deadline) {
        ++misses_;
        // Far behind: resynchronize instead of bursting through missed ticks.
        if (now - deadline > 100 * period) deadline = now;
      }
      std::this_thread::sleep_until(deadline);
      deadline += period;
    }
  }

  /// Returns an error line for rejected input, nullopt when queued.
  std::optional<std::string> submit(protocol::Decoder& decoder, std::string_view line) {
    try {
      CommandMessage msg = protocol::decode(line);
      if (auto why = check_command(cfg_, msg.command))
        return protocol::encode_error(protocol::ErrorCode::range_violation, *why, msg.seq);
      decoder.accept(msg);
      mailbox_.push(msg);
      return std::nullopt;
    } catch (const protocol::ProtocolError& e) {
      return protocol::encode_error(e.code(), e.detail());
    }
  }

  void release_pedals() { mailbox_.push({0, 0, PedalCommand{false, false}}); }

  // -- TCP ------------------------------------------------------------------

  static int bind_tcp(const std::string& host, int port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw std::runtime_error("socket() failed");
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd);
      throw std::runtime_error("invalid IPv4 host '" + host + "'");
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(fd, 8) < 0) {
      ::close(fd);
      throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    return fd;
  }

  static int local_port(int fd) {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
  }

  static bool send_line(int fd, std::mutex& m, const std::string& line) {
    std::lock_guard lock(m);
    std::string buf = line;
    buf.push_back('\n');
    std::size_t sent = 0;
    while (sent < buf.size()) {
      const ssize_t n = ::send(fd, buf.data() + sent, buf.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) return false;
      sent += static_cast<std::size_t>(n);
    }
    return true;
  }

  void accept_loop() {
    int next_id = 1;
    while (running_) {
      pollfd p{listen_fd_, POLLIN, 0};
      if (::poll(&p, 1, 50) <= 0) continue;
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      const int id = next_id++;
      std::lock_guard lock(conn_m_);
      connections_.emplace_back([this, fd, id] { handle_connection(fd, id); });
    }
  }

  void handle_connection(int fd, int id) {
    std::mutex write_m;
    if (!slot_.acquire(id)) {
      send_line(fd, write_m, protocol::encode_error(protocol::ErrorCode::busy, "another operator is connected"));
      ::close(fd);
      return;
    }

    std::atomic<bool> open{true};
    const int sub = hub_.subscribe();
    std::thread writer([&] {
      while (open && running_) {
        if (auto line = hub_.pop(sub, std::chrono::milliseconds(50)))
          if (!send_line(fd, write_m, *line)) open = false;
      }
    });

    protocol::Decoder decoder;
    std::string buffer;
    char chunk[4096];
    constexpr std::size_t kMaxLine = 64 * 1024;
    while (open && running_) {
      pollfd p{fd, POLLIN, 0};
      if (::poll(&p, 1, 50) <= 0) continue;
      const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t pos;
      while ((pos = buffer.find('\n')) != std::string::npos) {
        std::string line = buffer.substr(0, pos);
        buffer.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (auto err = submit(decoder, line)) send_line(fd, write_m, *err);
      }
      if (buffer.size() > kMaxLine) {
        buffer.clear();
        send_line(fd, write_m, protocol::encode_error(protocol::ErrorCode::syntax, "line too long"));
      }
    }

    open = false;
    writer.join();
    hub_.unsubscribe(sub);
    release_pedals();
    slot_.release(id);
    ::close(fd);
  }

  // -- HTTP -----------------------------------------------------------------

  void setup_http() {
    http_ = std::make_unique<httplib::Server>();
    auto& svr = *http_;
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    svr.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    svr.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"ok", true}, {"ticks", ticks_.load()}, {"enabled", enabled_.load()}}.dump(),
                      "application/json");
    });

    svr.Post("/command", [this](const httplib::Request& req, httplib::Response& res) {
      bool fresh = false;
      std::lock_guard lock(http_m_);
      if (!slot_.acquire(OperatorSlot::kHttpOwner, &fresh)) {
        res.status = 409;
        res.set_content(protocol::encode_error(protocol::ErrorCode::busy, "another operator is connected") + "\n",
                        "application/x-ndjson");
        return;
      }
      if (fresh) http_decoder_.reset();
      std::string out;
      std::size_t start = 0;
      const std::string& body = req.body;
      while (start <= body.size()) {
        std::size_t end = body.find('\n', start);
        if (end == std::string::npos) end = body.size();
        std::string line = body.substr(start, end - start);
        start = end + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (auto err = submit(http_decoder_, line))
          out += *err + "\n";
        else
          out += json{{"kind", "ack"}}.dump() + "\n";
      }
      res.set_content(out, "application/x-ndjson");
    });

    svr.Get("/telemetry", [this](const httplib::Request&, httplib::Response& res) {
      const int sub = hub_.subscribe();
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream",
          [this, sub](std::size_t, httplib::DataSink& sink) {
            while (running_ && sink.is_writable()) {
              if (auto line = hub_.pop(sub, std::chrono::milliseconds(100))) {
                const std::string event = "data: " + *line + "\n\n";
                return sink.write(event.data(), event.size());
              }
            }
            sink.done();
            return true;
          },
          [this, sub](bool) { hub_.unsubscribe(sub); });
    });

    if (opts_.http_port == 0) {
      http_port_ = svr.bind_to_any_port(opts_.host);
    } else {
      http_port_ = svr.bind_to_port(opts_.host, opts_.http_port) ? opts_.http_port : -1;
    }
    if (http_port_ < 0) throw std::runtime_error("cannot bind HTTP port " + std::to_string(opts_.http_port));
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  }

  ServiceOptions opts_;
  SessionConfig cfg_;
  Session session_;

  Mailbox mailbox_;
  TelemetryHub hub_;
  OperatorSlot slot_;

  std::atomic<bool> running_{false};
  std::atomic<bool> enabled_{false};
  std::atomic<std::uint64_t> ticks_{0};
  std::atomic<std::uint64_t> misses_{0};

  int listen_fd_ = -1;
  int tcp_port_ = -1;
  int http_port_ = -1;

  std::thread loop_thread_;
  std::thread accept_thread_;
  std::thread http_thread_;
  std::mutex conn_m_;
  std::list<std::thread> connections_;

  std::unique_ptr<httplib::Server> http_;
  std::mutex http_m_;
  protocol::Decoder http_decoder_;

  std::ofstream log_file_;
  std::unique_ptr<CommandLogWriter> log_;
  std::vector<TelemetryFrame> trajectory_;
};

}  // namespace rcmtel
