#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "knotgrad/dynamics.hpp"
#include "knotgrad/io.hpp"
#include "knotgrad/knot.hpp"

namespace knotgrad::service {

inline constexpr int protocol_version = 1;

/// Unknown session, closed session, or a command with out-of-range arguments.
class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace cmd {
struct Run {};
struct Pause {};
struct SetMode {
  Mode mode = Mode::damped;
};
struct SetExponent {
  double exponent = 2.0;
};
struct Perturb {
  double magnitude = 0.0;
  std::uint64_t seed = 1;
};
struct RescaleGauge {};
struct Snapshot {
  std::string label;
};
}  // namespace cmd

using Command = std::variant<cmd::Run, cmd::Pause, cmd::SetMode, cmd::SetExponent, cmd::Perturb, cmd::RescaleGauge,
                             cmd::Snapshot>;

inline std::string_view command_name(const Command& c) {
  static constexpr std::string_view names[] = {"run",       "pause",         "set_mode", "set_exponent",
                                               "perturb",   "rescale_gauge", "snapshot"};
  return names[c.index()];
}

inline nlohmann::json command_to_json(const Command& c) {
  nlohmann::json j = {{"type", command_name(c)}};
  if (const auto* m = std::get_if<cmd::SetMode>(&c)) j["mode"] = to_string(m->mode);
  if (const auto* e = std::get_if<cmd::SetExponent>(&c)) j["d"] = e->exponent;
  if (const auto* p = std::get_if<cmd::Perturb>(&c)) {
    j["magnitude"] = p->magnitude;
    j["seed"] = p->seed;
  }
  if (const auto* s = std::get_if<cmd::Snapshot>(&c)) j["label"] = s->label;
  return j;
}

/// Parses {type, ...args}; validates argument ranges.
inline Command parse_command(const nlohmann::json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "run") return cmd::Run{};
    if (type == "pause") return cmd::Pause{};
    if (type == "rescale_gauge") return cmd::RescaleGauge{};
    if (type == "set_mode") return cmd::SetMode{parse_mode(j.at("mode").get<std::string>())};
    if (type == "set_exponent") {
      const double d = j.at("d").get<double>();
      if (!(d >= 2.0 && d <= 6.0)) throw ServiceError("set_exponent: d must lie in [2, 6]");
      return cmd::SetExponent{d};
    }
    if (type == "perturb") {
      const double mag = j.at("magnitude").get<double>();
      if (!(mag >= 0.0)) throw ServiceError("perturb: magnitude must be >= 0");
      return cmd::Perturb{mag, j.value("seed", std::uint64_t{1})};
    }
    if (type == "snapshot") return cmd::Snapshot{j.value("label", std::string{})};
    throw ServiceError("unknown command '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(std::string("malformed command: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ServiceError(e.what());
  }
}

struct LogEntry {
  long arrival_step = 0;
  Command command;
};

/// Applies one command between steps. `running` is the session run flag.
inline SimState apply_command(SimState s, const Command& c, bool& running) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, cmd::Run>) {
          running = true;
        } else if constexpr (std::is_same_v<T, cmd::Pause>) {
          running = false;
        } else if constexpr (std::is_same_v<T, cmd::SetMode>) {
          s = set_mode(std::move(s), x.mode);
        } else if constexpr (std::is_same_v<T, cmd::SetExponent>) {
          s = set_exponent(std::move(s), x.exponent);
        } else if constexpr (std::is_same_v<T, cmd::Perturb>) {
          s = perturb(std::move(s), x.magnitude, x.seed);
        } else if constexpr (std::is_same_v<T, cmd::RescaleGauge>) {
          s.knot = apply_gauge(s.knot);
        }
      },
      c);
  return s;
}

/// Re-runs a steered session from its initial state: the logged commands are
/// applied at their arrival steps, and the state is stepped up to
/// `final_step`.
inline SimState replay(SimState s, const std::vector<LogEntry>& log, long final_step) {
  bool running = false;
  std::size_t next = 0;
  while (true) {
    while (next < log.size() && log[next].arrival_step == s.step_index) s = apply_command(std::move(s), log[next++].command, running);
    if (next < log.size() && log[next].arrival_step < s.step_index) throw ServiceError("command log out of order");
    if (s.step_index >= final_step) break;
    s = step(s);
  }
  return s;
}

inline nlohmann::json log_to_json(const std::vector<LogEntry>& log) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : log) arr.push_back({{"arrival_step", e.arrival_step}, {"command", command_to_json(e.command)}});
  return arr;
}

inline std::vector<LogEntry> log_from_json(const nlohmann::json& arr) {
  std::vector<LogEntry> log;
  try {
    for (const auto& e : arr) log.push_back({e.at("arrival_step").get<long>(), parse_command(e.at("command"))});
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(std::string("malformed command log: ") + e.what());
  }
  return log;
}

/// Snapshot message: step, mode, energies and the full vertex array.
inline nlohmann::json snapshot_message(const std::string& session, const SimState& s, bool running, bool stable,
                                       const std::string& label = {}) {
  const auto& k = s.knot;
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t c = 0; c < k.component_count(); ++c) {
    nlohmann::json loop = nlohmann::json::array();
    for (const auto& v : k.component(c)) loop.push_back({round_sig(v.x), round_sig(v.y), round_sig(v.z)});
    comps.push_back(std::move(loop));
  }
  nlohmann::json j = {{"type", "snapshot"},
                      {"session", session},
                      {"step", s.step_index},
                      {"step_index", s.step_index},
                      {"mode", to_string(s.params.mode)},
                      {"exponent", s.params.force_field.exponent},
                      {"simon_energy", round_sig(simon_energy(k))},
                      {"spring_energy", round_sig(spring_energy(k, s.params.force_field))},
                      {"min_clearance", round_sig(k.min_clearance())},
                      {"total_length", round_sig(k.total_length())},
                      {"running", running},
                      {"stable", stable},
                      {"components", std::move(comps)}};
  if (!label.empty()) j["label"] = label;
  return j;
}

/// One steered simulation. Commands are queued from any thread and drained
/// by tick() between steps; tick() is called by exactly one driver.
class Session {
 public:
  using Subscriber = std::function<void(const nlohmann::json&)>;

  Session(std::string id, SimState initial, int record_interval)
      : id_(std::move(id)), initial_(initial), state_(std::move(initial)), record_interval_(record_interval) {
    if (record_interval_ < 1) throw ServiceError("record_interval must be >= 1");
  }

  const std::string& id() const { return id_; }

  void enqueue(Command c) {
    {
      std::lock_guard lock(queue_mutex_);
      if (closed_) throw ServiceError("session " + id_ + " is closed");
      queue_.push_back(std::move(c));
    }
    wake_.notify_all();
  }

  /// Drains pending commands, then advances one step if running. Returns
  /// true when a step was taken.
  bool tick() {
    std::vector<nlohmann::json> out;
    bool stepped = false;
    {
      std::lock_guard lock(state_mutex_);
      std::deque<Command> pending;
      {
        std::lock_guard q(queue_mutex_);
        pending.swap(queue_);
      }
      for (auto& c : pending) {
        log_.push_back({state_.step_index, c});
        state_ = apply_command(std::move(state_), c, running_);
        if (const auto* snap = std::get_if<cmd::Snapshot>(&c)) {
          out.push_back(snapshot_message(id_, state_, running_, stable(), snap->label));
        }
      }
      if (running_) {
        state_ = step(state_);
        stepped = true;
        if (state_.step_index % record_interval_ == 0) {
          trace_.push_back(record_of(state_));
          out.push_back(snapshot_message(id_, state_, running_, stable()));
        }
      }
    }
    publish(out);
    return stepped;
  }

  /// Blocks until a command is queued, the session closes, or `timeout`.
  void wait_for_command(std::chrono::milliseconds timeout) {
    std::unique_lock lock(queue_mutex_);
    wake_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
  }

  int subscribe(Subscriber s) {
    std::lock_guard lock(sub_mutex_);
    subscribers_.emplace(next_token_, std::move(s));
    return next_token_++;
  }

  void unsubscribe(int token) {
    std::lock_guard lock(sub_mutex_);
    subscribers_.erase(token);
  }

  std::size_t subscriber_count() const {
    std::lock_guard lock(sub_mutex_);
    return subscribers_.size();
  }

  SimState state() const {
    std::lock_guard lock(state_mutex_);
    return state_;
  }

  bool running() const {
    std::lock_guard lock(state_mutex_);
    return running_;
  }

  std::vector<LogEntry> command_log() const {
    std::lock_guard lock(state_mutex_);
    return log_;
  }

  /// Everything needed to replay the session: initial knot and parameters,
  /// the command log, and the current step.
  nlohmann::json export_log() const {
    std::lock_guard lock(state_mutex_);
    return {{"protocol", protocol_version},
            {"session", id_},
            {"initial", {{"knot", knot_to_json(initial_.knot)}, {"params", params_to_json(initial_.params)}}},
            {"commands", log_to_json(log_)},
            {"final_step", state_.step_index}};
  }

  void close() {
    {
      std::lock_guard lock(queue_mutex_);
      closed_ = true;
    }
    wake_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(queue_mutex_);
    return closed_;
  }

 private:
  bool stable() const {
    const auto& p = state_.params;
    return is_stable(trace_, p.stability_window, p.stability_epsilon);
  }

  void publish(const std::vector<nlohmann::json>& messages) {
    if (messages.empty()) return;
    std::vector<Subscriber> subs;
    {
      std::lock_guard lock(sub_mutex_);
      for (const auto& [token, s] : subscribers_) subs.push_back(s);
    }
    for (const auto& m : messages) {
      for (const auto& s : subs) s(m);
    }
  }

  std::string id_;
  SimState initial_;
  SimState state_;
  int record_interval_;
  bool running_ = false;
  EnergyTrace trace_;
  std::vector<LogEntry> log_;
  mutable std::mutex state_mutex_;

  std::deque<Command> queue_;
  bool closed_ = false;
  mutable std::mutex queue_mutex_;
  std::condition_variable wake_;

  std::map<int, Subscriber> subscribers_;
  int next_token_ = 1;
  mutable std::mutex sub_mutex_;
};

/// Sessions with one driver thread each.
class SessionManager {
 public:
  SessionManager() = default;
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;
  ~SessionManager() { close_all(); }

  std::string create_session(SimState initial, int record_interval = 100) {
    std::lock_guard lock(mutex_);
    const std::string id = "s" + std::to_string(next_id_++);
    auto entry = std::make_shared<Entry>();
    entry->session = std::make_shared<Session>(id, std::move(initial), record_interval);
    entry->driver = std::thread([s = entry->session] {
      while (!s->closed()) {
        if (!s->tick() && !s->closed()) s->wait_for_command(std::chrono::milliseconds(50));
      }
    });
    sessions_.emplace(id, std::move(entry));
    return id;
  }

  std::string create_session(const TorusKnotSpec& spec, const SimParams& params, int record_interval = 100) {
    try {
      return create_session(SimState(generate_torus(spec), params), record_interval);
    } catch (const std::invalid_argument& e) {
      throw ServiceError(e.what());
    }
  }

  std::shared_ptr<Session> session(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError("unknown session '" + id + "'");
    return it->second->session;
  }

  void control(const std::string& id, Command c) { session(id)->enqueue(std::move(c)); }

  int subscribe(const std::string& id, Session::Subscriber s) { return session(id)->subscribe(std::move(s)); }

  void unsubscribe(const std::string& id, int token) {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it != sessions_.end()) it->second->session->unsubscribe(token);
  }

  void close(const std::string& id) {
    std::shared_ptr<Entry> entry;
    {
      std::lock_guard lock(mutex_);
      const auto it = sessions_.find(id);
      if (it == sessions_.end()) throw ServiceError("unknown session '" + id + "'");
      entry = it->second;
      sessions_.erase(it);
    }
    entry->session->close();
    if (entry->driver.joinable()) entry->driver.join();
  }

  void close_all() {
    std::vector<std::string> ids;
    {
      std::lock_guard lock(mutex_);
      for (const auto& [id, e] : sessions_) ids.push_back(id);
    }
    for (const auto& id : ids) close(id);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
  }

 private:
  struct Entry {
    std::shared_ptr<Session> session;
    std::thread driver;
  };
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  int next_id_ = 1;
};

inline nlohmann::json hello_message() {
  return {{"type", "hello"}, {"protocol", protocol_version}, {"server", "knotgrad"}};
}

inline nlohmann::json error_message(const std::string& what, const nlohmann::json& id = nullptr) {
  nlohmann::json j = {{"type", "error"}, {"message", what}};
  if (!id.is_null()) j["id"] = id;
  return j;
}

/// Transport-independent request handling for one client connection.
/// `send` delivers a message to this client (from any thread); the
/// connection owns the subscriptions and drops them on destruction.
class Connection {
 public:
  using Send = std::function<void(const nlohmann::json&)>;

  Connection(SessionManager& manager, Send send) : manager_(manager), send_(std::move(send)) {}
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;
  ~Connection() {
    for (const auto& [id, token] : subscriptions_) manager_.unsubscribe(id, token);
  }

  /// Handles one client message; the reply (if any) is returned and also
  /// sent.
  nlohmann::json handle(std::string_view text) {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      return reply(error_message(std::string("malformed message: ") + e.what()));
    }
    const nlohmann::json id = req.is_object() && req.contains("id") ? req["id"] : nlohmann::json(nullptr);
    try {
      auto out = dispatch(req);
      if (!id.is_null()) out["id"] = id;
      return reply(out);
    } catch (const std::exception& e) {
      return reply(error_message(e.what(), id));
    }
  }

 private:
  nlohmann::json reply(nlohmann::json j) {
    send_(j);
    return j;
  }

  nlohmann::json dispatch(const nlohmann::json& req) {
    if (!req.is_object() || !req.contains("type") || !req["type"].is_string()) {
      throw ServiceError("message needs a string 'type'");
    }
    const std::string type = req["type"];
    if (type == "create") return create(req);
    const std::string session = req.at("session").get<std::string>();
    if (type == "subscribe") {
      auto send = send_;
      subscriptions_.emplace_back(session, manager_.subscribe(session, [send](const nlohmann::json& m) { send(m); }));
      return {{"type", "subscribed"}, {"session", session}};
    }
    if (type == "unsubscribe") {
      for (auto it = subscriptions_.begin(); it != subscriptions_.end();) {
        if (it->first == session) {
          manager_.unsubscribe(session, it->second);
          it = subscriptions_.erase(it);
        } else {
          ++it;
        }
      }
      return {{"type", "unsubscribed"}, {"session", session}};
    }
    if (type == "log") return {{"type", "log"}, {"session", session}, {"log", manager_.session(session)->export_log()}};
    if (type == "close") {
      manager_.close(session);
      return {{"type", "closed"}, {"session", session}};
    }
    const Command c = parse_command(req);
    manager_.control(session, c);
    return {{"type", "ack"}, {"session", session}, {"command", command_name(c)}};
  }

  nlohmann::json create(const nlohmann::json& req) {
    SimParams params = req.contains("params") ? params_from_json(req["params"]) : SimParams{};
    const int interval = req.value("record_interval", 100);
    std::string id;
    if (req.contains("knot")) {
      id = manager_.create_session(SimState(knot_from_json(req["knot"]), params), interval);
    } else {
      const auto& s = req.contains("spec") ? req["spec"] : nlohmann::json::object();
      TorusKnotSpec spec;
      spec.p = s.value("p", spec.p);
      spec.q = s.value("q", spec.q);
      spec.n = s.value("n", spec.n);
      spec.R = s.value("R", spec.R);
      spec.r = s.value("r", spec.r);
      id = manager_.create_session(spec, params, interval);
    }
    return {{"type", "created"}, {"session", id}};
  }

  SessionManager& manager_;
  Send send_;
  std::vector<std::pair<std::string, int>> subscriptions_;
};

}  // namespace knotgrad::service
