// Copyright 2026 The diloco-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "transport.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <thread>

#include "config.hpp"
#include "error.hpp"
#include "net.hpp"
#include "rng.hpp"
#include "wire.hpp"

namespace diloco {
namespace {

using net::Clock;
using std::chrono::milliseconds;

constexpr milliseconds kHandshakeTimeout{5000};
constexpr milliseconds kSendTimeout{10000};
constexpr milliseconds kShutdownGrace{2000};

void log_to(const std::function<void(const std::string&)>& sink,
            const std::string& line) {
  if (sink) sink(line);
}

milliseconds seconds_ms(double s) {
  return milliseconds(static_cast<std::int64_t>(s * 1000.0));
}

struct Event {
  std::uint32_t worker_id = 0;
  std::uint64_t generation = 0;
  bool closed = false;
  wire::Message msg;
  std::string error;
  Clock::time_point at;
};

struct Conn {
  std::shared_ptr<net::Socket> sock;
  std::uint64_t generation = 0;
  bool alive = false;
  bool fresh = false;  // joined since its last PARAMS
  std::thread reader;
};

// Connection registry and inbox shared by the acceptor, the per-connection
// readers and the coordinator's main loop.
class Hub {
 public:
  Hub(std::size_t k, std::uint64_t hash, net::Socket listener,
      std::function<void(const std::string&)> log)
      : conns_(k), hash_(hash), listener_(std::move(listener)),
        log_(std::move(log)) {}

  ~Hub() { stop(); }

  void start() {
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  std::size_t alive_count() {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(
        conns_.begin(), conns_.end(), [](const Conn& c) { return c.alive; }));
  }

  bool wait_for_all(Clock::time_point deadline) {
    std::unique_lock lock(mu_);
    return cv_.wait_until(lock, deadline, [&] {
      return std::all_of(conns_.begin(), conns_.end(),
                         [](const Conn& c) { return c.alive; });
    });
  }

  struct Target {
    std::shared_ptr<net::Socket> sock;
    std::uint64_t generation = 0;
    bool fresh = false;
  };

  std::optional<Target> target(std::uint32_t id) {
    std::lock_guard lock(mu_);
    const Conn& c = conns_[id];
    if (!c.alive) return std::nullopt;
    return Target{c.sock, c.generation, c.fresh};
  }

  void mark_synced(std::uint32_t id, std::uint64_t gen) {
    std::lock_guard lock(mu_);
    if (conns_[id].generation == gen) conns_[id].fresh = false;
  }

  bool is_current(std::uint32_t id, std::uint64_t gen) {
    std::lock_guard lock(mu_);
    return conns_[id].alive && conns_[id].generation == gen;
  }

  void kill(std::uint32_t id, std::uint64_t gen, const std::string& why) {
    std::shared_ptr<net::Socket> sock;
    {
      std::lock_guard lock(mu_);
      Conn& c = conns_[id];
      if (c.generation != gen || !c.alive) return;
      c.alive = false;
      sock = c.sock;
    }
    log_to(log_, "worker " + std::to_string(id) + " disconnected: " + why);
    sock->shutdown_both();
    cv_.notify_all();
  }

  std::optional<Event> next_event(Clock::time_point deadline) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_until(lock, deadline, [&] { return !inbox_.empty(); })) {
      return std::nullopt;
    }
    Event e = std::move(inbox_.front());
    inbox_.pop_front();
    return e;
  }

  // Gives connected workers a grace period to close after SHUTDOWN, then
  // tears everything down.
  void stop() {
    if (stopped_.exchange(true)) return;
    {
      std::unique_lock lock(mu_);
      cv_.wait_until(lock, Clock::now() + kShutdownGrace, [&] {
        return std::none_of(conns_.begin(), conns_.end(),
                            [](const Conn& c) { return c.alive; });
      });
    }
    stopping_ = true;
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> readers;
    {
      std::lock_guard lock(mu_);
      for (Conn& c : conns_) {
        if (c.sock) c.sock->shutdown_both();
        if (c.reader.joinable()) readers.push_back(std::move(c.reader));
      }
    }
    for (auto& r : readers) r.join();
  }

 private:
  void push(Event e) {
    {
      std::lock_guard lock(mu_);
      if (e.closed && conns_[e.worker_id].generation == e.generation) {
        conns_[e.worker_id].alive = false;
      }
      inbox_.push_back(std::move(e));
    }
    cv_.notify_all();
  }

  void reject(const net::Socket& s, wire::JoinReject reason,
              std::uint32_t id) {
    log_to(log_, "refused JOIN from worker " + std::to_string(id) + ": " +
                     wire::describe(reason));
    try {
      net::send_message(s, {wire::MsgType::kShutdown, wire::kRejectMarker,
                            static_cast<std::uint32_t>(reason), {}, false});
    } catch (const Error&) {
    }
  }

  void handshake(net::Socket sock) {
    net::set_send_timeout(sock, kSendTimeout);
    wire::Message join;
    try {
      if (net::recv_message(sock, join, Clock::now() + kHandshakeTimeout) !=
          net::ReadStatus::kOk) {
        return;
      }
    } catch (const Error& e) {
      log_to(log_, std::string("bad JOIN frame: ") + e.what());
      reject(sock, wire::JoinReject::kMalformed, 0);
      return;
    }
    if (join.type != wire::MsgType::kJoin || join.payload.size() != 1 ||
        join.f32) {
      reject(sock, wire::JoinReject::kMalformed, join.worker_id);
      return;
    }
    const std::uint32_t id = join.worker_id;
    if (id >= conns_.size()) {
      reject(sock, wire::JoinReject::kWorkerOutOfRange, id);
      return;
    }
    if (wire::hash_word(join) != hash_) {
      reject(sock, wire::JoinReject::kConfigMismatch, id);
      return;
    }
    std::thread old_reader;
    std::uint64_t gen = 0;
    auto shared = std::make_shared<net::Socket>(std::move(sock));
    {
      std::lock_guard lock(mu_);
      Conn& c = conns_[id];
      if (c.alive) {
        reject(*shared, wire::JoinReject::kDuplicateWorker, id);
        return;
      }
      try {
        net::send_message(*shared, wire::make_join_ack(id, hash_));
      } catch (const Error&) {
        return;
      }
      old_reader = std::move(c.reader);
      c.sock = shared;
      c.generation += 1;
      c.alive = true;
      c.fresh = true;
      gen = c.generation;
      c.reader = std::thread([this, id, gen, shared] { read_loop(id, gen, shared); });
    }
    if (old_reader.joinable()) old_reader.join();
    log_to(log_, "worker " + std::to_string(id) + " joined");
    cv_.notify_all();
  }

  void read_loop(std::uint32_t id, std::uint64_t gen,
                 std::shared_ptr<net::Socket> sock) {
    while (true) {
      Event e;
      e.worker_id = id;
      e.generation = gen;
      try {
        const auto st = net::recv_message(*sock, e.msg);
        if (st != net::ReadStatus::kOk) {
          e.closed = true;
          e.error = "connection closed";
        }
      } catch (const Error& err) {
        e.closed = true;
        e.error = err.what();
      }
      e.at = Clock::now();
      const bool closed = e.closed;
      push(std::move(e));
      if (closed) return;
    }
  }

  void accept_loop() {
    while (!stopping_) {
      std::optional<net::Socket> s;
      try {
        s = net::accept_for(listener_, milliseconds(100));
      } catch (const Error& e) {
        log_to(log_, e.what());
        continue;
      }
      if (s) handshake(std::move(*s));
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Conn> conns_;
  std::deque<Event> inbox_;
  std::uint64_t hash_;
  net::Socket listener_;
  std::function<void(const std::string&)> log_;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> stopped_{false};
  std::thread acceptor_;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::uint64_t session_hash(const RunConfig& cfg, const Dataset& data) {
  std::uint64_t h = config_hash(cfg);
  h = splitmix64(h ^ data.train.documents.size());
  h = splitmix64(h ^ data.train.total_tokens);
  h = splitmix64(h ^ data.validation.total_tokens);
  return h;
}

RunResult coordinator_serve(const RunConfig& cfg, const Dataset& data,
                            const ParamVector& theta0,
                            const CoordinatorOptions& opts) {
  cfg.validate();
  require(cfg.replica_schedule.empty(), ErrorCode::kConfig,
          "replica_schedule is only supported with transport = sim");
  const std::size_t k = cfg.k;
  const std::size_t P = cfg.model.param_count();
  require(data.shards.size() >= k, ErrorCode::kInternal,
          "dataset has fewer shards than workers");
  std::vector<std::size_t> tokens;
  for (const Shard& s : data.shards) tokens.push_back(s.num_tokens);

  net::Socket listener = net::listen_tcp(net::parse_host_port(opts.bind_addr));
  const std::uint16_t port = net::local_port(listener);
  Hub hub(k, session_hash(cfg, data), std::move(listener), opts.on_log);
  hub.start();
  log_to(opts.on_log, "coordinator listening on port " + std::to_string(port));
  if (opts.on_listening) opts.on_listening(port);

  const milliseconds initial = seconds_ms(cfg.initial_timeout_s);
  if (!hub.wait_for_all(Clock::now() + initial)) {
    require(hub.alive_count() > 0, ErrorCode::kNetwork,
            "no worker joined within initial_timeout_s");
    log_to(opts.on_log, "starting with " + std::to_string(hub.alive_count()) +
                            " of " + std::to_string(k) + " workers");
  }

  OuterLoop loop(cfg, theta0, tokens, &data.eval);
  std::vector<double> phase_seconds;

  for (std::uint32_t t = 1; t <= cfg.T; ++t) {
    RoundPlan plan = loop.plan_round(t);
    if (opts.on_round_start) opts.on_round_start(t);

    RoundTraffic traffic;
    traffic.uplink_bytes.assign(k, 0);
    traffic.got_params.assign(k, false);
    std::vector<std::optional<std::uint64_t>> sent_gen(k);
    std::vector<Clock::time_point> sent_at(k);

    wire::Message params{wire::MsgType::kParams, 0, t, loop.params().values(),
                         cfg.wire_f32};
    for (std::uint32_t i = 0; i < k; ++i) {
      const auto target = hub.target(i);
      if (!target) continue;
      const bool send_params = plan.send_params[i] || target->fresh;
      std::vector<std::uint8_t> frame;
      if (send_params) {
        params.worker_id = i;
        frame = wire::encode_message(params);
      } else {
        frame = wire::encode_message({wire::MsgType::kAck, i, t, {}, false});
      }
      try {
        net::send_all(*target->sock, frame.data(), frame.size());
      } catch (const Error& e) {
        hub.kill(i, target->generation, e.what());
        continue;
      }
      if (send_params) hub.mark_synced(i, target->generation);
      traffic.downlink_bytes += frame.size();
      traffic.got_params[i] = send_params;
      sent_gen[i] = target->generation;
      sent_at[i] = Clock::now();
    }

    milliseconds timeout = initial;
    if (t > 1 || !phase_seconds.empty()) {
      if (cfg.barrier_timeout_s > 0.0) {
        timeout = seconds_ms(cfg.barrier_timeout_s);
      } else if (!phase_seconds.empty()) {
        timeout = std::max(milliseconds(1000),
                           seconds_ms(10.0 * median(phase_seconds)));
      }
    }
    const Clock::time_point deadline = Clock::now() + timeout;

    std::vector<std::optional<OuterGradient>> received(k);
    auto pending = [&] {
      for (std::uint32_t i = 0; i < k; ++i) {
        if (sent_gen[i] && !received[i] && hub.is_current(i, *sent_gen[i])) {
          return true;
        }
      }
      return false;
    };
    while (pending()) {
      auto ev = hub.next_event(deadline);
      if (!ev) break;
      const std::uint32_t i = ev->worker_id;
      if (ev->closed) {
        log_to(opts.on_log, "worker " + std::to_string(i) +
                                " lost during outer step " + std::to_string(t) +
                                ": " + ev->error);
        continue;
      }
      if (!sent_gen[i] || *sent_gen[i] != ev->generation) continue;
      const wire::Message& m = ev->msg;
      if (m.type != wire::MsgType::kOuterGrad || m.outer_step != t) continue;
      if (m.worker_id != i || m.payload.size() != P) {
        hub.kill(i, ev->generation,
                 "protocol error: OUTER_GRAD with " +
                     std::to_string(m.payload.size()) + " values for worker " +
                     std::to_string(m.worker_id) + ", expected " +
                     std::to_string(P));
        continue;
      }
      try {
        received[i] = OuterGradient{i, t, ParamVector(m.payload), tokens[i]};
      } catch (const Error& e) {
        hub.kill(i, ev->generation, e.what());
        continue;
      }
      traffic.uplink_bytes[i] = wire::frame_size(m.payload.size(), m.f32);
      phase_seconds.push_back(
          std::chrono::duration<double>(ev->at - sent_at[i]).count());
    }
    for (std::uint32_t i = 0; i < k; ++i) {
      if (sent_gen[i] && !received[i] && hub.is_current(i, *sent_gen[i])) {
        log_to(opts.on_log, "worker " + std::to_string(i) +
                                " missed the barrier of outer step " +
                                std::to_string(t));
      }
    }

    const MetricsRow& row =
        loop.finish_round(plan, std::move(received), traffic, std::nullopt);
    if (opts.on_row) opts.on_row(row);
  }

  for (std::uint32_t i = 0; i < k; ++i) {
    const auto target = hub.target(i);
    if (!target) continue;
    try {
      net::send_message(*target->sock,
                        {wire::MsgType::kShutdown, i,
                         static_cast<std::uint32_t>(cfg.T), {}, false});
    } catch (const Error& e) {
      hub.kill(i, target->generation, e.what());
    }
  }
  hub.stop();
  return loop.take_result();
}

namespace {

net::Socket connect_with_retry(const net::HostPort& where, double window_s,
                               const std::function<void(const std::string&)>& log) {
  const auto deadline = Clock::now() + seconds_ms(window_s);
  milliseconds backoff(50);
  while (true) {
    try {
      return net::connect_tcp(where);
    } catch (const Error& e) {
      if (Clock::now() + backoff > deadline) {
        fail(ErrorCode::kNetwork,
             std::string(e.what()) + " (gave up after connect_retry_s)");
      }
      log_to(log, std::string(e.what()) + "; retrying");
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::min(backoff * 2, milliseconds(1000));
  }
}

}  // namespace

WorkerReport worker_run(const RunConfig& cfg, const Dataset& data,
                        const WorkerOptions& opts) {
  cfg.validate();
  const std::size_t P = cfg.model.param_count();
  const net::HostPort where = net::parse_host_port(opts.connect_addr);
  const std::uint64_t hash = session_hash(cfg, data);
  const InnerHyper hyper = stage_hyper(cfg);
  const std::size_t base = stage_step_base(cfg);
  const std::uint32_t id = opts.worker_id;

  WorkerReport report;
  std::optional<WorkerState> state;
  std::optional<ShardSampler> sampler;
  bool first = true;

  while (true) {
    if (!first) report.reconnects += 1;
    first = false;
    net::Socket sock = connect_with_retry(where, cfg.connect_retry_s, opts.on_log);
    net::set_send_timeout(sock, kSendTimeout);
    net::send_message(sock, wire::make_join(id, hash));
    wire::Message reply;
    const auto st = net::recv_message(
        sock, reply, Clock::now() + seconds_ms(cfg.initial_timeout_s));
    require(st == net::ReadStatus::kOk, ErrorCode::kNetwork,
            "coordinator did not answer JOIN");
    if (reply.type == wire::MsgType::kShutdown &&
        reply.worker_id == wire::kRejectMarker) {
      fail(ErrorCode::kProtocol,
           std::string("JOIN rejected: ") +
               wire::describe(static_cast<wire::JoinReject>(reply.outer_step)));
    }
    require(reply.type == wire::MsgType::kAck && wire::hash_word(reply) == hash,
            ErrorCode::kProtocol, "protocol error: unexpected reply to JOIN");
    log_to(opts.on_log, "worker " + std::to_string(id) + " joined");
    if (!sampler) {
      require(id < data.shards.size(), ErrorCode::kInternal,
              "no shard for worker " + std::to_string(id));
      sampler.emplace(data.train, data.shards[id], cfg.model.context_len);
    }

    bool lost = false;
    while (!lost) {
      wire::Message msg;
      if (net::recv_message(sock, msg) != net::ReadStatus::kOk) {
        lost = true;
        break;
      }
      if (msg.type == wire::MsgType::kShutdown) return report;
      const std::uint32_t t = msg.outer_step;
      require(t >= 1 && t <= cfg.T, ErrorCode::kProtocol,
              "protocol error: outer step " + std::to_string(t) +
                  " out of range");
      ParamVector start;
      if (msg.type == wire::MsgType::kParams) {
        require(msg.payload.size() == P, ErrorCode::kProtocol,
                "protocol error: PARAMS payload has " +
                    std::to_string(msg.payload.size()) +
                    " values, the model has " + std::to_string(P));
        start = ParamVector(std::move(msg.payload));
      } else if (msg.type == wire::MsgType::kAck) {
        require(state.has_value(), ErrorCode::kProtocol,
                "protocol error: told to continue before receiving parameters");
        start = state->local_params;
      } else {
        fail(ErrorCode::kProtocol, "protocol error: unexpected message type " +
                                       std::to_string(static_cast<int>(msg.type)));
      }
      const std::size_t step0 = base + (t - 1) * cfg.H;
      if (!state) {
        state.emplace(id, start, hyper, step0, data.shards[id].num_tokens);
      }
      state->inner_step = step0;
      PhaseSpec spec{&cfg.model, &*sampler, hyper, cfg.H, cfg.batch_size,
                     cfg.master_seed, t};
      inner_phase(*state, start, spec);
      report.phases += 1;
      const OuterGradient og = compute_outer_gradient(*state, t);
      try {
        net::send_message(sock, {wire::MsgType::kOuterGrad, id, t,
                                 og.delta.values(), cfg.wire_f32});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNetwork) throw;
        lost = true;
      }
    }
    log_to(opts.on_log,
           "worker " + std::to_string(id) + " lost the coordinator; rejoining");
  }
}

RunResult run_tcp_loopback(const RunConfig& cfg, const Dataset& data,
                           const ParamVector& theta0,
                           const RowCallback& on_row) {
  std::promise<std::uint16_t> port_promise;
  auto port_future = port_promise.get_future();
  std::atomic<bool> port_set{false};
  RunResult result;
  std::exception_ptr coord_error;

  CoordinatorOptions copts;
  copts.bind_addr = "127.0.0.1:0";
  copts.on_row = on_row;
  copts.on_listening = [&](std::uint16_t p) {
    port_set = true;
    port_promise.set_value(p);
  };
  std::thread coordinator([&] {
    try {
      result = coordinator_serve(cfg, data, theta0, copts);
    } catch (...) {
      coord_error = std::current_exception();
      if (!port_set.exchange(true)) {
        port_promise.set_exception(std::current_exception());
      }
    }
  });

  std::uint16_t port = 0;
  try {
    port = port_future.get();
  } catch (...) {
    coordinator.join();
    throw;
  }

  std::vector<std::exception_ptr> worker_errors(cfg.k);
  std::vector<std::thread> workers;
  for (std::uint32_t i = 0; i < cfg.k; ++i) {
    workers.emplace_back([&, i] {
      try {
        WorkerOptions wopts;
        wopts.connect_addr = "127.0.0.1:" + std::to_string(port);
        wopts.worker_id = i;
        worker_run(cfg, data, wopts);
      } catch (...) {
        worker_errors[i] = std::current_exception();
      }
    });
  }
  coordinator.join();
  for (auto& w : workers) w.join();
  if (coord_error) std::rethrow_exception(coord_error);
  for (auto& e : worker_errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

}  // namespace diloco
