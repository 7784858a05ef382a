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


#include <doctest.h>

#include <chrono>
#include <future>
#include <thread>

#include "config.hpp"
#include "error.hpp"
#include "net.hpp"
#include "test_util.hpp"
#include "transport.hpp"
#include "wire.hpp"

using namespace diloco;
using namespace std::chrono_literals;

namespace {

Dataset data_for(const RunConfig& cfg) {
  return prepare_dataset(cfg, testing::synthetic_corpus(60, 1));
}

// coordinator_serve on a background thread.
class CoordinatorThread {
 public:
  CoordinatorThread(const RunConfig& cfg, const Dataset& data,
                    const ParamVector& theta0,
                    std::function<void(std::uint32_t)> on_round_start = {}) {
    CoordinatorOptions opts;
    opts.on_round_start = std::move(on_round_start);
    auto port = std::make_shared<std::promise<std::uint16_t>>();
    port_ = port->get_future();
    opts.on_listening = [port](std::uint16_t p) { port->set_value(p); };
    result_ = std::async(std::launch::async, [=, &data] {
      return coordinator_serve(cfg, data, theta0, opts);
    });
    port_.wait_for(10s);
  }

  std::uint16_t port() { return port_.get(); }
  std::string addr() { return "127.0.0.1:" + std::to_string(port()); }
  RunResult result() { return result_.get(); }

 private:
  std::shared_future<std::uint16_t> port_;
  std::future<RunResult> result_;
};

net::Socket raw_connect(std::uint16_t port) {
  return net::connect_tcp({"127.0.0.1", port});
}

wire::Message raw_join(const net::Socket& s, std::uint32_t id,
                       std::uint64_t hash) {
  net::send_message(s, wire::make_join(id, hash));
  wire::Message reply;
  REQUIRE(net::recv_message(s, reply, net::Clock::now() + 10s) ==
          net::ReadStatus::kOk);
  return reply;
}

void check_rejected(const wire::Message& m, wire::JoinReject why) {
  CHECK(m.type == wire::MsgType::kShutdown);
  CHECK(m.worker_id == wire::kRejectMarker);
  CHECK(m.outer_step == static_cast<std::uint32_t>(why));
}

std::thread start_worker(const RunConfig& cfg, const Dataset& data,
                         std::string addr, std::uint32_t id) {
  return std::thread([&cfg, &data, addr, id] {
    WorkerOptions o;
    o.connect_addr = addr;
    o.worker_id = id;
    worker_run(cfg, data, o);
  });
}

}  // namespace

TEST_SUITE("transport") {

TEST_CASE("loopback run matches the in-process run") {
  for (std::size_t k : {1, 2}) {
    RunConfig cfg = testing::small_run(k, 5, 4);
    const Dataset d = data_for(cfg);
    const ParamVector theta0 = init_params(cfg.model, 3);
    const RunResult sim = run_sim(cfg, d, theta0);
    const RunResult tcp = run_tcp_loopback(cfg, d, theta0, {});
    CHECK(max_abs_diff(sim.final_params, tcp.final_params) < 1e-12);
    CHECK(sim.final_params == tcp.final_params);
    CHECK(sim.comm.bytes == tcp.comm.bytes);
    CHECK(sim.comm.gathers == tcp.comm.gathers);
    REQUIRE(sim.rows.size() == tcp.rows.size());
    for (std::size_t t = 0; t < sim.rows.size(); ++t) {
      CHECK(sim.rows[t].val_ppl == tcp.rows[t].val_ppl);
      CHECK(sim.rows[t].mean_cos_sim == tcp.rows[t].mean_cos_sim);
      CHECK(sim.rows[t].bytes_communicated == tcp.rows[t].bytes_communicated);
      CHECK_FALSE(tcp.rows[t].train_loss);
    }
  }
}

TEST_CASE("loopback with random drops matches the in-process run") {
  RunConfig cfg = testing::small_run(3, 3, 6);
  cfg.drop_prob = 0.5;
  const Dataset d = data_for(cfg);
  const ParamVector theta0 = init_params(cfg.model, 3);
  const RunResult sim = run_sim(cfg, d, theta0);
  const RunResult tcp = run_tcp_loopback(cfg, d, theta0, {});
  CHECK(sim.final_params == tcp.final_params);
  CHECK(sim.dropped == tcp.dropped);
  CHECK(sim.comm.bytes == tcp.comm.bytes);
  CHECK(sim.comm.broadcasts == tcp.comm.broadcasts);
}

TEST_CASE("refused JOINs") {
  RunConfig cfg = testing::small_run(2, 2, 2);
  const Dataset d = data_for(cfg);
  const std::uint64_t hash = session_hash(cfg, d);
  CoordinatorThread coord(cfg, d, init_params(cfg.model, 1));

  net::Socket first = raw_connect(coord.port());
  const wire::Message ok = raw_join(first, 0, hash);
  CHECK(ok.type == wire::MsgType::kAck);
  CHECK(wire::hash_word(ok) == hash);

  {
    net::Socket dup = raw_connect(coord.port());
    check_rejected(raw_join(dup, 0, hash), wire::JoinReject::kDuplicateWorker);
  }
  {
    net::Socket out = raw_connect(coord.port());
    check_rejected(raw_join(out, 2, hash), wire::JoinReject::kWorkerOutOfRange);
  }
  {
    net::Socket other = raw_connect(coord.port());
    check_rejected(raw_join(other, 1, hash ^ 1),
                   wire::JoinReject::kConfigMismatch);
  }
  {
    net::Socket junk = raw_connect(coord.port());
    net::send_message(junk, {wire::MsgType::kOuterGrad, 1, 1, {1.0}, false});
    wire::Message reply;
    REQUIRE(net::recv_message(junk, reply, net::Clock::now() + 10s) ==
            net::ReadStatus::kOk);
    check_rejected(reply, wire::JoinReject::kMalformed);
  }

  // A worker with different model dimensions learns why it was refused.
  RunConfig other = cfg;
  other.model.hidden_dim += 1;
  WorkerOptions o;
  o.connect_addr = coord.addr();
  o.worker_id = 1;
  try {
    worker_run(other, d, o);
    FAIL("expected a refused JOIN");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kProtocol);
    CHECK(std::string(e.what()).find("config hash mismatch") != std::string::npos);
  }

  // Release the coordinator: drop the raw worker and let two real ones run.
  first.close();
  std::thread w0 = start_worker(cfg, d, coord.addr(), 0);
  std::thread w1 = start_worker(cfg, d, coord.addr(), 1);
  const RunResult r = coord.result();
  w0.join();
  w1.join();
  CHECK(r.rows.size() == 2);
}

TEST_CASE("unreachable coordinator gives up after the retry window") {
  RunConfig cfg = testing::small_run(1, 1, 1);
  cfg.connect_retry_s = 0.3;
  const Dataset d = data_for(cfg);
  std::uint16_t port = 0;
  {
    // Grab a free port, then release it so nothing listens there.
    net::Socket l = net::listen_tcp({"127.0.0.1", 0});
    port = net::local_port(l);
  }
  WorkerOptions o;
  o.connect_addr = "127.0.0.1:" + std::to_string(port);
  const auto start = net::Clock::now();
  try {
    worker_run(cfg, d, o);
    FAIL("expected a network error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNetwork);
  }
  CHECK(net::Clock::now() - start < 5s);
}

TEST_CASE("a PARAMS payload of the wrong size closes the connection") {
  RunConfig cfg = testing::small_run(1, 1, 1);
  const Dataset d = data_for(cfg);
  net::Socket listener = net::listen_tcp({"127.0.0.1", 0});
  const std::uint16_t port = net::local_port(listener);

  auto fake = std::async(std::launch::async, [&] {
    auto conn = net::accept_for(listener, 10s);
    REQUIRE(conn);
    wire::Message join;
    REQUIRE(net::recv_message(*conn, join, net::Clock::now() + 10s) ==
            net::ReadStatus::kOk);
    net::send_message(*conn, wire::make_join_ack(0, wire::hash_word(join)));
    net::send_message(*conn, {wire::MsgType::kParams, 0, 1, {1.0, 2.0}, false});
    wire::Message next;
    return net::recv_message(*conn, next, net::Clock::now() + 10s);
  });

  WorkerOptions o;
  o.connect_addr = "127.0.0.1:" + std::to_string(port);
  try {
    worker_run(cfg, d, o);
    FAIL("expected a protocol error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kProtocol);
    CHECK(std::string(e.what()).find("payload") != std::string::npos);
  }
  CHECK(fake.get() == net::ReadStatus::kClosed);
}

TEST_CASE("a silent worker is dropped at the barrier") {
  RunConfig cfg = testing::small_run(2, 2, 3);
  cfg.initial_timeout_s = 5;
  cfg.barrier_timeout_s = 0.3;
  const Dataset d = data_for(cfg);
  CoordinatorThread coord(cfg, d, init_params(cfg.model, 1));
  net::Socket silent = raw_connect(coord.port());
  REQUIRE(raw_join(silent, 1, session_hash(cfg, d)).type == wire::MsgType::kAck);
  std::thread w0 = start_worker(cfg, d, coord.addr(), 0);
  const RunResult r = coord.result();
  w0.join();
  REQUIRE(r.rows.size() == 3);
  for (const auto& row : r.rows) CHECK(row.dropped_count == 1);
  for (const auto& ids : r.dropped) CHECK(ids == std::vector<std::uint32_t>{1});
  CHECK(r.comm.gathers[0] == 3);
  CHECK(r.comm.gathers[1] == 0);
  // The silent worker got parameters once and was told to continue after.
  CHECK(r.comm.broadcasts[1] == 1);
}

TEST_CASE("a worker that vanishes mid-phase is dropped and may rejoin") {
  RunConfig cfg = testing::small_run(2, 2, 4);
  cfg.initial_timeout_s = 5;
  cfg.barrier_timeout_s = 5;
  const Dataset d = data_for(cfg);
  const std::uint64_t hash = session_hash(cfg, d);
  std::promise<void> round2;
  auto round2_seen = round2.get_future();
  CoordinatorThread coord(cfg, d, init_params(cfg.model, 1),
                          [&](std::uint32_t t) {
                            if (t == 2) round2.set_value();
                          });
  std::optional<net::Socket> doomed(raw_connect(coord.port()));
  REQUIRE(raw_join(*doomed, 1, hash).type == wire::MsgType::kAck);
  std::thread w0 = start_worker(cfg, d, coord.addr(), 0);
  wire::Message params;
  REQUIRE(net::recv_message(*doomed, params, net::Clock::now() + 10s) ==
          net::ReadStatus::kOk);
  CHECK(params.type == wire::MsgType::kParams);
  doomed.reset();

  // Rejoin under the same id once round 2 has been dispatched.
  REQUIRE(round2_seen.wait_for(30s) == std::future_status::ready);
  std::thread w1 = start_worker(cfg, d, coord.addr(), 1);
  const RunResult r = coord.result();
  w0.join();
  w1.join();
  REQUIRE(r.rows.size() == 4);
  CHECK(r.rows[0].dropped_count == 1);
  CHECK(r.dropped[0] == std::vector<std::uint32_t>{1});
  CHECK(r.comm.gathers[0] == 4);
  CHECK(r.comm.gathers[1] >= 1);
  CHECK(r.final_params.all_finite());
}

TEST_CASE("session hash covers config and data") {
  RunConfig cfg = testing::small_run(2, 2, 2);
  const Dataset d = data_for(cfg);
  const std::uint64_t h = session_hash(cfg, d);
  CHECK(h == session_hash(cfg, data_for(cfg)));
  RunConfig other = cfg;
  other.H = 3;
  CHECK(session_hash(other, d) != h);
  other = cfg;
  other.threads = 4;
  other.run_id = "renamed";
  CHECK(session_hash(other, d) == h);
  const Dataset smaller = prepare_dataset(cfg, testing::synthetic_corpus(50, 1));
  CHECK(session_hash(cfg, smaller) != h);
}

}  // TEST_SUITE
