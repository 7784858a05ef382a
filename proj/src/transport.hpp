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


#ifndef DILOCO_TRANSPORT_HPP_
#define DILOCO_TRANSPORT_HPP_

#include <cstdint>
#include <functional>
#include <string>

#include "engine.hpp"

namespace diloco {

// Hash exchanged in JOIN/ACK: the config hash mixed with the shape of the
// training data, so both sides must also have loaded the same corpus.
std::uint64_t session_hash(const RunConfig& cfg, const Dataset& data);

struct CoordinatorOptions {
  std::string bind_addr = "127.0.0.1:0";
  // Called once the socket listens, with the bound port.
  std::function<void(std::uint16_t)> on_listening;
  // Called before parameters for an outer step go out.
  std::function<void(std::uint32_t)> on_round_start;
  RowCallback on_row;
  // Joins, rejections, timeouts and lost connections.
  std::function<void(const std::string&)> on_log;
};

// Star-topology coordinator: accepts JOINs, then per outer step broadcasts
// PARAMS (or ACK to continue), gathers OUTER_GRADs until all arrive or the
// barrier times out, and applies the outer step. Missing workers count as
// dropped. Sends SHUTDOWN to every worker at the end.
RunResult coordinator_serve(const RunConfig& cfg, const Dataset& data,
                            const ParamVector& theta0,
                            const CoordinatorOptions& opts);

struct WorkerOptions {
  std::string connect_addr;
  std::uint32_t worker_id = 0;
  std::function<void(const std::string&)> on_log;
};

struct WorkerReport {
  std::size_t phases = 0;
  std::size_t reconnects = 0;
};

// Joins the coordinator and serves inner phases until SHUTDOWN. A lost
// connection is retried for cfg.connect_retry_s; a refused JOIN throws
// Error(kProtocol) with the reason.
WorkerReport worker_run(const RunConfig& cfg, const Dataset& data,
                        const WorkerOptions& opts);

// Coordinator plus k worker threads on loopback.
RunResult run_tcp_loopback(const RunConfig& cfg, const Dataset& data,
                           const ParamVector& theta0, const RowCallback& on_row);

}  // namespace diloco

#endif  // DILOCO_TRANSPORT_HPP_
