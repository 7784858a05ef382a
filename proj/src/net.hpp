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


#ifndef DILOCO_NET_HPP_
#define DILOCO_NET_HPP_

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include "wire.hpp"

namespace diloco::net {

using Clock = std::chrono::steady_clock;

// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release();
  void close();
  // Unblocks any thread reading or writing the socket.
  void shutdown_both();

 private:
  int fd_ = -1;
};

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

// "host:port"; an empty host means all interfaces for bind.
HostPort parse_host_port(const std::string& addr);

// Listening TCP socket. Port 0 picks a free port.
Socket listen_tcp(const HostPort& where);
std::uint16_t local_port(const Socket& s);

// Waits up to `timeout` for a connection; nullopt on timeout.
std::optional<Socket> accept_for(const Socket& listener,
                                 std::chrono::milliseconds timeout);

// Single connection attempt; throws Error(kNetwork).
Socket connect_tcp(const HostPort& where);

// Bounds each blocking send.
void set_send_timeout(const Socket& s, std::chrono::milliseconds timeout);

// Throws Error(kNetwork) on failure or timeout.
void send_all(const Socket& s, const std::uint8_t* data, std::size_t n);
void send_message(const Socket& s, const wire::Message& msg);

enum class ReadStatus { kOk, kClosed, kTimeout };

// Reads exactly n bytes. kClosed on orderly EOF before the first byte or on
// connection reset; a deadline of nullopt waits forever.
ReadStatus recv_exact(const Socket& s, std::uint8_t* data, std::size_t n,
                      std::optional<Clock::time_point> deadline);

// Reads one frame. Malformed frames throw Error(kProtocol).
ReadStatus recv_message(const Socket& s, wire::Message& out,
                        std::optional<Clock::time_point> deadline = {});

}  // namespace diloco::net

#endif  // DILOCO_NET_HPP_
