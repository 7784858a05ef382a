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


#include "net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <vector>

#include "error.hpp"

namespace diloco::net {
namespace {

[[noreturn]] void net_error(const std::string& what) {
  fail(ErrorCode::kNetwork, what + ": " + std::strerror(errno));
}

int remaining_ms(std::optional<Clock::time_point> deadline) {
  if (!deadline) return -1;
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      *deadline - Clock::now());
  return left.count() <= 0 ? 0 : static_cast<int>(left.count());
}

addrinfo* resolve(const HostPort& where, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(where.port);
  const int rc = getaddrinfo(where.host.empty() ? nullptr : where.host.c_str(),
                             port.c_str(), &hints, &res);
  if (rc != 0) {
    fail(ErrorCode::kNetwork, "cannot resolve '" + where.host +
                                  "': " + gai_strerror(rc));
  }
  return res;
}

}  // namespace

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.release();
  }
  return *this;
}

int Socket::release() {
  const int fd = fd_;
  fd_ = -1;
  return fd;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown_both() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

HostPort parse_host_port(const std::string& addr) {
  const auto colon = addr.rfind(':');
  require(colon != std::string::npos, ErrorCode::kInvalidArgument,
          "address '" + addr + "' must be host:port");
  HostPort hp;
  hp.host = addr.substr(0, colon);
  const std::string port = addr.substr(colon + 1);
  unsigned long v = 0;
  try {
    std::size_t used = 0;
    v = std::stoul(port, &used);
    require(used == port.size(), ErrorCode::kInvalidArgument, "");
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidArgument, "bad port in address '" + addr + "'");
  }
  require(v <= 65535, ErrorCode::kInvalidArgument,
          "port out of range in address '" + addr + "'");
  hp.port = static_cast<std::uint16_t>(v);
  return hp;
}

Socket listen_tcp(const HostPort& where) {
  addrinfo* res = resolve(where, true);
  Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!s.valid()) {
    freeaddrinfo(res);
    net_error("socket");
  }
  const int one = 1;
  setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  const int rc = ::bind(s.fd(), res->ai_addr, res->ai_addrlen);
  freeaddrinfo(res);
  if (rc != 0) {
    net_error("cannot bind " + where.host + ":" + std::to_string(where.port));
  }
  if (::listen(s.fd(), 64) != 0) net_error("listen");
  return s;
}

std::uint16_t local_port(const Socket& s) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    net_error("getsockname");
  }
  return ntohs(addr.sin_port);
}

std::optional<Socket> accept_for(const Socket& listener,
                                 std::chrono::milliseconds timeout) {
  pollfd p{listener.fd(), POLLIN, 0};
  const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (rc < 0) {
    if (errno == EINTR) return std::nullopt;
    net_error("poll");
  }
  if (rc == 0) return std::nullopt;
  const int fd = ::accept(listener.fd(), nullptr, nullptr);
  if (fd < 0) {
    if (errno == EINTR || errno == ECONNABORTED || errno == EAGAIN) {
      return std::nullopt;
    }
    net_error("accept");
  }
  const int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Socket(fd);
}

Socket connect_tcp(const HostPort& where) {
  addrinfo* res = resolve(where, false);
  Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!s.valid()) {
    freeaddrinfo(res);
    net_error("socket");
  }
  const int rc = ::connect(s.fd(), res->ai_addr, res->ai_addrlen);
  freeaddrinfo(res);
  if (rc != 0) {
    net_error("cannot connect to " + where.host + ":" +
              std::to_string(where.port));
  }
  const int one = 1;
  setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return s;
}

void set_send_timeout(const Socket& s, std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  setsockopt(s.fd(), SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

void send_all(const Socket& s, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::send(s.fd(), data, n, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        fail(ErrorCode::kNetwork, "send timed out");
      }
      net_error("send");
    }
    data += k;
    n -= static_cast<std::size_t>(k);
  }
}

void send_message(const Socket& s, const wire::Message& msg) {
  const auto frame = wire::encode_message(msg);
  send_all(s, frame.data(), frame.size());
}

ReadStatus recv_exact(const Socket& s, std::uint8_t* data, std::size_t n,
                      std::optional<Clock::time_point> deadline) {
  std::size_t got = 0;
  while (got < n) {
    pollfd p{s.fd(), POLLIN, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc < 0) {
      if (errno == EINTR) continue;
      net_error("poll");
    }
    if (rc == 0) return ReadStatus::kTimeout;
    const ssize_t k = ::recv(s.fd(), data + got, n - got, 0);
    if (k == 0) return ReadStatus::kClosed;
    if (k < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      if (errno == ECONNRESET || errno == EPIPE || errno == EBADF ||
          errno == ENOTCONN) {
        return ReadStatus::kClosed;
      }
      net_error("recv");
    }
    got += static_cast<std::size_t>(k);
  }
  return ReadStatus::kOk;
}

ReadStatus recv_message(const Socket& s, wire::Message& out,
                        std::optional<Clock::time_point> deadline) {
  std::vector<std::uint8_t> frame(wire::kHeaderSize);
  ReadStatus st = recv_exact(s, frame.data(), frame.size(), deadline);
  if (st != ReadStatus::kOk) return st;
  const std::uint64_t len = wire::peek_payload_len(frame);
  frame.resize(wire::kHeaderSize + len + wire::kTrailerSize);
  // The rest of a started frame may take longer than the caller's deadline;
  // a frame is never abandoned halfway.
  st = recv_exact(s, frame.data() + wire::kHeaderSize,
                  frame.size() - wire::kHeaderSize, std::nullopt);
  if (st != ReadStatus::kOk) return ReadStatus::kClosed;
  out = wire::decode_message(frame);
  return ReadStatus::kOk;
}

}  // namespace diloco::net
