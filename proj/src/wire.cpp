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

#include "wire.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

#include "error.hpp"

namespace diloco::wire {
namespace {

constexpr std::uint8_t kMagic[4] = {'D', 'L', 'C', '1'};

void put_u32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void put_u64(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large frames in chunks.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

[[noreturn]] void protocol_error(const std::string& what) {
  fail(ErrorCode::kProtocol, "protocol error: " + what);
}

bool valid_type(std::uint8_t t) {
  return t >= static_cast<std::uint8_t>(MsgType::kJoin) &&
         t <= static_cast<std::uint8_t>(MsgType::kShutdown);
}

}  // namespace

const char* describe(JoinReject reason) {
  switch (reason) {
    case JoinReject::kDuplicateWorker:
      return "duplicate worker_id";
    case JoinReject::kWorkerOutOfRange:
      return "worker_id out of range";
    case JoinReject::kConfigMismatch:
      return "config hash mismatch";
    case JoinReject::kMalformed:
      return "malformed JOIN";
  }
  return "unknown reason";
}

bool operator==(const Message& a, const Message& b) {
  return a.type == b.type && a.worker_id == b.worker_id &&
         a.outer_step == b.outer_step && a.f32 == b.f32 &&
         a.payload.size() == b.payload.size() &&
         (a.payload.empty() ||
          std::memcmp(a.payload.data(), b.payload.data(),
                      a.payload.size() * sizeof(double)) == 0);
}

std::size_t frame_size(std::size_t payload_count, bool f32) {
  return kFrameOverhead + payload_count * (f32 ? 4 : 8);
}

std::vector<std::uint8_t> encode_message(const Message& msg) {
  const std::size_t width = msg.f32 ? 4 : 8;
  const std::size_t len = msg.payload.size() * width;
  std::vector<std::uint8_t> out(kHeaderSize + len + kTrailerSize);
  std::uint8_t* p = out.data();
  std::memcpy(p, kMagic, 4);
  p[4] = static_cast<std::uint8_t>(msg.type) | (msg.f32 ? kF32Flag : 0);
  put_u32(p + 5, msg.worker_id);
  put_u32(p + 9, msg.outer_step);
  put_u64(p + 13, len);
  std::uint8_t* body = p + kHeaderSize;
  for (std::size_t i = 0; i < msg.payload.size(); ++i) {
    if (msg.f32) {
      put_u32(body + 4 * i,
              std::bit_cast<std::uint32_t>(static_cast<float>(msg.payload[i])));
    } else {
      put_u64(body + 8 * i, std::bit_cast<std::uint64_t>(msg.payload[i]));
    }
  }
  put_u32(p + kHeaderSize + len, crc_of(p, kHeaderSize + len));
  return out;
}

std::uint64_t peek_payload_len(std::span<const std::uint8_t> header) {
  if (header.size() < kHeaderSize) protocol_error("truncated header");
  if (std::memcmp(header.data(), kMagic, 4) != 0) protocol_error("bad magic");
  if (!valid_type(header[4] & ~kF32Flag)) {
    protocol_error("unknown message type " + std::to_string(header[4]));
  }
  const std::uint64_t len = get_u64(header.data() + 13);
  const std::uint64_t width = (header[4] & kF32Flag) ? 4 : 8;
  if (len > kMaxPayloadBytes) protocol_error("payload length too large");
  if (len % width != 0) {
    protocol_error("payload length " + std::to_string(len) +
                   " is not a multiple of " + std::to_string(width));
  }
  return len;
}

Message decode_message(std::span<const std::uint8_t> frame) {
  const std::uint64_t len = peek_payload_len(frame);
  if (frame.size() != kHeaderSize + len + kTrailerSize) {
    protocol_error("length mismatch: frame has " +
                   std::to_string(frame.size()) + " bytes, header announces " +
                   std::to_string(kHeaderSize + len + kTrailerSize));
  }
  const std::uint8_t* p = frame.data();
  const std::uint32_t want = get_u32(p + kHeaderSize + len);
  if (crc_of(p, kHeaderSize + len) != want) protocol_error("crc mismatch");

  Message m;
  m.f32 = (p[4] & kF32Flag) != 0;
  m.type = static_cast<MsgType>(p[4] & ~kF32Flag);
  m.worker_id = get_u32(p + 5);
  m.outer_step = get_u32(p + 9);
  const std::size_t width = m.f32 ? 4 : 8;
  m.payload.resize(len / width);
  const std::uint8_t* body = p + kHeaderSize;
  for (std::size_t i = 0; i < m.payload.size(); ++i) {
    if (m.f32) {
      m.payload[i] = std::bit_cast<float>(get_u32(body + 4 * i));
    } else {
      m.payload[i] = std::bit_cast<double>(get_u64(body + 8 * i));
    }
  }
  return m;
}

Message make_join(std::uint32_t worker_id, std::uint64_t config_hash) {
  return Message{MsgType::kJoin, worker_id, 0,
                 {std::bit_cast<double>(config_hash)}, false};
}

Message make_join_ack(std::uint32_t worker_id, std::uint64_t config_hash) {
  return Message{MsgType::kAck, worker_id, 0,
                 {std::bit_cast<double>(config_hash)}, false};
}

std::uint64_t hash_word(const Message& msg) {
  if (msg.payload.size() != 1 || msg.f32) {
    fail(ErrorCode::kProtocol, "protocol error: expected one hash word");
  }
  return std::bit_cast<std::uint64_t>(msg.payload[0]);
}

}  // namespace diloco::wire
