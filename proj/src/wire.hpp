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

#ifndef DILOCO_WIRE_HPP_
#define DILOCO_WIRE_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace diloco::wire {

// Frame layout (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "DLC1"
//   4       1     msg_type; bit 7 set = payload stored as f32
//   5       4     worker_id
//   9       4     outer_step
//   13      8     payload_len (bytes)
//   21      n     payload, IEEE-754 reals
//   21+n    4     crc32 (zlib polynomial) over bytes [0, 21+n)
enum class MsgType : std::uint8_t {
  kJoin = 1,
  kParams = 2,
  kOuterGrad = 3,
  kAck = 4,
  kShutdown = 5,
};

inline constexpr std::uint8_t kF32Flag = 0x80;
inline constexpr std::size_t kHeaderSize = 21;
inline constexpr std::size_t kTrailerSize = 4;
inline constexpr std::size_t kFrameOverhead = kHeaderSize + kTrailerSize;
// Upper bound accepted by decoders; guards allocation on corrupt lengths.
inline constexpr std::uint64_t kMaxPayloadBytes = std::uint64_t{1} << 32;

// worker_id of a SHUTDOWN sent in reply to a refused JOIN; outer_step then
// carries a JoinReject code.
inline constexpr std::uint32_t kRejectMarker = 0xffffffffu;

enum class JoinReject : std::uint32_t {
  kDuplicateWorker = 1,
  kWorkerOutOfRange = 2,
  kConfigMismatch = 3,
  kMalformed = 4,
};

const char* describe(JoinReject reason);

struct Message {
  MsgType type = MsgType::kAck;
  std::uint32_t worker_id = 0;
  std::uint32_t outer_step = 0;
  std::vector<double> payload;
  bool f32 = false;

  // Payloads compare bitwise, so messages carrying a hash word compare
  // correctly even when the bits spell a NaN.
  friend bool operator==(const Message& a, const Message& b);
};

std::size_t frame_size(std::size_t payload_count, bool f32 = false);

std::vector<std::uint8_t> encode_message(const Message& msg);

// Throws Error(kProtocol) naming the failed check: magic, type, length, crc.
Message decode_message(std::span<const std::uint8_t> frame);

// Payload length in bytes announced by a header; validates magic and type.
std::uint64_t peek_payload_len(std::span<const std::uint8_t> header);

// JOIN and the ACK that accepts it carry the 64-bit config hash as their
// single payload word.
Message make_join(std::uint32_t worker_id, std::uint64_t config_hash);
Message make_join_ack(std::uint32_t worker_id, std::uint64_t config_hash);
std::uint64_t hash_word(const Message& msg);

}  // namespace diloco::wire

#endif  // DILOCO_WIRE_HPP_
