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

#include <bit>
#include <cmath>
#include <limits>

#include "error.hpp"
#include "test_util.hpp"
#include "wire.hpp"

using namespace diloco;
using namespace diloco::wire;

namespace {

ErrorCode decode_error(const std::vector<std::uint8_t>& frame, std::string* what = nullptr) {
  try {
    decode_message(frame);
  } catch (const Error& e) {
    if (what) *what = e.what();
    return e.code();
  }
  return ErrorCode::kInternal;
}

}  // namespace

TEST_SUITE("wire") {

TEST_CASE("frames match the documented byte layout") {
  const std::vector<std::uint8_t> golden = {
      0x44, 0x4c, 0x43, 0x31, 0x02, 0x03, 0x00, 0x00, 0x00, 0x07, 0x00,
      0x00, 0x00, 0x10, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
      0x00, 0x00, 0x00, 0x00, 0x00, 0xf8, 0x3f, 0x00, 0x00, 0x00, 0x00,
      0x00, 0x00, 0x00, 0xc0, 0x6b, 0xc7, 0xe9, 0xf1};
  const Message m{MsgType::kParams, 3, 7, {1.5, -2.0}, false};
  CHECK(encode_message(m) == golden);
  CHECK(decode_message(golden) == m);

  const std::vector<std::uint8_t> ack = {
      0x44, 0x4c, 0x43, 0x31, 0x04, 0x00, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00,
      0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xd4, 0x42, 0x96, 0xdb};
  CHECK(encode_message({MsgType::kAck, 0, 1, {}, false}) == ack);
}

TEST_CASE("round trip") {
  const Message zero{MsgType::kParams, 0, 0, {0.0}, false};
  CHECK(decode_message(encode_message(zero)) == zero);
  const Message ack{MsgType::kAck, 5, 9, {}, false};
  const auto frame = encode_message(ack);
  CHECK(frame.size() == kFrameOverhead);
  CHECK(decode_message(frame) == ack);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ParamVector v = testing::random_vector(100 * seed, seed, 1e3);
    const Message m{MsgType::kOuterGrad, std::uint32_t(seed), std::uint32_t(seed * 7),
                    v.values(), false};
    const auto f = encode_message(m);
    CHECK(f.size() == frame_size(v.size()));
    CHECK(decode_message(f) == m);
  }
}

TEST_CASE("special values survive bit-exactly") {
  const Message m{MsgType::kParams, 1, 1,
                  {-0.0, std::numeric_limits<double>::denorm_min(),
                   std::numeric_limits<double>::max(), 1e-300},
                  false};
  const Message back = decode_message(encode_message(m));
  CHECK(std::signbit(back.payload[0]));
  CHECK(back == m);
}

TEST_CASE("f32 payloads are flagged and rounded") {
  const Message m{MsgType::kParams, 1, 2, {0.1, 1.0 / 3.0}, true};
  const auto f = encode_message(m);
  CHECK(f.size() == frame_size(2, true));
  CHECK(f[4] == (static_cast<std::uint8_t>(MsgType::kParams) | kF32Flag));
  const Message back = decode_message(f);
  CHECK(back.f32);
  CHECK(back.payload[0] == double(float(0.1)));
  CHECK(back.payload[1] == double(float(1.0 / 3.0)));
}

TEST_CASE("a flipped payload bit fails the crc") {
  auto f = encode_message({MsgType::kOuterGrad, 1, 1, {1.0, 2.0, 3.0}, false});
  for (std::size_t byte = kHeaderSize; byte < f.size() - kTrailerSize; ++byte) {
    auto g = f;
    g[byte] ^= 0x10;
    std::string what;
    REQUIRE(decode_error(g, &what) == ErrorCode::kProtocol);
    REQUIRE(what.find("crc") != std::string::npos);
  }
}

TEST_CASE("corrupt frames are rejected with a reason") {
  const auto f = encode_message({MsgType::kParams, 1, 1, {1.0, 2.0}, false});
  std::string what;

  auto bad_magic = f;
  bad_magic[0] = 'X';
  CHECK(decode_error(bad_magic, &what) == ErrorCode::kProtocol);
  CHECK(what.find("magic") != std::string::npos);

  auto truncated = f;
  truncated.pop_back();
  CHECK(decode_error(truncated, &what) == ErrorCode::kProtocol);
  CHECK(what.find("length") != std::string::npos);

  const std::vector<std::uint8_t> short_header(f.begin(), f.begin() + 10);
  CHECK(decode_error(short_header) == ErrorCode::kProtocol);

  auto bad_type = f;
  bad_type[4] = 9;
  CHECK(decode_error(bad_type, &what) == ErrorCode::kProtocol);
  CHECK(what.find("type") != std::string::npos);

  auto odd_len = f;
  odd_len[13] = 15;
  CHECK(decode_error(odd_len, &what) == ErrorCode::kProtocol);
  CHECK(what.find("multiple") != std::string::npos);

  auto huge = f;
  huge[20] = 0x7f;
  CHECK(decode_error(huge, &what) == ErrorCode::kProtocol);
}

TEST_CASE("join carries the config hash bit-exactly") {
  for (std::uint64_t h : {std::uint64_t{0}, std::uint64_t{0x7ff8000000000001ULL},
                          std::uint64_t{0xffffffffffffffffULL}, std::uint64_t{12345}}) {
    const Message j = make_join(4, h);
    const Message back = decode_message(encode_message(j));
    CHECK(back.type == MsgType::kJoin);
    CHECK(back.worker_id == 4);
    CHECK(hash_word(back) == h);
    CHECK(hash_word(make_join_ack(4, h)) == h);
  }
  CHECK_THROWS_AS(hash_word(Message{MsgType::kAck, 0, 0, {}, false}), Error);
}

TEST_CASE("per-round frame size is two payloads plus framing") {
  const std::size_t P = 106880;
  CHECK(frame_size(P) == 8 * P + 25);
  CHECK(2 * frame_size(P) == 2 * 8 * P + 2 * kFrameOverhead);
}

}  // TEST_SUITE
