#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace dpsq {

// Wire format, little-endian:
//   u32 payload_length | u8 msg_type | payload bytes
// The length counts the payload only. Payloads above 64 MiB are rejected
// before any allocation.
enum class MsgType : uint8_t {
  hello = 1,
  event_transfer = 2,
  sift_announce = 3,
  sample = 4,
  parity = 5,
  flip = 6,
  verify = 7,
  pa_seed = 8,
  done = 9,
  error = 10,
};

constexpr uint32_t kMaxPayload = 64u * 1024 * 1024;
constexpr uint8_t kProtocolVersion = 1;

struct Frame {
  MsgType type = MsgType::hello;
  std::vector<uint8_t> payload;
};

std::vector<uint8_t> encode_frame(const Frame& f);

// Incremental decoder over an arbitrary byte stream. feed() any chunking,
// then drain next() until it returns nullopt. finish() asserts that no
// partial frame is left. All malformed input surfaces as Errc::
// unknown_frame_type / oversize_frame / truncated_frame, never as UB.
class FrameDecoder {
 public:
  void feed(std::span<const uint8_t> bytes);
  std::optional<Frame> next();
  void finish() const;
  size_t buffered() const { return buf_.size(); }

 private:
  std::deque<uint8_t> buf_;
};

// Little-endian payload cursor helpers shared by the session layer.
class PayloadReader {
 public:
  explicit PayloadReader(std::span<const uint8_t> b) : b_(b) {}
  uint8_t u8();
  uint64_t u64();
  std::span<const uint8_t> bytes(size_t n);
  std::span<const uint8_t> rest();
  void expect_end() const;

 private:
  std::span<const uint8_t> b_;
  size_t pos_ = 0;
};

void put_u8(std::vector<uint8_t>& out, uint8_t v);
void put_u64_le(std::vector<uint8_t>& out, uint64_t v);

}  // namespace dpsq
