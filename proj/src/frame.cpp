#include "frame.hpp"

#include <string>

#include "errors.hpp"

namespace dpsq {

std::vector<uint8_t> encode_frame(const Frame& f) {
  if (f.payload.size() > kMaxPayload)
    fail(Errc::oversize_frame, "payload exceeds the 64 MiB frame cap");
  std::vector<uint8_t> out;
  out.reserve(5 + f.payload.size());
  uint32_t len = static_cast<uint32_t>(f.payload.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(len >> (8 * i)));
  out.push_back(static_cast<uint8_t>(f.type));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

void FrameDecoder::feed(std::span<const uint8_t> bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Frame> FrameDecoder::next() {
  if (buf_.size() < 5) return std::nullopt;
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= uint32_t{buf_[i]} << (8 * i);
  // Reject before buffering the body: the length word alone must not force
  // an allocation.
  if (len > kMaxPayload) fail(Errc::oversize_frame, "declared payload exceeds the 64 MiB cap");
  uint8_t type = buf_[4];
  if (type < 1 || type > 10)
    fail(Errc::unknown_frame_type, "unknown frame type " + std::to_string(type));
  if (buf_.size() < size_t{5} + len) return std::nullopt;

  Frame f;
  f.type = static_cast<MsgType>(type);
  f.payload.assign(buf_.begin() + 5, buf_.begin() + 5 + len);
  buf_.erase(buf_.begin(), buf_.begin() + 5 + len);
  return f;
}

void FrameDecoder::finish() const {
  if (!buf_.empty()) fail(Errc::truncated_frame, "stream ended inside a frame");
}

uint8_t PayloadReader::u8() {
  if (b_.size() - pos_ < 1) fail(Errc::protocol, "payload shorter than expected");
  return b_[pos_++];
}

uint64_t PayloadReader::u64() {
  if (b_.size() - pos_ < 8) fail(Errc::protocol, "payload shorter than expected");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t{b_[pos_ + i]} << (8 * i);
  pos_ += 8;
  return v;
}

std::span<const uint8_t> PayloadReader::bytes(size_t n) {
  if (b_.size() - pos_ < n) fail(Errc::protocol, "payload shorter than expected");
  auto s = b_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::span<const uint8_t> PayloadReader::rest() {
  auto s = b_.subspan(pos_);
  pos_ = b_.size();
  return s;
}

void PayloadReader::expect_end() const {
  if (pos_ != b_.size()) fail(Errc::protocol, "payload longer than expected");
}

void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

void put_u64_le(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

}  // namespace dpsq
