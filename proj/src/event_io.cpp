#include "event_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "errors.hpp"

namespace dpsq {

namespace {

constexpr uint8_t kVersion = 1;
constexpr uint8_t kKindEvents = 0;
constexpr uint8_t kKindPhases = 1;

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_i32(std::vector<uint8_t>& out, int32_t v) {
  uint32_t u = static_cast<uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(u >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> b) : b_(b) {}

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t{b_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }

  int32_t i32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{b_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return static_cast<int32_t>(v);
  }

  uint8_t u8() {
    need(1);
    return b_[pos_++];
  }

  std::span<const uint8_t> bytes(size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (b_.size() - pos_ < n) fail(Errc::parse, "record file truncated");
  }
  std::span<const uint8_t> b_;
  size_t pos_ = 0;
};

void put_header(std::vector<uint8_t>& out, uint8_t kind, uint64_t slot_count) {
  out.insert(out.end(), {'D', 'P', 'S', 'Q'});
  out.push_back(kVersion);
  out.push_back(kind);
  out.push_back(0);
  out.push_back(0);
  put_u64(out, slot_count);
}

uint64_t check_header(ByteReader& r, uint8_t expect_kind) {
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), "DPSQ", 4) != 0) fail(Errc::parse, "bad magic in record file");
  uint8_t version = r.u8();
  if (version != kVersion)
    fail(Errc::parse, "unsupported record file version " + std::to_string(version));
  uint8_t kind = r.u8();
  if (kind != expect_kind) fail(Errc::parse, "record file holds the wrong payload kind");
  r.u8();
  r.u8();
  return r.u64();
}

}  // namespace

std::vector<uint8_t> encode_detection_log(const DetectionLog& log) {
  std::vector<uint8_t> out;
  out.reserve(32 + log.events.size() * 13);
  put_header(out, kKindEvents, log.slot_count);
  put_u64(out, log.session_id);
  put_u64(out, log.events.size());
  for (const DetectionEvent& ev : log.events) {
    put_u64(out, ev.slot_index);
    out.push_back(ev.detector_id);
    long long ps = std::llround(ev.time_offset_s * 1e12);
    if (ps < std::numeric_limits<int32_t>::min() || ps > std::numeric_limits<int32_t>::max())
      fail(Errc::invariant, "time offset exceeds the representable +-2.1 us");
    put_i32(out, static_cast<int32_t>(ps));
  }
  return out;
}

DetectionLog decode_detection_log(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  DetectionLog log;
  log.slot_count = check_header(r, kKindEvents);
  log.session_id = r.u64();
  uint64_t count = r.u64();
  if (r.remaining() != count * 13)
    fail(Errc::parse, "event payload size disagrees with the declared count");
  log.events.reserve(count);
  uint64_t prev_slot = 0;
  for (uint64_t i = 0; i < count; ++i) {
    DetectionEvent ev;
    ev.slot_index = r.u64();
    ev.detector_id = r.u8();
    ev.time_offset_s = static_cast<double>(r.i32()) * 1e-12;
    if (ev.detector_id > 1) fail(Errc::parse, "detector id must be 0 or 1");
    if (ev.slot_index == 0 || ev.slot_index >= log.slot_count)
      fail(Errc::parse, "event slot index outside [1, slot_count)");
    if (i > 0 && ev.slot_index <= prev_slot)
      fail(Errc::parse, "event slots must be strictly increasing");
    prev_slot = ev.slot_index;
    log.events.push_back(ev);
  }
  return log;
}

std::vector<uint8_t> encode_sender_record(const SenderRecord& rec, uint64_t slot_count) {
  if (rec.phases.size() != slot_count)
    fail(Errc::length_mismatch, "phase record length disagrees with slot count");
  std::vector<uint8_t> out;
  put_header(out, kKindPhases, slot_count);
  put_u64(out, rec.session_id);
  put_u64(out, rec.seed);
  auto bits = rec.phases.to_bytes();
  out.insert(out.end(), bits.begin(), bits.end());
  return out;
}

SenderRecord decode_sender_record(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  SenderRecord rec;
  uint64_t slot_count = check_header(r, kKindPhases);
  rec.session_id = r.u64();
  rec.seed = r.u64();
  size_t nbytes = (slot_count + 7) / 8;
  if (r.remaining() != nbytes) fail(Errc::parse, "phase payload size disagrees with slot count");
  rec.phases = BitVector::from_bytes(r.bytes(nbytes), slot_count);
  return rec;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::io, "cannot open file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(Errc::io, "cannot open file for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(Errc::io, "short write: " + path);
}

void write_detection_log(const std::string& path, const DetectionLog& log) {
  write_file_bytes(path, encode_detection_log(log));
}

DetectionLog read_detection_log(const std::string& path) {
  return decode_detection_log(read_file_bytes(path));
}

void write_sender_record(const std::string& path, const SenderRecord& rec) {
  write_file_bytes(path, encode_sender_record(rec, rec.phases.size()));
}

SenderRecord read_sender_record(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return decode_sender_record(bytes);
}

void write_key_file(const std::string& path, const BitVector& bits) {
  std::vector<uint8_t> out;
  put_u64(out, bits.size());
  auto body = bits.to_bytes();
  out.insert(out.end(), body.begin(), body.end());
  write_file_bytes(path, out);
}

BitVector read_key_file(const std::string& path) {
  auto bytes = read_file_bytes(path);
  ByteReader r{std::span<const uint8_t>(bytes)};
  uint64_t nbits = r.u64();
  if (r.remaining() != (nbits + 7) / 8)
    fail(Errc::parse, "key file size disagrees with the declared bit count");
  return BitVector::from_bytes(r.bytes((nbits + 7) / 8), nbits);
}

}  // namespace dpsq
