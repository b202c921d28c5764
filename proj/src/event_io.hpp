#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bits.hpp"
#include "sim.hpp"

namespace dpsq {

// Binary container shared by detection logs and sender phase records.
//
//   offset  size  field
//   0       4     magic "DPSQ"
//   4       1     format version (1)
//   5       1     payload kind: 0 = detection events, 1 = sender phases
//   6       2     zero padding
//   8       8     slot_count (LE)
//
// Detection payload: session_id u64, event_count u64, then event_count
// packed records of {slot_index u64, detector_id u8, time_offset i32 ps},
// 13 bytes each, slot-sorted.
// Phase payload: session_id u64, seed u64, ceil(slot_count/8) phase bytes,
// LSB-first.

std::vector<uint8_t> encode_detection_log(const DetectionLog& log);
DetectionLog decode_detection_log(std::span<const uint8_t> bytes);

std::vector<uint8_t> encode_sender_record(const SenderRecord& rec, uint64_t slot_count);
SenderRecord decode_sender_record(std::span<const uint8_t> bytes);

void write_detection_log(const std::string& path, const DetectionLog& log);
DetectionLog read_detection_log(const std::string& path);

void write_sender_record(const std::string& path, const SenderRecord& rec);
SenderRecord read_sender_record(const std::string& path);

// Key files: bit_count u64 (LE) then packed bits, LSB-first.
void write_key_file(const std::string& path, const BitVector& bits);
BitVector read_key_file(const std::string& path);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace dpsq
