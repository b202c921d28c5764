#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dpsq {

// Dense bit string over uint64 words, bit i at words()[i>>6] bit (i&63).
// Invariant: bits past size() in the last word are always zero, so word-wise
// parity/popcount never needs a tail mask.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(size_t n) : words_((n + 63) / 64, 0), size_(n) {}

  size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  bool get(size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1; }

  void set(size_t i, bool v) {
    uint64_t m = uint64_t{1} << (i & 63);
    if (v)
      words_[i >> 6] |= m;
    else
      words_[i >> 6] &= ~m;
  }

  void flip(size_t i) { words_[i >> 6] ^= uint64_t{1} << (i & 63); }

  void push_back(bool v) {
    if ((size_ & 63) == 0) words_.push_back(0);
    if (v) words_.back() |= uint64_t{1} << (size_ & 63);
    ++size_;
  }

  size_t count_ones() const {
    size_t c = 0;
    for (uint64_t w : words_) c += std::popcount(w);
    return c;
  }

  bool parity_all() const { return count_ones() & 1; }

  // Parity of an arbitrary position set (positions must be < size()).
  bool parity_at(std::span<const uint64_t> positions) const {
    uint64_t acc = 0;
    for (uint64_t p : positions) acc ^= (words_[p >> 6] >> (p & 63)) & 1;
    return acc & 1;
  }

  const std::vector<uint64_t>& words() const { return words_; }

  bool operator==(const BitVector&) const = default;

  // LSB-first byte packing; bit i lives in byte i/8 at bit i%8.
  std::vector<uint8_t> to_bytes() const;
  static BitVector from_bytes(std::span<const uint8_t> bytes, size_t nbits);

  // Copy with the given sorted, unique positions removed.
  BitVector without_positions(std::span<const uint64_t> sorted_positions) const;

  size_t hamming_distance(const BitVector& other) const;

 private:
  std::vector<uint64_t> words_;
  size_t size_ = 0;
};

}  // namespace dpsq
