#include "bits.hpp"

#include "errors.hpp"

namespace dpsq {

std::vector<uint8_t> BitVector::to_bytes() const {
  std::vector<uint8_t> out((size_ + 7) / 8, 0);
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<uint8_t>(words_[i >> 3] >> ((i & 7) * 8));
  }
  return out;
}

BitVector BitVector::from_bytes(std::span<const uint8_t> bytes, size_t nbits) {
  if (bytes.size() < (nbits + 7) / 8)
    fail(Errc::length_mismatch, "bit payload shorter than declared bit count");
  BitVector v(nbits);
  for (size_t i = 0; i < (nbits + 7) / 8; ++i) {
    v.words_[i >> 3] |= uint64_t{bytes[i]} << ((i & 7) * 8);
  }
  // Clear padding introduced by the final byte.
  if (nbits & 63) v.words_.back() &= (~uint64_t{0}) >> (64 - (nbits & 63));
  return v;
}

BitVector BitVector::without_positions(std::span<const uint64_t> sorted_positions) const {
  BitVector out;
  size_t k = 0;
  for (size_t i = 0; i < size_; ++i) {
    if (k < sorted_positions.size() && sorted_positions[k] == i) {
      ++k;
      continue;
    }
    out.push_back(get(i));
  }
  return out;
}

size_t BitVector::hamming_distance(const BitVector& other) const {
  if (size_ != other.size_)
    fail(Errc::length_mismatch, "hamming distance requires equal lengths");
  size_t d = 0;
  for (size_t w = 0; w < words_.size(); ++w) d += std::popcount(words_[w] ^ other.words_[w]);
  return d;
}

}  // namespace dpsq
