#include "toeplitz.hpp"

#include <bit>

#include "errors.hpp"
#include "rng.hpp"

namespace dpsq {

namespace {

// Reversing the diagonal turns every matrix row into one contiguous window:
// row i of T is rev[m-1-i .. m-1-i+n). Each output bit is then a word-wise
// AND + parity over a shifted window, O(n/64) per row.
BitVector reverse_bits(const BitVector& v) {
  BitVector out(v.size());
  for (size_t i = 0; i < v.size(); ++i)
    if (v.get(v.size() - 1 - i)) out.set(i, true);
  return out;
}

uint64_t window_word(const std::vector<uint64_t>& words, size_t bit_offset, size_t w) {
  size_t q = bit_offset / 64 + w;
  size_t r = bit_offset % 64;
  uint64_t lo = q < words.size() ? words[q] : 0;
  if (r == 0) return lo;
  uint64_t hi = q + 1 < words.size() ? words[q + 1] : 0;
  return (lo >> r) | (hi << (64 - r));
}

}  // namespace

BitVector toeplitz_multiply(const BitVector& diag, size_t out_bits, const BitVector& x) {
  size_t n = x.size();
  if (out_bits == 0) return BitVector(0);
  if (diag.size() != n + out_bits - 1)
    fail(Errc::length_mismatch, "toeplitz diagonal must hold n + m - 1 bits");
  if (n == 0) return BitVector(out_bits);

  BitVector rev = reverse_bits(diag);
  const auto& rw = rev.words();
  const auto& xw = x.words();
  BitVector out(out_bits);
  for (size_t i = 0; i < out_bits; ++i) {
    size_t offset = out_bits - 1 - i;
    uint64_t acc = 0;
    for (size_t w = 0; w < xw.size(); ++w) acc ^= window_word(rw, offset, w) & xw[w];
    if (std::popcount(acc) & 1) out.set(i, true);
  }
  return out;
}

BitVector toeplitz_diag_from_seed(uint64_t seed, size_t bits) {
  SessionRng rng(seed);
  BitVector diag(bits);
  for (size_t w = 0; w * 64 < bits; ++w) {
    uint64_t word = rng.next_u64();
    for (size_t b = 0; b < 64 && w * 64 + b < bits; ++b)
      if ((word >> b) & 1) diag.set(w * 64 + b, true);
  }
  return diag;
}

uint64_t toeplitz_hash64(const BitVector& x, uint64_t seed) {
  if (x.empty()) return 0;
  BitVector diag = toeplitz_diag_from_seed(seed, x.size() + 63);
  BitVector h = toeplitz_multiply(diag, 64, x);
  return h.words()[0];
}

}  // namespace dpsq
