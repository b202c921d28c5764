#pragma once

#include <cstdint>

#include "bits.hpp"

namespace dpsq {

// GF(2) multiply by the m x n Toeplitz matrix whose first column is
// diag[n-1 .. n+m-2] and first row (reversed) is diag[0 .. n-1]:
// T[i][j] = diag[i - j + (n - 1)]. diag must hold exactly n + m - 1 bits.
BitVector toeplitz_multiply(const BitVector& diag, size_t out_bits, const BitVector& x);

// Deterministic diagonal expansion for a given seed.
BitVector toeplitz_diag_from_seed(uint64_t seed, size_t bits);

// 64-bit Toeplitz hash used for key verification. Empty input hashes to 0.
uint64_t toeplitz_hash64(const BitVector& x, uint64_t seed);

}  // namespace dpsq
