#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bits.hpp"
#include "cascade.hpp"
#include "params.hpp"
#include "sim.hpp"

namespace dpsq {

enum class KeyStage : uint8_t { sifted, sampled, reconciled, final };

struct KeyMaterial {
  BitVector bits;
  KeyStage stage = KeyStage::sifted;
  uint64_t leakage_bits = 0;  // classical-channel disclosure charged to this key
  uint64_t session_id = 0;
};

// Sender bit: phase difference of adjacent pulses at the logged slot.
// Receiver bit: which detector fired. Equal-length keys by construction.
std::pair<KeyMaterial, KeyMaterial> sift(const SenderRecord& record, const DetectionLog& log);

struct QberEstimate {
  double estimate = 0.0;
  uint64_t sampled = 0;
  uint64_t mismatches = 0;
  KeyMaterial a;  // remaining key material, sample positions removed
  KeyMaterial b;
};

// Publicly compares floor(fraction * n) positions chosen by `seed` and
// removes them from both keys. Both sides derive identical positions from
// (seed, n), so only the sampled bit values ever cross the wire.
QberEstimate estimate_qber(const KeyMaterial& a, const KeyMaterial& b, double fraction,
                           uint64_t seed);

// In-process reconciliation: runs the cascade engine with both keys local.
// Returns the corrected copy of b; leakage grows by one bit per compared
// parity. Throws Errc::non_convergence if the engine gives up.
std::pair<KeyMaterial, ReconciliationTranscript> reconcile(const KeyMaterial& a,
                                                           const KeyMaterial& b,
                                                           double qber_hint, uint64_t seed);

// 64-bit universal-hash comparison. Cheap, so it runs after every
// reconciliation; 2^-64 false-accept probability per session.
bool verify(const KeyMaterial& a, const KeyMaterial& b, uint64_t seed);
uint64_t verify_hash(const KeyMaterial& k, uint64_t seed);

// floor(n * tau) - leakage - margin, clamped to [0, n].
uint64_t final_length(uint64_t n, double tau, uint64_t leakage_bits, uint64_t margin_bits);

// Toeplitz compression to m bits with a seed-derived matrix.
// Throws Errc::output_too_long if m exceeds the input length.
KeyMaterial privacy_amplify(const KeyMaterial& key, uint64_t m, uint64_t seed);
KeyMaterial privacy_amplify_with(const KeyMaterial& key, uint64_t m, const BitVector& diag);

// Fixed derivation of every classical-stage seed from the session seed.
// Shared by the in-process pipeline and both session roles, which is what
// makes the two modes produce identical keys.
struct ClassicalSeeds {
  uint64_t classical = 0;
  uint64_t sample = 0;
  uint64_t cascade = 0;
  uint64_t verify = 0;
  uint64_t pa = 0;
};
ClassicalSeeds derive_classical_seeds(uint64_t sim_seed);
ClassicalSeeds seeds_from_classical(uint64_t classical_seed);

// First k entries of a seeded shuffle of [0, n), sorted. Public because the
// session roles must derive identical sample positions independently.
std::vector<uint64_t> sample_positions(uint64_t n, uint64_t k, uint64_t seed);

struct DistillOptions {
  double sample_fraction = 0.1;
};

struct DistillSummary {
  uint64_t sifted_bits = 0;
  uint64_t sampled_bits = 0;
  uint64_t sample_mismatches = 0;
  double qber_estimate = 0.0;
  double qber_hint = 0.0;
  uint64_t corrected_bits = 0;  // key bits entering reconciliation
  uint64_t reconcile_parities = 0;
  uint64_t reconcile_flips = 0;
  uint32_t reconcile_passes = 0;
  uint64_t leakage_bits = 0;  // parities + verification hash
  double tau = 0.0;
  uint64_t final_bits = 0;
  bool verified = false;
};

struct DistillOutcome {
  DistillSummary summary;
  ReconciliationTranscript transcript;
  KeyMaterial sender_key;    // empty unless verified
  KeyMaterial receiver_key;  // equals sender_key when verified
};

// Full single-process pipeline over an already-simulated session.
DistillOutcome run_distillation(const ExperimentConfig& cfg, const SenderRecord& record,
                                const DetectionLog& log, const DistillOptions& opts);

}  // namespace dpsq
