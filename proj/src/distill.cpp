#include "distill.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "rng.hpp"
#include "security.hpp"
#include "toeplitz.hpp"

namespace dpsq {

namespace {

constexpr uint64_t kClassicalTag = 0x636c61737369ull;  // "classi"

void check_pair(const KeyMaterial& a, const KeyMaterial& b) {
  if (a.bits.size() != b.bits.size())
    fail(Errc::length_mismatch, "key pair lengths differ");
  if (a.session_id != b.session_id)
    fail(Errc::session_mismatch, "key pair comes from different sessions");
}

}  // namespace

std::vector<uint64_t> sample_positions(uint64_t n, uint64_t k, uint64_t seed) {
  if (k > n) fail(Errc::domain, "cannot sample more positions than exist");
  std::vector<uint64_t> idx(n);
  for (uint64_t i = 0; i < n; ++i) idx[i] = i;
  SessionRng rng(seed);
  for (uint64_t i = 0; i < k; ++i) {
    uint64_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ClassicalSeeds seeds_from_classical(uint64_t classical_seed) {
  ClassicalSeeds s;
  s.classical = classical_seed;
  s.sample = derive_seed(s.classical, 1);
  s.cascade = derive_seed(s.classical, 2);
  s.verify = derive_seed(s.classical, 3);
  s.pa = derive_seed(s.classical, 4);
  return s;
}

ClassicalSeeds derive_classical_seeds(uint64_t sim_seed) {
  return seeds_from_classical(derive_seed(sim_seed, kClassicalTag));
}

std::pair<KeyMaterial, KeyMaterial> sift(const SenderRecord& record, const DetectionLog& log) {
  if (record.session_id != log.session_id)
    fail(Errc::session_mismatch, "sender record and detection log disagree on session id");
  KeyMaterial a, b;
  a.session_id = b.session_id = log.session_id;
  a.stage = b.stage = KeyStage::sifted;
  for (const DetectionEvent& ev : log.events) {
    if (ev.slot_index == 0 || ev.slot_index >= record.phases.size())
      fail(Errc::slot_out_of_range, "event slot index outside the phase record");
    a.bits.push_back(record.phases.get(ev.slot_index) ^ record.phases.get(ev.slot_index - 1));
    b.bits.push_back(ev.detector_id != 0);
  }
  return {std::move(a), std::move(b)};
}

QberEstimate estimate_qber(const KeyMaterial& a, const KeyMaterial& b, double fraction,
                           uint64_t seed) {
  check_pair(a, b);
  if (!(fraction >= 0.0 && fraction < 1.0))
    fail(Errc::domain, "sample fraction must be in [0, 1)");
  uint64_t n = a.bits.size();
  uint64_t k = static_cast<uint64_t>(fraction * static_cast<double>(n));

  QberEstimate out;
  out.sampled = k;
  std::vector<uint64_t> pos = sample_positions(n, k, seed);
  for (uint64_t p : pos)
    if (a.bits.get(p) != b.bits.get(p)) ++out.mismatches;
  out.estimate = k > 0 ? static_cast<double>(out.mismatches) / static_cast<double>(k) : 0.0;

  out.a = a;
  out.b = b;
  out.a.bits = a.bits.without_positions(pos);
  out.b.bits = b.bits.without_positions(pos);
  out.a.stage = out.b.stage = KeyStage::sampled;
  return out;
}

std::pair<KeyMaterial, ReconciliationTranscript> reconcile(const KeyMaterial& a,
                                                           const KeyMaterial& b,
                                                           double qber_hint, uint64_t seed) {
  check_pair(a, b);
  KeyMaterial corrected = b;

  CascadeOptions opts;
  opts.qber_hint = qber_hint;
  opts.seed = seed;
  CascadeEngine eng(a.bits.size(), opts);
  while (auto q = eng.next_query()) {
    auto span = eng.positions(*q);
    eng.advance(a.bits.parity_at(span), corrected.bits.parity_at(span));
    for (uint64_t p : eng.take_flips()) corrected.bits.flip(p);
  }
  if (eng.failed())
    fail(Errc::non_convergence, "reconciliation still dirty after the pass limit");

  corrected.stage = KeyStage::reconciled;
  corrected.leakage_bits += eng.transcript().total_parities;
  return {std::move(corrected), eng.transcript()};
}

uint64_t verify_hash(const KeyMaterial& k, uint64_t seed) {
  return toeplitz_hash64(k.bits, seed);
}

bool verify(const KeyMaterial& a, const KeyMaterial& b, uint64_t seed) {
  check_pair(a, b);
  return verify_hash(a, seed) == verify_hash(b, seed);
}

uint64_t final_length(uint64_t n, double tau, uint64_t leakage_bits, uint64_t margin_bits) {
  if (!(tau >= 0.0 && tau <= 1.0)) fail(Errc::domain, "tau must be in [0, 1]");
  double kept = std::floor(static_cast<double>(n) * tau);
  double m = kept - static_cast<double>(leakage_bits) - static_cast<double>(margin_bits);
  if (m <= 0.0) return 0;
  return std::min<uint64_t>(static_cast<uint64_t>(m), n);
}

KeyMaterial privacy_amplify_with(const KeyMaterial& key, uint64_t m, const BitVector& diag) {
  if (m > key.bits.size())
    fail(Errc::output_too_long, "privacy amplification cannot stretch the key");
  KeyMaterial out = key;
  out.bits = m == 0 ? BitVector(0) : toeplitz_multiply(diag, m, key.bits);
  out.stage = KeyStage::final;
  return out;
}

KeyMaterial privacy_amplify(const KeyMaterial& key, uint64_t m, uint64_t seed) {
  if (m > key.bits.size())
    fail(Errc::output_too_long, "privacy amplification cannot stretch the key");
  if (m == 0) return privacy_amplify_with(key, 0, BitVector(0));
  return privacy_amplify_with(key, m,
                              toeplitz_diag_from_seed(seed, key.bits.size() + m - 1));
}

DistillOutcome run_distillation(const ExperimentConfig& cfg, const SenderRecord& record,
                                const DetectionLog& log, const DistillOptions& opts) {
  DistillOutcome out;
  auto [a0, b0] = sift(record, log);
  out.summary.sifted_bits = a0.bits.size();

  ClassicalSeeds seeds = derive_classical_seeds(record.seed);
  QberEstimate est = estimate_qber(a0, b0, opts.sample_fraction, seeds.sample);
  out.summary.sampled_bits = est.sampled;
  out.summary.sample_mismatches = est.mismatches;
  out.summary.qber_estimate = est.estimate;
  out.summary.corrected_bits = est.a.bits.size();

  // The hint only shapes initial block sizes; clamp it away from the
  // degenerate edges the estimator can produce on small samples.
  double hint = std::clamp(est.estimate, 0.005, 0.3);
  out.summary.qber_hint = hint;

  auto [b1, transcript] = reconcile(est.a, est.b, hint, seeds.cascade);
  out.transcript = transcript;
  out.summary.reconcile_parities = transcript.total_parities;
  out.summary.reconcile_flips = transcript.flip_positions.size();
  out.summary.reconcile_passes = static_cast<uint32_t>(transcript.rounds.size());

  bool ok = verify(est.a, b1, seeds.verify);
  out.summary.verified = ok;
  uint64_t leakage = transcript.total_parities + 64;
  out.summary.leakage_bits = leakage;

  // Shrink factor from the measured estimate, not the configured model:
  // the disclosed sample is the only error knowledge the parties share.
  double tau = compression_factor(std::clamp(est.estimate, 0.0, 0.499),
                                  cfg.source.mean_photon_number);
  out.summary.tau = tau;
  uint64_t m = final_length(est.a.bits.size(), tau, leakage, cfg.protocol.pa_margin_bits);
  out.summary.final_bits = m;

  if (ok) {
    KeyMaterial sa = est.a;
    sa.leakage_bits = leakage;
    KeyMaterial sb = b1;
    sb.leakage_bits = leakage;
    out.sender_key = privacy_amplify(sa, m, seeds.pa);
    out.receiver_key = privacy_amplify(sb, m, seeds.pa);
  } else {
    // Never ship key material that failed verification.
    out.summary.final_bits = 0;
    out.sender_key.session_id = out.receiver_key.session_id = record.session_id;
    out.sender_key.stage = out.receiver_key.stage = KeyStage::final;
  }
  return out;
}

}  // namespace dpsq
