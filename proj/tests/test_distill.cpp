#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <exception>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "distill.hpp"
#include "errors.hpp"
#include "event_io.hpp"
#include "params.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "session.hpp"
#include "sim.hpp"

using namespace dpsq;

namespace {

ExperimentConfig reference_config() {
  return load_config(std::string(DPSQ_CONFIG_DIR) + "/paper-10km.cfg");
}

KeyMaterial random_key(uint64_t n, uint64_t seed) {
  KeyMaterial k;
  SessionRng rng(seed);
  for (uint64_t i = 0; i < n; ++i) k.bits.push_back(rng.bit());
  return k;
}

}  // namespace

TEST_CASE("sifting pairs phase differences with detector ids") {
  SenderRecord rec;
  rec.session_id = 12;
  rec.seed = 1;
  for (int p : {0, 1, 1, 0}) rec.phases.push_back(p != 0);
  // Phase differences: slot1 = 0^1 = 1, slot2 = 1^1 = 0, slot3 = 1^0 = 1.
  DetectionLog log;
  log.session_id = 12;
  log.slot_count = 4;
  log.events = {{2, 0, 0.0}, {3, 1, 0.0}};

  auto [a, b] = sift(rec, log);
  REQUIRE(a.bits.size() == 2);
  CHECK(a.bits.get(0) == false);  // slot 2 difference
  CHECK(a.bits.get(1) == true);   // slot 3 difference
  CHECK(b.bits.get(0) == false);  // detector 0
  CHECK(b.bits.get(1) == true);   // detector 1
  CHECK(a.session_id == 12);
  CHECK(a.stage == KeyStage::sifted);

  // A misrouted click shows up as a disagreement, not an error.
  log.events[0].detector_id = 1;
  auto [a2, b2] = sift(rec, log);
  CHECK(a2.bits.get(0) == false);
  CHECK(b2.bits.get(0) == true);
}

TEST_CASE("sifting rejects mismatched sessions and out-of-range slots") {
  SenderRecord rec;
  rec.session_id = 1;
  for (int i = 0; i < 4; ++i) rec.phases.push_back(false);
  DetectionLog log;
  log.session_id = 2;
  log.slot_count = 4;
  CHECK_THROWS_AS(sift(rec, log), Error);

  log.session_id = 1;
  log.events = {{4, 0, 0.0}};  // one past the phase record
  CHECK_THROWS_AS(sift(rec, log), Error);
  log.events = {{0, 0, 0.0}};  // slot 0 has no predecessor
  CHECK_THROWS_AS(sift(rec, log), Error);
}

TEST_CASE("sample positions are a sorted unique prefix of a seeded shuffle") {
  auto pos = sample_positions(1000, 100, 77);
  REQUIRE(pos.size() == 100);
  CHECK(std::is_sorted(pos.begin(), pos.end()));
  CHECK(std::adjacent_find(pos.begin(), pos.end()) == pos.end());
  CHECK(pos.back() < 1000);
  CHECK(pos == sample_positions(1000, 100, 77));
  CHECK(pos != sample_positions(1000, 100, 78));
  CHECK(sample_positions(5, 5, 3).size() == 5);
  CHECK(sample_positions(5, 0, 3).empty());
  CHECK_THROWS_AS(sample_positions(5, 6, 3), Error);
}

TEST_CASE("qber estimation discloses the sample and removes it from both keys") {
  const uint64_t n = 400;
  KeyMaterial a = random_key(n, 9);
  a.session_id = 5;
  KeyMaterial b = a;
  std::vector<uint64_t> wrong{3, 50, 51, 200, 399};
  for (uint64_t p : wrong) b.bits.flip(p);

  const uint64_t seed = 1234;
  QberEstimate est = estimate_qber(a, b, 0.25, seed);
  CHECK(est.sampled == 100);
  REQUIRE(est.a.bits.size() == 300);
  REQUIRE(est.b.bits.size() == 300);
  CHECK(est.a.stage == KeyStage::sampled);
  CHECK(est.a.session_id == 5);

  // Recompute by hand from the public position rule.
  auto pos = sample_positions(n, 100, seed);
  uint64_t mism = 0;
  for (uint64_t p : pos) mism += a.bits.get(p) != b.bits.get(p);
  CHECK(est.mismatches == mism);
  CHECK(est.estimate == doctest::Approx(static_cast<double>(mism) / 100.0));

  // Remaining keys are the unsampled positions in original order.
  std::set<uint64_t> sampled(pos.begin(), pos.end());
  uint64_t j = 0;
  for (uint64_t i = 0; i < n; ++i) {
    if (sampled.count(i)) continue;
    CHECK(est.a.bits.get(j) == a.bits.get(i));
    CHECK(est.b.bits.get(j) == b.bits.get(i));
    ++j;
  }
  // Every planted error either got sampled or survives in the remainder.
  uint64_t surviving = 0;
  for (uint64_t i = 0; i < est.a.bits.size(); ++i)
    surviving += est.a.bits.get(i) != est.b.bits.get(i);
  CHECK(surviving + mism == wrong.size());
}

TEST_CASE("qber estimation edge cases") {
  KeyMaterial a = random_key(50, 1);
  KeyMaterial b = a;
  QberEstimate est = estimate_qber(a, b, 0.0, 1);
  CHECK(est.sampled == 0);
  CHECK(est.estimate == 0.0);
  CHECK(est.a.bits.size() == 50);

  CHECK_THROWS_AS(estimate_qber(a, b, 1.0, 1), Error);
  CHECK_THROWS_AS(estimate_qber(a, b, -0.1, 1), Error);
  KeyMaterial c = random_key(49, 2);
  CHECK_THROWS_AS(estimate_qber(a, c, 0.1, 1), Error);
}

TEST_CASE("verification accepts equal keys and catches any single difference") {
  KeyMaterial a = random_key(333, 14);
  for (uint64_t seed = 0; seed < 50; ++seed) CHECK(verify(a, a, seed));

  SessionRng rng(15);
  for (int trial = 0; trial < 2000; ++trial) {
    KeyMaterial b = a;
    b.bits.flip(rng.below(a.bits.size()));
    CHECK_FALSE(verify(a, b, rng.next_u64()));
  }

  KeyMaterial empty;
  CHECK(verify_hash(empty, 123) == 0);
  CHECK(verify(empty, empty, 123));
}

TEST_CASE("final length arithmetic") {
  CHECK(final_length(1000, 0.5, 100, 28) == 372);
  CHECK(final_length(1000, 0.5, 500, 28) == 0);   // clamps at zero
  CHECK(final_length(1000, 1.0, 0, 0) == 1000);   // never exceeds n
  CHECK(final_length(0, 0.5, 0, 0) == 0);
  CHECK(final_length(10, 0.0, 0, 0) == 0);
  CHECK(final_length(1001, 0.5, 0, 0) == 500);    // floor before subtraction
  CHECK_THROWS_AS(final_length(10, 1.5, 0, 0), Error);
  CHECK_THROWS_AS(final_length(10, -0.1, 0, 0), Error);
}

TEST_CASE("privacy amplification compresses deterministically") {
  KeyMaterial k = random_key(512, 77);
  k.leakage_bits = 99;
  KeyMaterial out1 = privacy_amplify(k, 200, 4040);
  KeyMaterial out2 = privacy_amplify(k, 200, 4040);
  CHECK(out1.bits == out2.bits);
  CHECK(out1.bits.size() == 200);
  CHECK(out1.stage == KeyStage::final);
  CHECK(out1.leakage_bits == 99);

  KeyMaterial out3 = privacy_amplify(k, 200, 4041);
  CHECK(out3.bits != out1.bits);

  CHECK(privacy_amplify(k, 0, 1).bits.size() == 0);
  CHECK_THROWS_AS(privacy_amplify(k, 513, 1), Error);
}

TEST_CASE("privacy amplification with an identity matrix is a copy") {
  KeyMaterial k = random_key(100, 3);
  BitVector diag;  // n + m - 1 = 199 bits, single 1 at n-1 puts 1s on T's diagonal
  for (int i = 0; i < 199; ++i) diag.push_back(i == 99);
  KeyMaterial out = privacy_amplify_with(k, 100, diag);
  CHECK(out.bits == k.bits);
}

TEST_CASE("every classical stage draws a distinct deterministic seed") {
  ClassicalSeeds s1 = derive_classical_seeds(42);
  ClassicalSeeds s2 = derive_classical_seeds(42);
  CHECK(s1.classical == s2.classical);
  CHECK(s1.sample == s2.sample);
  CHECK(s1.pa == s2.pa);

  ClassicalSeeds s3 = seeds_from_classical(s1.classical);
  CHECK(s3.sample == s1.sample);
  CHECK(s3.cascade == s1.cascade);
  CHECK(s3.verify == s1.verify);
  CHECK(s3.pa == s1.pa);

  std::set<uint64_t> all{s1.classical, s1.sample, s1.cascade, s1.verify, s1.pa};
  CHECK(all.size() == 5);
  CHECK(derive_classical_seeds(43).classical != s1.classical);
}

TEST_CASE("full distillation of a simulated session produces a shared secret") {
  ExperimentConfig cfg = reference_config();
  auto [rec, log] = simulate_session(cfg, 424242, 2000000);
  DistillOutcome out = run_distillation(cfg, rec, log, {});

  const DistillSummary& s = out.summary;
  CHECK(s.sifted_bits == log.events.size());
  CHECK(s.sampled_bits == s.sifted_bits / 10);
  CHECK(s.corrected_bits == s.sifted_bits - s.sampled_bits);
  CHECK(s.qber_estimate < 0.05);
  CHECK(s.leakage_bits == s.reconcile_parities + 64);
  CHECK(s.tau > 0.4);
  CHECK(s.tau < 0.5);
  CHECK(s.final_bits ==
        final_length(s.corrected_bits, s.tau, s.leakage_bits, cfg.protocol.pa_margin_bits));
  CHECK(s.verified);
  CHECK(s.final_bits > 600);

  CHECK(out.transcript.converged);
  CHECK(out.sender_key.bits == out.receiver_key.bits);
  CHECK(out.sender_key.bits.size() == s.final_bits);
  CHECK(out.sender_key.stage == KeyStage::final);
  CHECK(out.sender_key.leakage_bits == s.leakage_bits);

  // Determinism all the way through.
  DistillOutcome again = run_distillation(cfg, rec, log, {});
  CHECK(again.sender_key.bits == out.sender_key.bits);
  CHECK(again.summary.reconcile_parities == s.reconcile_parities);
}

TEST_CASE("verification failure yields no key and zero final bits") {
  // Hand-built session small enough that the first reconciliation pass is a
  // single block: two planted errors cancel in every parity, reconciliation
  // converges with the keys still different, and only the hash objects.
  SenderRecord rec;
  rec.session_id = 9999;
  rec.seed = 777;
  SessionRng rng(55);
  for (int i = 0; i < 200; ++i) rec.phases.push_back(rng.bit());

  DetectionLog log;
  log.session_id = 9999;
  log.slot_count = 200;
  for (uint64_t s = 1; s <= 150; ++s) {
    uint8_t det = rec.phases.get(s) != rec.phases.get(s - 1) ? 1 : 0;
    log.events.push_back({s, det, 0.0});
  }

  // Corrupt two events whose sifted positions escape the disclosed sample.
  ClassicalSeeds seeds = derive_classical_seeds(rec.seed);
  auto pos = sample_positions(150, 15, seeds.sample);
  std::set<uint64_t> sampled(pos.begin(), pos.end());
  std::vector<uint64_t> targets;
  for (uint64_t i = 0; i < 150 && targets.size() < 2; ++i)
    if (!sampled.count(i)) targets.push_back(i);
  for (uint64_t t : targets) log.events[t].detector_id ^= 1;

  DistillOutcome out = run_distillation(reference_config(), rec, log, {});
  CHECK(out.summary.sampled_bits == 15);
  CHECK(out.summary.sample_mismatches == 0);
  CHECK(out.summary.qber_hint == 0.005);
  CHECK(out.summary.corrected_bits == 135);
  CHECK(out.summary.reconcile_parities == 1);
  CHECK(out.transcript.converged);
  CHECK_FALSE(out.summary.verified);
  CHECK(out.summary.final_bits == 0);
  CHECK(out.summary.leakage_bits == 65);
  CHECK(out.sender_key.bits.size() == 0);
  CHECK(out.receiver_key.bits.size() == 0);
}

TEST_CASE("two-party session over a loopback matches the in-process pipeline") {
  ExperimentConfig cfg = reference_config();
  const uint64_t seed = 31337;
  const uint64_t slots = 500000;

  auto [rec, log] = simulate_session(cfg, seed, slots);
  DistillOutcome local = run_distillation(cfg, rec, log, {});
  RunReport local_report = build_run_report(cfg, seed, slots, log, local.summary);

  auto [end_a, end_b] = loopback_pair();
  SessionArtifacts sender_art, receiver_art;
  std::exception_ptr receiver_error;
  std::thread receiver([&] {
    try {
      receiver_art = run_session_receiver(cfg, *end_b);
    } catch (...) {
      receiver_error = std::current_exception();
    }
  });
  sender_art = run_session_sender(cfg, seed, slots, {}, *end_a);
  receiver.join();
  REQUIRE_FALSE(static_cast<bool>(receiver_error));

  // Both roles and the in-process pipeline agree byte for byte.
  std::string local_json = run_report_json(local_report);
  CHECK(run_report_json(sender_art.report) == local_json);
  CHECK(run_report_json(receiver_art.report) == local_json);
  CHECK(transcript_text(sender_art.transcript) == transcript_text(local.transcript));
  CHECK(transcript_text(receiver_art.transcript) == transcript_text(local.transcript));
  CHECK(sender_art.final_key.bits == local.sender_key.bits);
  CHECK(receiver_art.final_key.bits == local.sender_key.bits);
  CHECK(sender_art.final_key.bits.size() == local.summary.final_bits);
}
