#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <span>
#include <vector>

namespace dpsq {

struct CascadeOptions {
  double qber_hint = 0.05;
  uint64_t seed = 0;
  uint32_t scheduled_passes = 4;   // block size doubles through these
  uint32_t max_total_passes = 16;  // hard cap before giving up
};

struct CascadeRound {
  uint32_t pass = 0;
  uint64_t block_size = 0;
  uint64_t blocks = 0;
  uint64_t parities = 0;
  uint64_t flips = 0;
};

struct ReconciliationTranscript {
  std::vector<CascadeRound> rounds;
  std::vector<uint64_t> flip_positions;  // chronological, absolute key positions
  uint64_t total_parities = 0;           // == leaked bits (one per compared parity)
  bool converged = false;
};

// Interactive binary-search reconciliation, replicated on both sides of a
// session. The engine never touches key bits: it emits parity queries over
// position sets, consumes the two parity answers, and reports which
// positions the holder of key B must flip. Both replicas therefore walk an
// identical query sequence given identical answers, which is what keeps the
// two-process mode in lockstep.
//
// Shape: passes over seeded shuffles with doubling block sizes; a parity
// mismatch is resolved by bisection (left-half queries only), and every
// resolved flip re-queues the enclosing block of every other executed pass.
// Runs until a whole pass discloses no mismatch, or fails after
// max_total_passes.
class CascadeEngine {
 public:
  struct Query {
    uint32_t pass = 0;   // 1-based
    uint64_t lo = 0;     // range [lo, hi) within that pass's permutation
    uint64_t hi = 0;
  };

  CascadeEngine(uint64_t key_bits, const CascadeOptions& opts);

  // Next parity query, or nullopt once finished (check failed()).
  // Idempotent until advance() consumes the outstanding query.
  std::optional<Query> next_query();

  // Absolute key positions covered by a query.
  std::span<const uint64_t> positions(const Query& q) const;

  // Feed the two parity answers for the outstanding query. Flips implied by
  // the answers are appended to the pending-flip list; the caller must apply
  // them to key B before answering the next query.
  void advance(bool parity_a, bool parity_b);

  std::vector<uint64_t> take_flips();

  bool finished() const { return done_; }
  bool failed() const { return failed_; }
  const ReconciliationTranscript& transcript() const { return transcript_; }

 private:
  struct Item {
    uint32_t pass;
    uint64_t block;
  };
  struct Bisect {
    uint32_t pass;
    uint64_t lo, hi;  // current odd-parity range within the pass permutation
  };

  void start_pass();
  void close_round();
  void enqueue_check(uint32_t pass, uint64_t block);
  void record_flip(uint32_t origin_pass, uint64_t abs_pos);
  uint64_t block_count(uint32_t pass) const;

  uint64_t n_;
  CascadeOptions opts_;
  std::vector<std::vector<uint64_t>> perms_;  // perms_[p-1]
  std::vector<std::vector<uint64_t>> inv_;    // abs position -> index in perm
  std::vector<uint64_t> block_size_;          // block_size_[p-1]

  std::deque<Item> queue_;
  std::set<std::pair<uint32_t, uint64_t>> queued_;
  std::optional<Bisect> active_;
  std::optional<Query> current_;
  bool current_is_check_ = false;

  uint32_t passes_run_ = 0;
  bool pass_dirty_ = false;
  uint64_t round_parities_ = 0;
  uint64_t round_flips_ = 0;

  bool done_ = false;
  bool failed_ = false;
  std::vector<uint64_t> flips_pending_;
  ReconciliationTranscript transcript_;
};

}  // namespace dpsq
