#include "cascade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "rng.hpp"

namespace dpsq {

CascadeEngine::CascadeEngine(uint64_t key_bits, const CascadeOptions& opts)
    : n_(key_bits), opts_(opts) {
  if (!(opts_.qber_hint > 0.0 && opts_.qber_hint < 0.5))
    fail(Errc::domain, "qber hint must be in (0, 0.5)");
  if (opts_.scheduled_passes == 0 || opts_.max_total_passes < opts_.scheduled_passes)
    fail(Errc::domain, "pass limits must satisfy 1 <= scheduled <= max");
  if (n_ == 0) {
    done_ = true;
    transcript_.converged = true;  // nothing to reconcile
  }
}

uint64_t CascadeEngine::block_count(uint32_t pass) const {
  uint64_t k = block_size_[pass - 1];
  return (n_ + k - 1) / k;
}

void CascadeEngine::start_pass() {
  ++passes_run_;
  uint64_t k;
  if (passes_run_ == 1) {
    // Classic initial size ~= 0.73 / expected error rate.
    double raw = std::ceil(0.73 / opts_.qber_hint);
    k = raw >= static_cast<double>(n_) ? n_ : std::max<uint64_t>(2, static_cast<uint64_t>(raw));
  } else {
    uint32_t doubled = std::min(passes_run_, opts_.scheduled_passes);
    k = std::min<uint64_t>(block_size_[0] << (doubled - 1), n_);
  }
  k = std::min<uint64_t>(std::max<uint64_t>(k, 1), n_);
  block_size_.push_back(k);

  std::vector<uint64_t> perm(n_);
  std::iota(perm.begin(), perm.end(), 0);
  SessionRng rng(derive_seed(opts_.seed, passes_run_));
  for (uint64_t i = n_ - 1; i > 0; --i) {
    uint64_t j = rng.below(i + 1);
    std::swap(perm[i], perm[j]);
  }
  std::vector<uint64_t> inv(n_);
  for (uint64_t i = 0; i < n_; ++i) inv[perm[i]] = i;
  perms_.push_back(std::move(perm));
  inv_.push_back(std::move(inv));

  pass_dirty_ = false;
  round_parities_ = 0;
  round_flips_ = 0;
  for (uint64_t b = 0; b < block_count(passes_run_); ++b) enqueue_check(passes_run_, b);
}

void CascadeEngine::close_round() {
  transcript_.rounds.push_back(
      {passes_run_, block_size_[passes_run_ - 1], block_count(passes_run_), round_parities_,
       round_flips_});
}

void CascadeEngine::enqueue_check(uint32_t pass, uint64_t block) {
  if (queued_.insert({pass, block}).second) queue_.push_back({pass, block});
}

void CascadeEngine::record_flip(uint32_t origin_pass, uint64_t abs_pos) {
  flips_pending_.push_back(abs_pos);
  transcript_.flip_positions.push_back(abs_pos);
  ++round_flips_;
  // The flip toggles the parity of the enclosing block in every other
  // executed pass; those blocks must be re-checked (cascade step).
  for (uint32_t p = 1; p <= passes_run_; ++p) {
    if (p == origin_pass) continue;
    enqueue_check(p, inv_[p - 1][abs_pos] / block_size_[p - 1]);
  }
}

std::optional<CascadeEngine::Query> CascadeEngine::next_query() {
  if (current_) return current_;
  while (!done_) {
    if (active_) {
      uint64_t mid = active_->lo + (active_->hi - active_->lo) / 2;
      current_ = Query{active_->pass, active_->lo, mid};
      current_is_check_ = false;
      return current_;
    }
    if (!queue_.empty()) {
      Item it = queue_.front();
      queue_.pop_front();
      queued_.erase({it.pass, it.block});
      uint64_t k = block_size_[it.pass - 1];
      uint64_t lo = it.block * k;
      uint64_t hi = std::min(lo + k, n_);
      current_ = Query{it.pass, lo, hi};
      current_is_check_ = true;
      return current_;
    }
    // Pass drained.
    if (passes_run_ > 0) {
      close_round();
      if (!pass_dirty_) {
        done_ = true;
        transcript_.converged = true;
        break;
      }
      if (passes_run_ >= opts_.max_total_passes) {
        done_ = true;
        failed_ = true;
        break;
      }
    }
    start_pass();
  }
  return std::nullopt;
}

std::span<const uint64_t> CascadeEngine::positions(const Query& q) const {
  const auto& perm = perms_[q.pass - 1];
  return std::span<const uint64_t>(perm).subspan(q.lo, q.hi - q.lo);
}

void CascadeEngine::advance(bool parity_a, bool parity_b) {
  if (!current_) fail(Errc::state, "advance without an outstanding query");
  bool mismatch = parity_a != parity_b;
  ++transcript_.total_parities;
  ++round_parities_;
  Query q = *current_;
  current_.reset();

  if (current_is_check_) {
    if (!mismatch) return;
    pass_dirty_ = true;
    if (q.hi - q.lo == 1) {
      record_flip(q.pass, perms_[q.pass - 1][q.lo]);
    } else {
      active_ = Bisect{q.pass, q.lo, q.hi};
    }
    return;
  }

  // Bisection step: the query covered the left half [lo, mid). A mismatch
  // puts the odd error inside it, otherwise it is in the right half.
  if (mismatch)
    active_->hi = q.hi;
  else
    active_->lo = q.hi;
  if (active_->hi - active_->lo == 1) {
    uint32_t pass = active_->pass;
    uint64_t pos = perms_[pass - 1][active_->lo];
    active_.reset();
    record_flip(pass, pos);
  }
}

std::vector<uint64_t> CascadeEngine::take_flips() {
  std::vector<uint64_t> out;
  out.swap(flips_pending_);
  return out;
}

}  // namespace dpsq
