#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bits.hpp"
#include "params.hpp"

namespace dpsq {

// Sender-side record of one simulated session: the random phase bit of every
// pulse (0 -> phase 0, 1 -> phase pi).
struct SenderRecord {
  uint64_t session_id = 0;
  uint64_t seed = 0;
  BitVector phases;  // one bit per slot
};

struct DetectionEvent {
  uint64_t slot_index = 0;   // interferometer output for slots (i-1, i); never 0
  uint8_t detector_id = 0;   // 0: phase difference 0, 1: phase difference pi
  double time_offset_s = 0;  // arrival relative to slot center
};

struct DetectionLog {
  uint64_t session_id = 0;
  uint64_t slot_count = 0;
  std::vector<DetectionEvent> events;  // slot-sorted, at most one per slot
};

// Slot-level Monte Carlo pass over n_slots pulses. Deterministic in
// (cfg, seed): identical inputs reproduce the identical event list.
std::pair<SenderRecord, DetectionLog> simulate_session(const ExperimentConfig& cfg,
                                                       uint64_t seed, uint64_t n_slots);

// Paralyzable dead-time pruning over a slot-sorted event stream (several
// events per slot allowed). Every arrival restarts the blanking interval of
// its detector (or of the whole receiver in system mode); an event survives
// only if the gap since the previous arrival on that scope exceeds t_d.
// Wall time of an event is slot_index * pulse_interval_s. t_d == 0 is a
// no-op. Throws Errc::unsorted_input if slot indices decrease.
std::vector<DetectionEvent> apply_dead_time(const std::vector<DetectionEvent>& events,
                                            double dead_time_s, double pulse_interval_s,
                                            DeadTimeMode mode);

struct EmpiricalRates {
  uint64_t events = 0;
  uint64_t mismatches = 0;
  double sifted_rate_hz = 0.0;
  double qber = 0.0;
};

// Compares detector outcomes against the sender's phase differences.
// Throws Errc::session_mismatch when the inputs are from different sessions.
EmpiricalRates empirical_rates(const SenderRecord& record, const DetectionLog& log,
                               const ExperimentConfig& cfg);

}  // namespace dpsq
