#include "sim.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "rng.hpp"

namespace dpsq {

namespace {

struct DetectorDraw {
  double p_click = 0.0;  // signal click probability given routing to this arm
  double p_dark = 0.0;
  double sigma = 0.0;
  double half_window = 0.0;
};

DetectorDraw make_draw(const DetectorModel& det, double mu_at_receiver) {
  DetectorDraw d;
  d.p_click = 1.0 - std::exp(-mu_at_receiver * effective_efficiency(det));
  d.p_dark = std::min(1.0, dark_count_per_window(det));
  d.sigma = det.jitter_fwtm_s / (2.0 * std::sqrt(2.0 * std::log(10.0)));
  d.half_window = det.window_s / 2.0;
  return d;
}

}  // namespace

std::pair<SenderRecord, DetectionLog> simulate_session(const ExperimentConfig& cfg,
                                                       uint64_t seed, uint64_t n_slots) {
  validate_config(cfg);

  SenderRecord rec;
  rec.seed = seed;
  rec.session_id = splitmix64(seed);
  rec.phases = BitVector(n_slots);

  // Independent streams so the phase pattern is stable under detector
  // parameter changes and vice versa.
  SessionRng phase_rng(derive_seed(seed, 0x7068617365ull));  // "phase"
  SessionRng det_rng(derive_seed(seed, 0x646574656374ull));  // "detect"

  for (uint64_t w = 0; w * 64 < n_slots; ++w) {
    uint64_t word = phase_rng.next_u64();
    for (uint64_t b = 0; b < 64 && w * 64 + b < n_slots; ++b)
      if ((word >> b) & 1) rec.phases.set(w * 64 + b, true);
  }

  double mu_rx = cfg.source.mean_photon_number * channel_transmittance(cfg.channel);
  DetectorDraw draw[2] = {make_draw(cfg.detector[0], mu_rx), make_draw(cfg.detector[1], mu_rx)};
  double e_base = cfg.protocol.baseline_error;

  // Candidate clicks before dead time; merged per slot afterwards.
  std::vector<DetectionEvent> candidates;

  for (uint64_t i = 1; i < n_slots; ++i) {
    // Fixed draw order per slot keeps the stream reproducible: routing
    // uniform, two dark uniforms, then offsets only for actual clicks.
    double u_sig = det_rng.uniform01();
    double u_dark0 = det_rng.uniform01();
    double u_dark1 = det_rng.uniform01();

    int route = rec.phases.get(i) ^ rec.phases.get(i - 1);
    // One uniform covers both arms: the photon exits the correct port with
    // probability 1-e_base and the wrong one with e_base, then clicks with
    // that arm's efficiency.
    double a = (1.0 - e_base) * draw[route].p_click;
    double b = a + e_base * draw[route ^ 1].p_click;
    int sig_det = -1;
    if (u_sig < a)
      sig_det = route;
    else if (u_sig < b)
      sig_det = route ^ 1;

    bool dark[2] = {u_dark0 < draw[0].p_dark, u_dark1 < draw[1].p_dark};

    for (int d = 0; d < 2; ++d) {
      bool is_signal = sig_det == d;
      if (!is_signal && !dark[d]) continue;
      DetectionEvent ev;
      ev.slot_index = i;
      ev.detector_id = static_cast<uint8_t>(d);
      // Signal arrivals are jitter-shaped; pure dark counts are flat across
      // the window.
      ev.time_offset_s = is_signal
                             ? det_rng.truncated_normal(draw[d].sigma, draw[d].half_window)
                             : det_rng.uniform(-draw[d].half_window, draw[d].half_window);
      candidates.push_back(ev);
    }
  }

  std::vector<DetectionEvent> survivors = apply_dead_time(
      candidates, cfg.detector[0].dead_time_s, cfg.source.pulse_interval_s(), cfg.dead_time_mode);

  DetectionLog log;
  log.session_id = rec.session_id;
  log.slot_count = n_slots;
  // At most one logged event per slot: keep the earliest arrival, detector 0
  // breaking exact ties.
  for (size_t k = 0; k < survivors.size();) {
    size_t j = k + 1;
    while (j < survivors.size() && survivors[j].slot_index == survivors[k].slot_index) ++j;
    size_t best = k;
    for (size_t t = k + 1; t < j; ++t) {
      if (survivors[t].time_offset_s < survivors[best].time_offset_s ||
          (survivors[t].time_offset_s == survivors[best].time_offset_s &&
           survivors[t].detector_id < survivors[best].detector_id))
        best = t;
    }
    log.events.push_back(survivors[best]);
    k = j;
  }
  return {std::move(rec), std::move(log)};
}

std::vector<DetectionEvent> apply_dead_time(const std::vector<DetectionEvent>& events,
                                            double dead_time_s, double pulse_interval_s,
                                            DeadTimeMode mode) {
  if (dead_time_s < 0.0) fail(Errc::domain, "dead time must be >= 0");
  if (!(pulse_interval_s > 0.0)) fail(Errc::domain, "pulse interval must be > 0");
  for (size_t i = 1; i < events.size(); ++i)
    if (events[i].slot_index < events[i - 1].slot_index)
      fail(Errc::unsorted_input, "event stream must be sorted by slot index");
  if (dead_time_s == 0.0) return events;

  std::vector<DetectionEvent> out;
  out.reserve(events.size());
  // last[scope] = wall time of the most recent *arrival*, retained or not:
  // paralyzable detectors extend their blanking on every hit.
  double last[2];
  bool seen[2] = {false, false};
  for (const DetectionEvent& ev : events) {
    int scope = mode == DeadTimeMode::system ? 0 : ev.detector_id;
    double wall = static_cast<double>(ev.slot_index) * pulse_interval_s;
    bool keep = !seen[scope] || (wall - last[scope]) > dead_time_s;
    last[scope] = wall;
    seen[scope] = true;
    if (keep) out.push_back(ev);
  }
  return out;
}

EmpiricalRates empirical_rates(const SenderRecord& record, const DetectionLog& log,
                               const ExperimentConfig& cfg) {
  if (record.session_id != log.session_id)
    fail(Errc::session_mismatch, "sender record and detection log disagree on session id");
  EmpiricalRates r;
  r.events = log.events.size();
  for (const DetectionEvent& ev : log.events) {
    if (ev.slot_index == 0 || ev.slot_index >= record.phases.size())
      fail(Errc::slot_out_of_range, "event slot index outside the simulated range");
    int sent = record.phases.get(ev.slot_index) ^ record.phases.get(ev.slot_index - 1);
    if (sent != ev.detector_id) ++r.mismatches;
  }
  if (log.slot_count > 0)
    r.sifted_rate_hz = static_cast<double>(r.events) * cfg.source.clock_rate_hz /
                       static_cast<double>(log.slot_count);
  if (r.events > 0) r.qber = static_cast<double>(r.mismatches) / static_cast<double>(r.events);
  return r;
}

}  // namespace dpsq
