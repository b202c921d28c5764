#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace dpsq {

struct SourceParams {
  double clock_rate_hz = 0.0;
  double mean_photon_number = 0.0;

  double pulse_interval_s() const { return 1.0 / clock_rate_hz; }
};

struct ChannelModel {
  double length_km = 0.0;
  double attenuation_db_per_km = 0.0;
  double excess_loss_db = 0.0;
};

struct DetectorModel {
  double quantum_efficiency = 0.0;
  double dark_rate_hz = 0.0;
  double dead_time_s = 0.0;
  double jitter_fwtm_s = 0.0;
  double window_s = 0.0;
  std::optional<double> window_acceptance_override;
};

// Dead time either blanks each detector independently or the whole receiver.
enum class DeadTimeMode { per_detector, system };

struct ProtocolParams {
  double baseline_error = 0.0;
  double ec_inefficiency = 1.0;
  uint64_t pa_margin_bits = 0;
};

struct ExperimentConfig {
  SourceParams source;
  ChannelModel channel;
  DetectorModel detector[2];
  ProtocolParams protocol;
  DeadTimeMode dead_time_mode = DeadTimeMode::per_detector;
};

// Flat key=value text, '#' comments, every required key exactly once.
// Throws Errc::io / parse / missing_key / invariant with the offending key
// named in the message.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

// Canonical round-trippable form: fixed key order, shortest digits that
// reparse to the same doubles. Also the preimage of config_digest().
std::string serialize_config(const ExperimentConfig& cfg);
std::string config_digest(const ExperimentConfig& cfg);

void validate_config(const ExperimentConfig& cfg);

// 10^-(a*L + excess)/10
double channel_transmittance(const ChannelModel& ch);

// Expected dark counts inside one gate window (probability for small values).
double dark_count_per_window(const DetectorModel& det);

// Fraction of a jittered signal landing inside the window. Gaussian response
// with sigma = FWTM / (2 sqrt(2 ln 10)); override short-circuits the model.
double window_acceptance(const DetectorModel& det);

// quantum_efficiency * window_acceptance
double effective_efficiency(const DetectorModel& det);

double mean_effective_efficiency(const ExperimentConfig& cfg);

}  // namespace dpsq
