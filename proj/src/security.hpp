#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "params.hpp"

namespace dpsq {

// Adversarial collision probability contributed by one sifted bit at error
// rate e: 1 - e^2 - (1-6e)^2 / 2, clamped to [0, 1].
double collision_prob_single(double e);

// log2 of the n-bit collision probability, n * (1 - 2*mu) * log2(p_c0).
// Exposed separately because the plain value underflows for laboratory n.
double collision_prob_n_log2(double e, double mu, uint64_t n);
double collision_prob_n(double e, double mu, uint64_t n);

// Privacy-amplification shrink factor tau = -(1-2mu) * log2(p_c0), clamped
// to [0, 1]. Independent of n by construction.
double compression_factor(double e, double mu);

double binary_entropy(double e);

// nu * mu * T * eta, with the detector duty cycle exp(-rate * t_d / 2)
// applied on top (paralyzable dead time, two detectors sharing the rate).
double sifted_rate(const ExperimentConfig& cfg);

// (e_base * p_signal + 0.5 * p_dark) / (p_signal + p_dark)
double qber_model(const ExperimentConfig& cfg);

struct SecureRateResult {
  double rate_hz = 0.0;
  bool secure = false;
};

// R_sift * max(0, tau - f * h2(e)); secure=false when the bracket is <= 0.
SecureRateResult secure_rate(double sifted_rate_hz, double e, double mu, double f);

// Smallest e > 0 where tau(e) - f * h2(e) hits zero, found by coarse scan
// plus bisection; absolute tolerance 1e-6.
double security_threshold(double mu, double f);

// Eavesdropper information bound under photon-number splitting: 2 * mu.
double pns_info_bound(double mu);

// Unambiguous-state-discrimination success probability: 1 - exp(-2 * mu).
double usd_success_prob(double mu);

struct RatePoint {
  double distance_km = 0.0;
  double sifted_rate_hz = 0.0;
  double qber = 0.0;
  double tau = 0.0;
  double secure_rate_hz = 0.0;
  double usd_success_prob = 0.0;  // distance-independent, repeated per row
  bool secure = false;
};

RatePoint analyze_point(const ExperimentConfig& cfg);

struct SweepTable {
  std::vector<RatePoint> points;
  std::string config_digest;
};

SweepTable sweep_distance(const ExperimentConfig& cfg, double from_km, double to_km,
                          double step_km);

}  // namespace dpsq
