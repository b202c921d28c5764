#include "security.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace dpsq {

namespace {

void check_error_rate(double e) {
  if (!(e >= 0.0 && e <= 0.5)) fail(Errc::domain, "error rate must be in [0, 0.5]");
}

void check_mu(double mu) {
  if (!(mu >= 0.0 && mu < 0.5)) fail(Errc::domain, "mean photon number must be in [0, 0.5)");
}

}  // namespace

double collision_prob_single(double e) {
  check_error_rate(e);
  double one_minus_6e = 1.0 - 6.0 * e;
  double p = 1.0 - e * e - 0.5 * one_minus_6e * one_minus_6e;
  return std::clamp(p, 0.0, 1.0);
}

double collision_prob_n_log2(double e, double mu, uint64_t n) {
  check_mu(mu);
  double p = collision_prob_single(e);
  // log2(0) = -inf propagates to the right limits in both callers.
  return static_cast<double>(n) * (1.0 - 2.0 * mu) * std::log2(p);
}

double collision_prob_n(double e, double mu, uint64_t n) {
  return std::exp2(collision_prob_n_log2(e, mu, n));
}

double compression_factor(double e, double mu) {
  double t = -collision_prob_n_log2(e, mu, 1);
  return std::clamp(t, 0.0, 1.0);
}

double binary_entropy(double e) {
  check_error_rate(e);
  if (e == 0.0 || e == 1.0) return 0.0;
  return -e * std::log2(e) - (1.0 - e) * std::log2(1.0 - e);
}

double sifted_rate(const ExperimentConfig& cfg) {
  double raw = cfg.source.clock_rate_hz * cfg.source.mean_photon_number *
               channel_transmittance(cfg.channel) * mean_effective_efficiency(cfg);
  // Each detector sees half the raw rate; paralyzable dead time retains
  // exp(-rate * t_d) of arrivals on each.
  return raw * std::exp(-raw * cfg.detector[0].dead_time_s / 2.0);
}

double qber_model(const ExperimentConfig& cfg) {
  double p_signal = cfg.source.mean_photon_number * channel_transmittance(cfg.channel) *
                    mean_effective_efficiency(cfg);
  double p_dark =
      dark_count_per_window(cfg.detector[0]) + dark_count_per_window(cfg.detector[1]);
  double denom = p_signal + p_dark;
  if (denom <= 0.0) return cfg.protocol.baseline_error;
  return (cfg.protocol.baseline_error * p_signal + 0.5 * p_dark) / denom;
}

SecureRateResult secure_rate(double sifted_rate_hz, double e, double mu, double f) {
  if (sifted_rate_hz < 0.0) fail(Errc::domain, "sifted rate must be >= 0");
  if (f < 1.0) fail(Errc::domain, "reconciliation inefficiency must be >= 1");
  double bracket = compression_factor(e, mu) - f * binary_entropy(e);
  SecureRateResult r;
  r.secure = bracket > 0.0;
  r.rate_hz = sifted_rate_hz * std::max(0.0, bracket);
  return r;
}

double security_threshold(double mu, double f) {
  check_mu(mu);
  if (f < 1.0) fail(Errc::domain, "reconciliation inefficiency must be >= 1");
  auto g = [&](double e) { return compression_factor(e, mu) - f * binary_entropy(e); };

  double lo = 1e-9;
  if (g(lo) <= 0.0) fail(Errc::no_root, "no positive-rate region near e = 0");
  double hi = 0.0;
  bool bracketed = false;
  for (double e = 0.005; e <= 0.5 + 1e-12; e += 0.005) {
    double x = std::min(e, 0.5);
    if (g(x) <= 0.0) {
      hi = x;
      bracketed = true;
      break;
    }
    lo = x;
  }
  if (!bracketed) fail(Errc::no_root, "rate bracket never crosses zero on (0, 0.5]");

  while (hi - lo > 1e-6) {
    double mid = 0.5 * (lo + hi);
    if (g(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double pns_info_bound(double mu) {
  check_mu(mu);
  return 2.0 * mu;
}

double usd_success_prob(double mu) {
  check_mu(mu);
  return 1.0 - std::exp(-2.0 * mu);
}

RatePoint analyze_point(const ExperimentConfig& cfg) {
  RatePoint p;
  p.distance_km = cfg.channel.length_km;
  p.sifted_rate_hz = sifted_rate(cfg);
  p.qber = qber_model(cfg);
  p.tau = compression_factor(p.qber, cfg.source.mean_photon_number);
  SecureRateResult s = secure_rate(p.sifted_rate_hz, p.qber, cfg.source.mean_photon_number,
                                   cfg.protocol.ec_inefficiency);
  p.secure_rate_hz = s.rate_hz;
  p.usd_success_prob = usd_success_prob(cfg.source.mean_photon_number);
  p.secure = s.secure;
  return p;
}

SweepTable sweep_distance(const ExperimentConfig& cfg, double from_km, double to_km,
                          double step_km) {
  if (!(step_km > 0.0)) fail(Errc::domain, "sweep step must be > 0");
  if (!(from_km >= 0.0 && from_km <= to_km))
    fail(Errc::domain, "sweep range must satisfy 0 <= from <= to");
  SweepTable table;
  table.config_digest = config_digest(cfg);
  // Half-step slack so to_km itself survives accumulated rounding.
  size_t count = static_cast<size_t>((to_km - from_km) / step_km + 0.5) + 1;
  for (size_t i = 0; i < count; ++i) {
    double L = from_km + static_cast<double>(i) * step_km;
    if (L > to_km + step_km * 1e-9) break;
    ExperimentConfig local = cfg;
    local.channel.length_km = L;
    table.points.push_back(analyze_point(local));
  }
  return table;
}

}  // namespace dpsq
