#include "params.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "digest.hpp"
#include "errors.hpp"

namespace dpsq {

namespace {

constexpr const char* kRequiredKeys[] = {
    "clock_rate_hz",  "mean_photon_number", "length_km",
    "attenuation_db_per_km", "excess_loss_db", "qe_det0",
    "qe_det1",        "dark_hz_det0",       "dark_hz_det1",
    "dead_time_s",    "jitter_fwtm_s",      "window_s",
    "baseline_error", "ec_inefficiency",    "pa_margin_bits",
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(const std::string& key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    fail(Errc::parse, key + ": cannot parse '" + std::string(v) + "' as a number");
  if (!std::isfinite(out)) fail(Errc::invariant, key + ": must be finite");
  return out;
}

uint64_t parse_u64(const std::string& key, std::string_view v) {
  if (!v.empty() && v.front() == '-')
    fail(Errc::invariant, key + ": must be a non-negative integer");
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    fail(Errc::parse, key + ": cannot parse '" + std::string(v) + "' as an integer");
  return out;
}

void require(bool ok, const std::string& key, const char* what) {
  if (!ok) fail(Errc::invariant, key + ": " + what);
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto eq = s.find('=');
    if (eq == std::string_view::npos)
      fail(Errc::parse, "line " + std::to_string(lineno) + ": expected key=value");
    std::string key(trim(s.substr(0, eq)));
    std::string val(trim(s.substr(eq + 1)));
    if (key.empty()) fail(Errc::parse, "line " + std::to_string(lineno) + ": empty key");
    if (val.empty()) fail(Errc::parse, key + ": empty value");
    if (!kv.emplace(key, val).second) fail(Errc::parse, key + ": duplicate key");
  }

  for (const char* k : kRequiredKeys)
    if (!kv.count(k)) fail(Errc::missing_key, std::string(k) + ": required key missing");

  for (const auto& [k, v] : kv) {
    (void)v;
    bool known = k == "window_acceptance_override" || k == "dead_time_mode";
    for (const char* r : kRequiredKeys) known = known || k == r;
    if (!known) fail(Errc::parse, k + ": unknown key");
  }

  ExperimentConfig cfg;
  cfg.source.clock_rate_hz = parse_double("clock_rate_hz", kv["clock_rate_hz"]);
  cfg.source.mean_photon_number = parse_double("mean_photon_number", kv["mean_photon_number"]);
  cfg.channel.length_km = parse_double("length_km", kv["length_km"]);
  cfg.channel.attenuation_db_per_km = parse_double("attenuation_db_per_km", kv["attenuation_db_per_km"]);
  cfg.channel.excess_loss_db = parse_double("excess_loss_db", kv["excess_loss_db"]);
  for (int d = 0; d < 2; ++d) {
    std::string suffix = d == 0 ? "det0" : "det1";
    cfg.detector[d].quantum_efficiency = parse_double("qe_" + suffix, kv["qe_" + suffix]);
    cfg.detector[d].dark_rate_hz = parse_double("dark_hz_" + suffix, kv["dark_hz_" + suffix]);
    cfg.detector[d].dead_time_s = parse_double("dead_time_s", kv["dead_time_s"]);
    cfg.detector[d].jitter_fwtm_s = parse_double("jitter_fwtm_s", kv["jitter_fwtm_s"]);
    cfg.detector[d].window_s = parse_double("window_s", kv["window_s"]);
  }
  if (kv.count("window_acceptance_override")) {
    double ov = parse_double("window_acceptance_override", kv["window_acceptance_override"]);
    cfg.detector[0].window_acceptance_override = ov;
    cfg.detector[1].window_acceptance_override = ov;
  }
  if (kv.count("dead_time_mode")) {
    const std::string& m = kv["dead_time_mode"];
    if (m == "per_detector")
      cfg.dead_time_mode = DeadTimeMode::per_detector;
    else if (m == "system")
      cfg.dead_time_mode = DeadTimeMode::system;
    else
      fail(Errc::parse, "dead_time_mode: expected 'per_detector' or 'system'");
  }
  cfg.protocol.baseline_error = parse_double("baseline_error", kv["baseline_error"]);
  cfg.protocol.ec_inefficiency = parse_double("ec_inefficiency", kv["ec_inefficiency"]);
  cfg.protocol.pa_margin_bits = parse_u64("pa_margin_bits", kv["pa_margin_bits"]);

  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::io, "cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void validate_config(const ExperimentConfig& cfg) {
  require(cfg.source.clock_rate_hz > 0.0, "clock_rate_hz", "must be > 0");
  require(cfg.source.mean_photon_number >= 0.0 && cfg.source.mean_photon_number < 0.5,
          "mean_photon_number", "must be in [0, 0.5)");
  require(cfg.channel.length_km >= 0.0, "length_km", "must be >= 0");
  require(cfg.channel.attenuation_db_per_km >= 0.0, "attenuation_db_per_km", "must be >= 0");
  require(cfg.channel.excess_loss_db >= 0.0, "excess_loss_db", "must be >= 0");
  for (int d = 0; d < 2; ++d) {
    std::string suffix = d == 0 ? "det0" : "det1";
    const DetectorModel& det = cfg.detector[d];
    require(det.quantum_efficiency >= 0.0 && det.quantum_efficiency <= 1.0, "qe_" + suffix,
            "must be in [0, 1]");
    require(det.dark_rate_hz >= 0.0, "dark_hz_" + suffix, "must be >= 0");
    require(det.dead_time_s >= 0.0, "dead_time_s", "must be >= 0");
    require(det.jitter_fwtm_s >= 0.0, "jitter_fwtm_s", "must be >= 0");
    require(det.window_s > 0.0, "window_s", "must be > 0");
    if (det.window_acceptance_override) {
      double ov = *det.window_acceptance_override;
      require(ov > 0.0 && ov <= 1.0, "window_acceptance_override", "must be in (0, 1]");
    }
  }
  require(cfg.protocol.baseline_error >= 0.0 && cfg.protocol.baseline_error < 0.5,
          "baseline_error", "must be in [0, 0.5)");
  require(cfg.protocol.ec_inefficiency >= 1.0, "ec_inefficiency", "must be >= 1");
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "clock_rate_hz = " << format_double(cfg.source.clock_rate_hz) << "\n";
  out << "mean_photon_number = " << format_double(cfg.source.mean_photon_number) << "\n";
  out << "length_km = " << format_double(cfg.channel.length_km) << "\n";
  out << "attenuation_db_per_km = " << format_double(cfg.channel.attenuation_db_per_km) << "\n";
  out << "excess_loss_db = " << format_double(cfg.channel.excess_loss_db) << "\n";
  out << "qe_det0 = " << format_double(cfg.detector[0].quantum_efficiency) << "\n";
  out << "qe_det1 = " << format_double(cfg.detector[1].quantum_efficiency) << "\n";
  out << "dark_hz_det0 = " << format_double(cfg.detector[0].dark_rate_hz) << "\n";
  out << "dark_hz_det1 = " << format_double(cfg.detector[1].dark_rate_hz) << "\n";
  out << "dead_time_s = " << format_double(cfg.detector[0].dead_time_s) << "\n";
  out << "jitter_fwtm_s = " << format_double(cfg.detector[0].jitter_fwtm_s) << "\n";
  out << "window_s = " << format_double(cfg.detector[0].window_s) << "\n";
  if (cfg.detector[0].window_acceptance_override)
    out << "window_acceptance_override = "
        << format_double(*cfg.detector[0].window_acceptance_override) << "\n";
  out << "dead_time_mode = "
      << (cfg.dead_time_mode == DeadTimeMode::system ? "system" : "per_detector") << "\n";
  out << "baseline_error = " << format_double(cfg.protocol.baseline_error) << "\n";
  out << "ec_inefficiency = " << format_double(cfg.protocol.ec_inefficiency) << "\n";
  out << "pa_margin_bits = " << cfg.protocol.pa_margin_bits << "\n";
  return out.str();
}

std::string config_digest(const ExperimentConfig& cfg) {
  return hex64(fnv1a64(serialize_config(cfg)));
}

double channel_transmittance(const ChannelModel& ch) {
  double loss_db = ch.attenuation_db_per_km * ch.length_km + ch.excess_loss_db;
  return std::pow(10.0, -loss_db / 10.0);
}

double dark_count_per_window(const DetectorModel& det) {
  return det.dark_rate_hz * det.window_s;
}

double window_acceptance(const DetectorModel& det) {
  if (det.window_acceptance_override) return *det.window_acceptance_override;
  if (det.jitter_fwtm_s <= 0.0) return 1.0;
  double sigma = det.jitter_fwtm_s / (2.0 * std::sqrt(2.0 * std::log(10.0)));
  return std::erf((det.window_s / 2.0) / (sigma * std::sqrt(2.0)));
}

double effective_efficiency(const DetectorModel& det) {
  return det.quantum_efficiency * window_acceptance(det);
}

double mean_effective_efficiency(const ExperimentConfig& cfg) {
  return 0.5 * (effective_efficiency(cfg.detector[0]) + effective_efficiency(cfg.detector[1]));
}

}  // namespace dpsq
