#include "report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "digest.hpp"
#include "errors.hpp"

namespace dpsq {

namespace {

using nlohmann::json;

json point_to_json(const RatePoint& p) {
  return json{
      {"distance_km", p.distance_km},   {"sifted_rate_hz", p.sifted_rate_hz},
      {"qber", p.qber},                 {"tau", p.tau},
      {"secure_rate_hz", p.secure_rate_hz}, {"usd_success_prob", p.usd_success_prob},
      {"secure", p.secure},
  };
}

json distill_to_json(const DistillSummary& d) {
  return json{
      {"sifted_bits", d.sifted_bits},
      {"sampled_bits", d.sampled_bits},
      {"sample_mismatches", d.sample_mismatches},
      {"qber_estimate", d.qber_estimate},
      {"qber_hint", d.qber_hint},
      {"corrected_bits", d.corrected_bits},
      {"reconcile_parities", d.reconcile_parities},
      {"reconcile_flips", d.reconcile_flips},
      {"reconcile_passes", d.reconcile_passes},
      {"leakage_bits", d.leakage_bits},
      {"tau", d.tau},
      {"final_bits", d.final_bits},
      {"verified", d.verified},
  };
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

std::string rate_point_json(const RatePoint& p, const ExperimentConfig& cfg) {
  double mu = cfg.source.mean_photon_number;
  json j{
      {"config_digest", config_digest(cfg)},
      {"analytic", point_to_json(p)},
      {"annotations",
       json{
           {"transmittance", channel_transmittance(cfg.channel)},
           {"window_acceptance",
            json::array({window_acceptance(cfg.detector[0]), window_acceptance(cfg.detector[1])})},
           {"pns_info_bound", pns_info_bound(mu)},
           {"usd_success_prob", usd_success_prob(mu)},
           {"threshold_qber", security_threshold(mu, cfg.protocol.ec_inefficiency)},
       }},
  };
  return dump(j);
}

std::string sweep_csv(const SweepTable& t) {
  std::ostringstream out;
  out << "distance_km,sifted_rate_hz,qber,tau,secure_rate_hz,secure\n";
  for (const RatePoint& p : t.points) {
    out << format_double(p.distance_km) << ',' << format_double(p.sifted_rate_hz) << ','
        << format_double(p.qber) << ',' << format_double(p.tau) << ','
        << format_double(p.secure_rate_hz) << ',' << (p.secure ? "true" : "false") << '\n';
  }
  return out.str();
}

std::string sweep_json(const SweepTable& t) {
  json pts = json::array();
  for (const RatePoint& p : t.points) pts.push_back(point_to_json(p));
  return dump(json{{"config_digest", t.config_digest}, {"points", pts}});
}

std::string simulation_summary_json(const ExperimentConfig& cfg, uint64_t seed,
                                    const DetectionLog& log, const EmpiricalRates& rates) {
  json j{
      {"config_digest", config_digest(cfg)},
      {"seed", seed},
      {"slots", log.slot_count},
      {"detection_events", rates.events},
      {"measured",
       json{{"sifted_rate_hz", rates.sifted_rate_hz}, {"qber", rates.qber}}},
      {"analytic", point_to_json(analyze_point(cfg))},
  };
  return dump(j);
}

RunReport build_run_report(const ExperimentConfig& cfg, uint64_t seed, uint64_t slots,
                           const DetectionLog& log, const DistillSummary& distill) {
  RunReport r;
  r.config_digest = config_digest(cfg);
  r.seed = seed;
  r.slots = slots;
  r.analytic = analyze_point(cfg);
  r.usd_success_prob = usd_success_prob(cfg.source.mean_photon_number);
  r.threshold_qber = security_threshold(cfg.source.mean_photon_number, cfg.protocol.ec_inefficiency);
  r.detection_events = log.events.size();
  if (slots > 0)
    r.measured_sifted_rate_hz =
        static_cast<double>(log.events.size()) * cfg.source.clock_rate_hz / static_cast<double>(slots);
  r.distill = distill;
  return r;
}

std::string run_report_json(const RunReport& r) {
  json j{
      {"config_digest", r.config_digest},
      {"seed", r.seed},
      {"slots", r.slots},
      {"analytic", point_to_json(r.analytic)},
      {"annotations",
       json{{"usd_success_prob", r.usd_success_prob}, {"threshold_qber", r.threshold_qber}}},
      {"measured",
       json{{"detection_events", r.detection_events},
            {"sifted_rate_hz", r.measured_sifted_rate_hz}}},
      {"distill", distill_to_json(r.distill)},
  };
  return dump(j);
}

std::string transcript_text(const ReconciliationTranscript& t) {
  std::ostringstream out;
  for (const CascadeRound& r : t.rounds) {
    out << "pass " << r.pass << " block_size=" << r.block_size << " blocks=" << r.blocks
        << " parities=" << r.parities << " flips=" << r.flips << "\n";
  }
  out << "total_parities=" << t.total_parities << "\n";
  out << "converged=" << (t.converged ? "true" : "false") << "\n";
  out << "flip_positions=";
  for (size_t i = 0; i < t.flip_positions.size(); ++i) {
    if (i) out << ',';
    out << t.flip_positions[i];
  }
  out << "\n";
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(Errc::io, "cannot open file for writing: " + path);
  f << text;
  if (!f) fail(Errc::io, "short write: " + path);
}

}  // namespace dpsq
