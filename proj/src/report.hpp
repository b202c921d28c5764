#pragma once

#include <cstdint>
#include <string>

#include "distill.hpp"
#include "security.hpp"
#include "sim.hpp"

namespace dpsq {

// Everything a run writes down. Serialization is canonical (sorted keys,
// shortest round-trip numbers) so identical runs produce identical bytes;
// anything wall-clock dependent stays out of artifacts by design.

struct RunReport {
  std::string config_digest;
  uint64_t seed = 0;
  uint64_t slots = 0;
  RatePoint analytic;
  double usd_success_prob = 0.0;
  double threshold_qber = 0.0;
  uint64_t detection_events = 0;
  double measured_sifted_rate_hz = 0.0;
  DistillSummary distill;
};

std::string rate_point_json(const RatePoint& p, const ExperimentConfig& cfg);
std::string sweep_csv(const SweepTable& t);
std::string sweep_json(const SweepTable& t);
std::string run_report_json(const RunReport& r);
std::string simulation_summary_json(const ExperimentConfig& cfg, uint64_t seed,
                                    const DetectionLog& log, const EmpiricalRates& rates);
std::string transcript_text(const ReconciliationTranscript& t);

RunReport build_run_report(const ExperimentConfig& cfg, uint64_t seed, uint64_t slots,
                           const DetectionLog& log, const DistillSummary& distill);

// Shortest decimal form that reparses to the same double (CSV cells).
std::string format_double(double v);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace dpsq
