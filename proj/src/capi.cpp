#include "dpsq.h"

#include <cstring>
#include <new>
#include <string>

#include "distill.hpp"
#include "errors.hpp"
#include "event_io.hpp"
#include "params.hpp"
#include "report.hpp"
#include "security.hpp"
#include "session.hpp"
#include "sim.hpp"

using namespace dpsq;

struct dpsq_config {
  ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

dpsq_status map_errc(Errc c) {
  switch (c) {
    case Errc::io: return DPSQ_ERR_IO;
    case Errc::parse: return DPSQ_ERR_PARSE;
    case Errc::missing_key: return DPSQ_ERR_MISSING_KEY;
    case Errc::invariant: return DPSQ_ERR_INVARIANT;
    case Errc::domain: return DPSQ_ERR_DOMAIN;
    case Errc::no_root: return DPSQ_ERR_NO_ROOT;
    case Errc::unsorted_input:
    case Errc::session_mismatch:
    case Errc::slot_out_of_range:
    case Errc::length_mismatch:
    case Errc::empty_key:
    case Errc::output_too_long: return DPSQ_ERR_BAD_INPUT;
    case Errc::non_convergence: return DPSQ_ERR_NON_CONVERGENCE;
    case Errc::truncated_frame:
    case Errc::unknown_frame_type:
    case Errc::oversize_frame:
    case Errc::protocol: return DPSQ_ERR_PROTOCOL;
    case Errc::verify_failed: return DPSQ_ERR_VERIFY;
    case Errc::state: return DPSQ_ERR_STATE;
  }
  return DPSQ_ERR_INTERNAL;
}

template <typename F>
dpsq_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return DPSQ_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return map_errc(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DPSQ_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return DPSQ_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

dpsq_status require_arg(bool ok, const char* what) {
  if (ok) return DPSQ_OK;
  g_last_error = std::string("null or invalid argument: ") + what;
  return DPSQ_ERR_DOMAIN;
}

const DetectorModel* pick_detector(const dpsq_config* cfg, int detector) {
  if (detector != 0 && detector != 1) return nullptr;
  return &cfg->cfg.detector[detector];
}

}  // namespace

extern "C" {

const char* dpsq_version(void) { return "1.0.0"; }

const char* dpsq_last_error(void) { return g_last_error.c_str(); }

void dpsq_string_free(char* s) { delete[] s; }

dpsq_status dpsq_config_load(const char* path, dpsq_config** out) {
  if (auto rc = require_arg(path && out, "path/out")) return rc;
  return guarded([&] { *out = new dpsq_config{load_config(path)}; });
}

dpsq_status dpsq_config_parse(const char* text, dpsq_config** out) {
  if (auto rc = require_arg(text && out, "text/out")) return rc;
  return guarded([&] { *out = new dpsq_config{parse_config(text)}; });
}

void dpsq_config_free(dpsq_config* cfg) { delete cfg; }

dpsq_status dpsq_config_serialize(const dpsq_config* cfg, char** out) {
  if (auto rc = require_arg(cfg && out, "cfg/out")) return rc;
  return guarded([&] { *out = dup_string(serialize_config(cfg->cfg)); });
}

dpsq_status dpsq_config_digest(const dpsq_config* cfg, char** out) {
  if (auto rc = require_arg(cfg && out, "cfg/out")) return rc;
  return guarded([&] { *out = dup_string(config_digest(cfg->cfg)); });
}

dpsq_status dpsq_config_set_length_km(dpsq_config* cfg, double length_km) {
  if (auto rc = require_arg(cfg != nullptr, "cfg")) return rc;
  return guarded([&] {
    ExperimentConfig next = cfg->cfg;
    next.channel.length_km = length_km;
    validate_config(next);
    cfg->cfg = next;
  });
}

dpsq_status dpsq_collision_prob_single(double qber, double* out) {
  if (auto rc = require_arg(out != nullptr, "out")) return rc;
  return guarded([&] { *out = collision_prob_single(qber); });
}

dpsq_status dpsq_collision_prob_n(double qber, double mu, uint64_t n, double* out) {
  if (auto rc = require_arg(out != nullptr, "out")) return rc;
  return guarded([&] { *out = collision_prob_n(qber, mu, n); });
}

dpsq_status dpsq_compression_factor(double qber, double mu, double* out) {
  if (auto rc = require_arg(out != nullptr, "out")) return rc;
  return guarded([&] { *out = compression_factor(qber, mu); });
}

dpsq_status dpsq_binary_entropy(double qber, double* out) {
  if (auto rc = require_arg(out != nullptr, "out")) return rc;
  return guarded([&] { *out = binary_entropy(qber); });
}

dpsq_status dpsq_secure_rate(double sifted_rate_hz, double qber, double mu,
                             double ec_inefficiency, double* rate_hz, int* secure) {
  if (auto rc = require_arg(rate_hz && secure, "rate_hz/secure")) return rc;
  return guarded([&] {
    SecureRateResult r = secure_rate(sifted_rate_hz, qber, mu, ec_inefficiency);
    *rate_hz = r.rate_hz;
    *secure = r.secure ? 1 : 0;
  });
}

dpsq_status dpsq_security_threshold(double mu, double ec_inefficiency, double* out) {
  if (auto rc = require_arg(out != nullptr, "out")) return rc;
  return guarded([&] { *out = security_threshold(mu, ec_inefficiency); });
}

dpsq_status dpsq_pns_info_bound(double mu, double* out) {
  if (auto rc = require_arg(out != nullptr, "out")) return rc;
  return guarded([&] { *out = pns_info_bound(mu); });
}

dpsq_status dpsq_usd_success_prob(double mu, double* out) {
  if (auto rc = require_arg(out != nullptr, "out")) return rc;
  return guarded([&] { *out = usd_success_prob(mu); });
}

dpsq_status dpsq_channel_transmittance(const dpsq_config* cfg, double* out) {
  if (auto rc = require_arg(cfg && out, "cfg/out")) return rc;
  return guarded([&] { *out = channel_transmittance(cfg->cfg.channel); });
}

dpsq_status dpsq_dark_count_per_window(const dpsq_config* cfg, int detector, double* out) {
  if (auto rc = require_arg(cfg && out, "cfg/out")) return rc;
  const DetectorModel* det = pick_detector(cfg, detector);
  if (auto rc = require_arg(det != nullptr, "detector")) return rc;
  return guarded([&] { *out = dark_count_per_window(*det); });
}

dpsq_status dpsq_window_acceptance(const dpsq_config* cfg, int detector, double* out) {
  if (auto rc = require_arg(cfg && out, "cfg/out")) return rc;
  const DetectorModel* det = pick_detector(cfg, detector);
  if (auto rc = require_arg(det != nullptr, "detector")) return rc;
  return guarded([&] { *out = window_acceptance(*det); });
}

dpsq_status dpsq_analyze(const dpsq_config* cfg, dpsq_rate_point* out) {
  if (auto rc = require_arg(cfg && out, "cfg/out")) return rc;
  return guarded([&] {
    RatePoint p = analyze_point(cfg->cfg);
    *out = dpsq_rate_point{p.distance_km, p.sifted_rate_hz, p.qber,
                           p.tau,         p.secure_rate_hz, p.secure ? 1 : 0};
  });
}

dpsq_status dpsq_analyze_json(const dpsq_config* cfg, char** out) {
  if (auto rc = require_arg(cfg && out, "cfg/out")) return rc;
  return guarded([&] { *out = dup_string(rate_point_json(analyze_point(cfg->cfg), cfg->cfg)); });
}

dpsq_status dpsq_sweep_csv(const dpsq_config* cfg, double from_km, double to_km, double step_km,
                           char** out) {
  if (auto rc = require_arg(cfg && out, "cfg/out")) return rc;
  return guarded(
      [&] { *out = dup_string(sweep_csv(sweep_distance(cfg->cfg, from_km, to_km, step_km))); });
}

dpsq_status dpsq_sweep_json(const dpsq_config* cfg, double from_km, double to_km, double step_km,
                            char** out) {
  if (auto rc = require_arg(cfg && out, "cfg/out")) return rc;
  return guarded(
      [&] { *out = dup_string(sweep_json(sweep_distance(cfg->cfg, from_km, to_km, step_km))); });
}

dpsq_status dpsq_simulate(const dpsq_config* cfg, uint64_t seed, uint64_t slots,
                          const char* out_base, char** summary_json) {
  if (auto rc = require_arg(cfg != nullptr, "cfg")) return rc;
  return guarded([&] {
    auto [rec, log] = simulate_session(cfg->cfg, seed, slots);
    EmpiricalRates rates = empirical_rates(rec, log, cfg->cfg);
    if (out_base) {
      std::string base = out_base;
      write_detection_log(base + ".events.bin", log);
      write_sender_record(base + ".phases.bin", rec);
    }
    if (summary_json)
      *summary_json = dup_string(simulation_summary_json(cfg->cfg, seed, log, rates));
  });
}

dpsq_status dpsq_distill(const dpsq_config* cfg, uint64_t seed, uint64_t slots,
                         double sample_fraction, const char* out_base, char** report_json) {
  if (auto rc = require_arg(cfg != nullptr, "cfg")) return rc;
  return guarded([&] {
    auto [rec, log] = simulate_session(cfg->cfg, seed, slots);
    DistillOptions opts;
    opts.sample_fraction = sample_fraction;
    DistillOutcome outcome = run_distillation(cfg->cfg, rec, log, opts);

    SessionArtifacts art;
    art.report = build_run_report(cfg->cfg, seed, slots, log, outcome.summary);
    art.transcript = outcome.transcript;
    art.final_key = outcome.sender_key;
    if (out_base) write_run_artifacts(out_base, art, outcome.summary.verified);
    if (report_json) *report_json = dup_string(run_report_json(art.report));
    if (!outcome.summary.verified)
      fail(Errc::verify_failed, "verification hashes disagree; no key material produced");
  });
}

dpsq_status dpsq_session_send(const dpsq_config* cfg, uint64_t seed, uint64_t slots,
                              double sample_fraction, const char* connect_addr,
                              const char* out_base, char** report_json) {
  if (auto rc = require_arg(cfg && connect_addr, "cfg/connect_addr")) return rc;
  return guarded([&] {
    auto transport = tcp_connect(connect_addr);
    DistillOptions opts;
    opts.sample_fraction = sample_fraction;
    SessionArtifacts art = run_session_sender(cfg->cfg, seed, slots, opts, *transport);
    if (out_base) write_run_artifacts(out_base, art, art.report.distill.verified);
    if (report_json) *report_json = dup_string(run_report_json(art.report));
    if (!art.report.distill.verified)
      fail(Errc::verify_failed, "verification hashes disagree; no key material produced");
  });
}

dpsq_status dpsq_session_recv(const dpsq_config* cfg, const char* listen_addr,
                              const char* out_base,
                              void (*on_listen)(const char* addr, void* user), void* user,
                              char** report_json) {
  if (auto rc = require_arg(cfg && listen_addr, "cfg/listen_addr")) return rc;
  return guarded([&] {
    TcpListener listener(listen_addr);
    if (on_listen) on_listen(listener.bound_address().c_str(), user);
    auto transport = listener.accept_one();
    SessionArtifacts art = run_session_receiver(cfg->cfg, *transport);
    if (out_base) write_run_artifacts(out_base, art, art.report.distill.verified);
    if (report_json) *report_json = dup_string(run_report_json(art.report));
    if (!art.report.distill.verified)
      fail(Errc::verify_failed, "verification hashes disagree; no key material produced");
  });
}

}  // extern "C"
