/* dpsqkd - differential-phase-shift QKD laboratory: analytic rate engine,
 * slot-level Monte Carlo simulator, and the classical distillation pipeline,
 * behind a plain C ABI.
 *
 * Conventions:
 *   - every fallible call returns dpsq_status; DPSQ_OK is 0
 *   - on failure, dpsq_last_error() describes the problem (thread-local)
 *   - strings returned through char** are heap-allocated JSON/CSV text,
 *     released with dpsq_string_free()
 *   - configs are opaque handles released with dpsq_config_free()
 */
#ifndef DPSQ_H
#define DPSQ_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined _WIN32
#define DPSQ_API __declspec(dllexport)
#else
#define DPSQ_API __attribute__((visibility("default")))
#endif

typedef enum dpsq_status {
  DPSQ_OK = 0,
  DPSQ_ERR_IO = 1,
  DPSQ_ERR_PARSE = 2,
  DPSQ_ERR_MISSING_KEY = 3,
  DPSQ_ERR_INVARIANT = 4,
  DPSQ_ERR_DOMAIN = 5,
  DPSQ_ERR_NO_ROOT = 6,
  DPSQ_ERR_BAD_INPUT = 7,
  DPSQ_ERR_PROTOCOL = 8,
  DPSQ_ERR_VERIFY = 9,
  DPSQ_ERR_NON_CONVERGENCE = 10,
  DPSQ_ERR_STATE = 11,
  DPSQ_ERR_INTERNAL = 12
} dpsq_status;

typedef struct dpsq_config dpsq_config;

DPSQ_API const char* dpsq_version(void);
DPSQ_API const char* dpsq_last_error(void);
DPSQ_API void dpsq_string_free(char* s);

/* ---- configuration ---- */

DPSQ_API dpsq_status dpsq_config_load(const char* path, dpsq_config** out);
DPSQ_API dpsq_status dpsq_config_parse(const char* text, dpsq_config** out);
DPSQ_API void dpsq_config_free(dpsq_config* cfg);
DPSQ_API dpsq_status dpsq_config_serialize(const dpsq_config* cfg, char** out);
DPSQ_API dpsq_status dpsq_config_digest(const dpsq_config* cfg, char** out);
DPSQ_API dpsq_status dpsq_config_set_length_km(dpsq_config* cfg, double length_km);

/* ---- scalar security formulas ---- */

DPSQ_API dpsq_status dpsq_collision_prob_single(double qber, double* out);
DPSQ_API dpsq_status dpsq_collision_prob_n(double qber, double mu, uint64_t n, double* out);
DPSQ_API dpsq_status dpsq_compression_factor(double qber, double mu, double* out);
DPSQ_API dpsq_status dpsq_binary_entropy(double qber, double* out);
DPSQ_API dpsq_status dpsq_secure_rate(double sifted_rate_hz, double qber, double mu,
                                      double ec_inefficiency, double* rate_hz, int* secure);
DPSQ_API dpsq_status dpsq_security_threshold(double mu, double ec_inefficiency, double* out);
DPSQ_API dpsq_status dpsq_pns_info_bound(double mu, double* out);
DPSQ_API dpsq_status dpsq_usd_success_prob(double mu, double* out);

/* ---- channel / detector model helpers ---- */

DPSQ_API dpsq_status dpsq_channel_transmittance(const dpsq_config* cfg, double* out);
DPSQ_API dpsq_status dpsq_dark_count_per_window(const dpsq_config* cfg, int detector,
                                                double* out);
DPSQ_API dpsq_status dpsq_window_acceptance(const dpsq_config* cfg, int detector, double* out);

/* ---- analytic rate engine ---- */

typedef struct dpsq_rate_point {
  double distance_km;
  double sifted_rate_hz;
  double qber;
  double tau;
  double secure_rate_hz;
  int secure;
} dpsq_rate_point;

DPSQ_API dpsq_status dpsq_analyze(const dpsq_config* cfg, dpsq_rate_point* out);
DPSQ_API dpsq_status dpsq_analyze_json(const dpsq_config* cfg, char** out);
DPSQ_API dpsq_status dpsq_sweep_csv(const dpsq_config* cfg, double from_km, double to_km,
                                    double step_km, char** out);
DPSQ_API dpsq_status dpsq_sweep_json(const dpsq_config* cfg, double from_km, double to_km,
                                     double step_km, char** out);

/* ---- simulation and distillation ---- */

/* Writes <out_base>.events.bin and <out_base>.phases.bin, returns a JSON
 * summary. out_base may be NULL to skip the files. */
DPSQ_API dpsq_status dpsq_simulate(const dpsq_config* cfg, uint64_t seed, uint64_t slots,
                                   const char* out_base, char** summary_json);

/* Full in-process pipeline: simulate, sift, estimate, reconcile, verify,
 * compress. Writes <out_base>.report.json, .transcript.txt and (when
 * verification passes) .key.bin; returns the report JSON. Fails with
 * DPSQ_ERR_VERIFY when the verification hashes disagree. */
DPSQ_API dpsq_status dpsq_distill(const dpsq_config* cfg, uint64_t seed, uint64_t slots,
                                  double sample_fraction, const char* out_base,
                                  char** report_json);

/* ---- two-process session mode ---- */

/* Connects to a listening receiver and drives the whole session. Artifact
 * handling matches dpsq_distill. */
DPSQ_API dpsq_status dpsq_session_send(const dpsq_config* cfg, uint64_t seed, uint64_t slots,
                                       double sample_fraction, const char* connect_addr,
                                       const char* out_base, char** report_json);

/* Accepts exactly one sender. on_listen (optional) fires with the bound
 * address, e.g. "127.0.0.1:41233", before blocking in accept; port 0
 * requests an ephemeral port. */
DPSQ_API dpsq_status dpsq_session_recv(const dpsq_config* cfg, const char* listen_addr,
                                       const char* out_base,
                                       void (*on_listen)(const char* addr, void* user),
                                       void* user, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* DPSQ_H */
