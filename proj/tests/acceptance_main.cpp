// Acceptance gate: one line per criterion, nonzero exit if any fails.
// Library criteria run in-process; command-line criteria fork the real
// binary (path injected as DPSQ_CLI_PATH) including a two-process TCP
// session on an ephemeral loopback port.
#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "distill.hpp"
#include "event_io.hpp"
#include "params.hpp"
#include "rng.hpp"
#include "security.hpp"
#include "sim.hpp"

using namespace dpsq;

namespace {

std::string g_dir;  // scratch directory for artifacts

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

ExperimentConfig reference_config() {
  return load_config(std::string(DPSQ_CONFIG_DIR) + "/paper-10km.cfg");
}

std::string reference_config_path() {
  return std::string(DPSQ_CONFIG_DIR) + "/paper-10km.cfg";
}

// ---- subprocess plumbing ----

struct Child {
  pid_t pid = -1;
  int out_fd = -1;
  int err_fd = -1;
};

Child spawn_cli(const std::vector<std::string>& args) {
  int outp[2], errp[2];
  if (pipe(outp) != 0 || pipe(errp) != 0) throw std::runtime_error("pipe failed");
  pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    dup2(outp[1], 1);
    dup2(errp[1], 2);
    close(outp[0]);
    close(outp[1]);
    close(errp[0]);
    close(errp[1]);
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(DPSQ_CLI_PATH));
    for (const std::string& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    execv(DPSQ_CLI_PATH, argv.data());
    _exit(127);
  }
  close(outp[1]);
  close(errp[1]);
  return Child{pid, outp[0], errp[0]};
}

std::string drain_fd(int fd) {
  std::string out;
  char buf[4096];
  ssize_t n;
  while ((n = read(fd, buf, sizeof buf)) > 0) out.append(buf, static_cast<size_t>(n));
  close(fd);
  return out;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult wait_child(Child c) {
  CliResult r;
  r.out = drain_fd(c.out_fd);
  r.err = drain_fd(c.err_fd);
  int status = 0;
  waitpid(c.pid, &status, 0);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

CliResult run_cli(const std::vector<std::string>& args) { return wait_child(spawn_cli(args)); }

// Reads the receiver's stdout until the advertised listen address appears.
std::string read_listen_address(int fd) {
  std::string buf;
  char ch;
  while (read(fd, &ch, 1) == 1) {
    buf.push_back(ch);
    if (ch == '\n') {
      if (buf.rfind("listening ", 0) == 0) return buf.substr(10, buf.size() - 11);
      buf.clear();
    }
    if (buf.size() > 4096) break;
  }
  throw std::runtime_error("receiver never advertised a listen address");
}

std::string slurp(const std::string& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

// ---- criteria ----

struct Outcome {
  bool pass = true;
  std::string detail;
};

void expect(Outcome& o, bool ok, const std::string& what) {
  if (!ok) {
    o.pass = false;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += what;
  }
}

std::string fmt(double v) {
  char buf[64];
  snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Outcome criterion_formula_oracles() {
  Outcome o;
  double t0 = now_s();
  expect(o, std::fabs(collision_prob_single(0.0) - 0.5) < 1e-12, "collision prob at e=0");
  expect(o, std::fabs(compression_factor(0.0, 0.2) - 0.6) < 1e-12, "compression factor at e=0");
  expect(o, std::fabs(pns_info_bound(0.2) - 0.4) < 1e-12, "photon-number-splitting bound");
  DetectorModel det;
  det.dark_rate_hz = 30e3;
  det.window_s = 280e-12;
  expect(o, std::fabs(dark_count_per_window(det) - 8.4e-6) < 1e-12, "dark counts per window");
  expect(o, now_s() - t0 < 1.0, "runtime over 1 s");
  return o;
}

Outcome criterion_security_threshold() {
  Outcome o;
  double t0 = now_s();
  double e_star = security_threshold(0.2, 1.16);
  expect(o, e_star >= 0.039 && e_star <= 0.043,
         "threshold " + fmt(e_star) + " outside [0.039, 0.043]");
  // Solved to 1e-6: two nearby runs must agree to that tolerance.
  expect(o, std::fabs(security_threshold(0.2, 1.16) - e_star) < 1e-6, "solver not stable");
  expect(o, now_s() - t0 < 1.0, "runtime over 1 s");
  return o;
}

Outcome criterion_headline_rates() {
  Outcome o;
  RatePoint p = analyze_point(reference_config());
  expect(o, std::fabs(p.secure_rate_hz - 1.34e6) <= 0.10 * 1.34e6,
         "secure rate " + fmt(p.secure_rate_hz) + " not within 10% of 1.34e6");
  expect(o, std::fabs(p.qber - 0.015) <= 0.003,
         "qber " + fmt(p.qber) + " not within 0.3 pp of 1.5%");
  expect(o, p.secure, "reference point reported insecure");
  return o;
}

Outcome criterion_sweep_shape() {
  Outcome o;
  double t0 = now_s();
  ExperimentConfig cfg = reference_config();
  SweepTable t = sweep_distance(cfg, 0.0, 40.0, 1.0);
  expect(o, t.points.size() == 41, "expected 41 sweep rows");
  double e_star = security_threshold(cfg.source.mean_photon_number, cfg.protocol.ec_inefficiency);

  double channel_ratio = std::pow(10.0, cfg.channel.attenuation_db_per_km / 10.0);
  int transitions = 0;
  for (size_t i = 0; i + 1 < t.points.size(); ++i) {
    const RatePoint& a = t.points[i];
    const RatePoint& b = t.points[i + 1];
    expect(o, a.sifted_rate_hz > b.sifted_rate_hz, "sifted rate not decreasing");
    // Near-exponential decay: never faster than the fiber attenuation, and
    // approaching it once the dead-time duty factor saturates.
    double ratio = a.sifted_rate_hz / b.sifted_rate_hz;
    expect(o, ratio > 1.0 && ratio < channel_ratio * 1.005,
           "decay ratio " + fmt(ratio) + " outside the attenuation envelope");
    expect(o, a.qber < b.qber, "qber not increasing");
    if (a.secure && !b.secure) ++transitions;
    expect(o, !(!a.secure && b.secure), "security returned after the cutoff");
  }
  double tail = t.points[39].sifted_rate_hz / t.points[40].sifted_rate_hz;
  expect(o, std::fabs(tail - channel_ratio) / channel_ratio < 0.02,
         "tail decay " + fmt(tail) + " not at the attenuation asymptote");

  expect(o, transitions == 1, "expected exactly one secure-to-insecure transition");
  for (const RatePoint& p : t.points) {
    expect(o, p.secure == (p.secure_rate_hz > 0.0), "secure flag inconsistent with rate");
    expect(o, p.secure_rate_hz <= p.sifted_rate_hz, "secure rate above sifted rate");
    expect(o, p.secure == (p.qber < e_star), "cutoff not at the qber threshold crossing");
  }
  expect(o, now_s() - t0 < 5.0, "runtime over 5 s");
  return o;
}

Outcome criterion_monte_carlo() {
  Outcome o;
  double t0 = now_s();
  const uint64_t n = 10000000;
  const double distances[] = {0.0, 7.5, 15.0, 22.5, 30.0};
  uint64_t seed = 9001;
  for (double L : distances) {
    ExperimentConfig cfg = reference_config();
    cfg.channel.length_km = L;
    auto [rec, log] = simulate_session(cfg, seed++, n);
    EmpiricalRates emp = empirical_rates(rec, log, cfg);

    // Detection probability per slot: signal plus dark counts, degraded by
    // the paralyzable duty factor (the same form the rate engine uses, with
    // the dark contribution included since logged events contain darks).
    double nu = cfg.source.clock_rate_hz;
    double p_sig = cfg.source.mean_photon_number * channel_transmittance(cfg.channel) *
                   mean_effective_efficiency(cfg);
    double p_dark =
        dark_count_per_window(cfg.detector[0]) + dark_count_per_window(cfg.detector[1]);
    double p_det = p_sig + p_dark;
    double duty = std::exp(-nu * p_det * cfg.detector[0].dead_time_s / 2.0);
    double expect_events = p_det * duty * static_cast<double>(n);
    double sigma = std::sqrt(expect_events * (1.0 - p_det * duty));
    double z_rate = (static_cast<double>(emp.events) - expect_events) / sigma;
    expect(o, std::fabs(z_rate) < 3.0,
           "rate at " + fmt(L) + " km off by " + fmt(z_rate) + " sigma");

    double e_model = qber_model(cfg);
    double sigma_e = std::sqrt(e_model * (1.0 - e_model) / static_cast<double>(emp.events));
    double z_q = (emp.qber - e_model) / sigma_e;
    expect(o, std::fabs(z_q) < 3.0, "qber at " + fmt(L) + " km off by " + fmt(z_q) + " sigma");
  }
  double dt = now_s() - t0;
  expect(o, dt < 60.0, "runtime " + fmt(dt) + " s over 60 s");
  return o;
}

Outcome criterion_dead_time() {
  Outcome o;
  const uint64_t n = 4000000;
  const uint64_t k = 500;  // dead time in slots
  double prev = 1.1;
  for (double p : {1e-4, 5e-4, 1e-3}) {  // r*t_d = 2*p*k in {0.1, 0.5, 1.0}
    SessionRng rng(777);
    std::vector<DetectionEvent> in;
    for (uint64_t s = 1; s <= n; ++s)
      for (uint8_t d = 0; d < 2; ++d)
        if (rng.uniform01() < p) in.push_back({s, d, 0.0});
    auto out = apply_dead_time(in, static_cast<double>(k) * 1e-9, 1e-9,
                               DeadTimeMode::per_detector);
    double fraction = static_cast<double>(out.size()) / static_cast<double>(in.size());
    double expected = std::exp(-p * static_cast<double>(k));  // exp(-r*t_d/2)
    double sigma = std::sqrt(expected * (1.0 - expected) / static_cast<double>(in.size()));
    double z = (fraction - expected) / sigma;
    expect(o, std::fabs(z) < 3.0,
           "retention at r*t_d=" + fmt(2 * p * k) + " off by " + fmt(z) + " sigma");
    expect(o, fraction < prev, "retention not decreasing with dead time load");
    prev = fraction;
  }
  return o;
}

Outcome criterion_distillation() {
  Outcome o;
  ExperimentConfig cfg = reference_config();
  const uint64_t slots = 10000000;
  int verified = 0, runs = 100;
  double leaked = 0.0, shannon = 0.0;
  for (int i = 0; i < runs; ++i) {
    auto [rec, log] = simulate_session(cfg, 101 + static_cast<uint64_t>(i), slots);
    DistillOutcome out = run_distillation(cfg, rec, log, {});
    const DistillSummary& s = out.summary;
    if (!s.verified) continue;
    ++verified;
    expect(o, out.sender_key.bits == out.receiver_key.bits,
           "final keys differ between parties at seed " + std::to_string(101 + i));
    expect(o,
           s.final_bits == final_length(s.corrected_bits, s.tau, s.leakage_bits,
                                        cfg.protocol.pa_margin_bits),
           "final length accounting broken at seed " + std::to_string(101 + i));
    double e_run =
        static_cast<double>(s.reconcile_flips) / static_cast<double>(s.corrected_bits);
    leaked += static_cast<double>(s.reconcile_parities);
    shannon += static_cast<double>(s.corrected_bits) * binary_entropy(e_run);
  }
  expect(o, verified >= 99, "only " + std::to_string(verified) + "/100 runs verified");
  double f = leaked / shannon;
  expect(o, f >= 1.0 && f <= 1.35,
         "leakage " + fmt(f) + " h2(e) outside [1.0, 1.35] h2(e)");
  return o;
}

// Runs one complete two-process session over TCP; returns the artifact bases.
void run_tcp_session(uint64_t seed, uint64_t slots, const std::string& send_base,
                     const std::string& recv_base, Outcome& o) {
  Child recv = spawn_cli({"session-recv", "--config", reference_config_path(), "--listen",
                          "127.0.0.1:0", "--out", recv_base});
  std::string addr = read_listen_address(recv.out_fd);
  CliResult send = run_cli({"session-send", "--config", reference_config_path(), "--seed",
                            std::to_string(seed), "--slots", std::to_string(slots), "--connect",
                            addr, "--out", send_base});
  CliResult recv_res = wait_child(recv);
  expect(o, send.exit_code == 0, "sender exited " + std::to_string(send.exit_code));
  expect(o, recv_res.exit_code == 0, "receiver exited " + std::to_string(recv_res.exit_code));
}

Outcome criterion_session_equivalence() {
  Outcome o;
  const uint64_t slots = 1000000;
  for (uint64_t seed = 301; seed <= 310 && o.pass; ++seed) {
    std::string tag = g_dir + "/eq" + std::to_string(seed);
    CliResult local = run_cli({"distill", "--config", reference_config_path(), "--seed",
                               std::to_string(seed), "--slots", std::to_string(slots), "--out",
                               tag + "_local"});
    expect(o, local.exit_code == 0, "distill exited " + std::to_string(local.exit_code));
    run_tcp_session(seed, slots, tag + "_send", tag + "_recv", o);
    if (!o.pass) break;

    std::string local_report = slurp(tag + "_local.report.json");
    expect(o, slurp(tag + "_send.report.json") == local_report,
           "sender report differs from in-process report at seed " + std::to_string(seed));
    expect(o, slurp(tag + "_recv.report.json") == local_report,
           "receiver report differs from in-process report at seed " + std::to_string(seed));
    auto local_key = read_file_bytes(tag + "_local.key.bin");
    expect(o, read_file_bytes(tag + "_send.key.bin") == local_key,
           "sender key differs at seed " + std::to_string(seed));
    expect(o, read_file_bytes(tag + "_recv.key.bin") == local_key,
           "receiver key differs at seed " + std::to_string(seed));
    expect(o, !local_key.empty(), "empty key artifact");
  }
  return o;
}

Outcome criterion_determinism() {
  Outcome o;
  const std::string cfgp = reference_config_path();
  struct Case {
    std::string name;
    std::vector<std::string> args;
    std::vector<std::string> artifacts;  // relative to base, "" = stdout only
  };
  std::string b = g_dir + "/det";
  std::vector<Case> cases = {
      {"analyze", {"analyze", "--config", cfgp, "--out", b + "_an.json"}, {b + "_an.json"}},
      {"sweep",
       {"sweep", "--config", cfgp, "--from-km", "0", "--to-km", "40", "--step-km", "2.5",
        "--out", b + "_sw.csv", "--json", b + "_sw.json"},
       {b + "_sw.csv", b + "_sw.json"}},
      {"simulate",
       {"simulate", "--config", cfgp, "--seed", "5", "--slots", "200000", "--out", b + "_sim"},
       {b + "_sim.events.bin", b + "_sim.phases.bin"}},
      {"distill",
       {"distill", "--config", cfgp, "--seed", "5", "--slots", "400000", "--out", b + "_di"},
       {b + "_di.report.json", b + "_di.transcript.txt", b + "_di.key.bin"}},
  };
  for (const Case& c : cases) {
    CliResult r1 = run_cli(c.args);
    expect(o, r1.exit_code == 0, c.name + " exited " + std::to_string(r1.exit_code));
    std::vector<std::string> snap;
    for (const std::string& a : c.artifacts) snap.push_back(slurp(a));
    CliResult r2 = run_cli(c.args);
    expect(o, r2.exit_code == 0, c.name + " rerun exited " + std::to_string(r2.exit_code));
    expect(o, r1.out == r2.out, c.name + " stdout differs across reruns");
    for (size_t i = 0; i < c.artifacts.size(); ++i)
      expect(o, slurp(c.artifacts[i]) == snap[i], c.artifacts[i] + " differs across reruns");
  }

  // Session mode: the same seed over two independent TCP sessions.
  Outcome so;
  run_tcp_session(301, 1000000, b + "_s1send", b + "_s1recv", so);
  run_tcp_session(301, 1000000, b + "_s2send", b + "_s2recv", so);
  expect(o, so.pass, so.detail);
  if (so.pass) {
    expect(o, slurp(b + "_s1send.report.json") == slurp(b + "_s2send.report.json"),
           "session sender report differs across reruns");
    expect(o, slurp(b + "_s1recv.report.json") == slurp(b + "_s2recv.report.json"),
           "session receiver report differs across reruns");
  }
  return o;
}

Outcome criterion_usd_bound() {
  Outcome o;
  expect(o, std::fabs(usd_success_prob(0.2) - 0.329680) <= 1e-5,
         "usd probability " + fmt(usd_success_prob(0.2)));
  CliResult r = run_cli({"sweep", "--config", reference_config_path(), "--from-km", "0",
                         "--to-km", "20", "--step-km", "5", "--json", g_dir + "/usd.json"});
  expect(o, r.exit_code == 0, "sweep exited " + std::to_string(r.exit_code));
  if (o.pass) {
    auto j = nlohmann::json::parse(slurp(g_dir + "/usd.json"));
    expect(o, j["points"].size() == 5, "expected 5 sweep rows");
    for (const auto& row : j["points"]) {
      expect(o, row.contains("usd_success_prob"), "sweep row missing usd_success_prob");
      expect(o, std::fabs(row["usd_success_prob"].get<double>() - 0.329680) <= 1e-5,
             "sweep row usd value off");
    }
  }
  return o;
}

}  // namespace

int main() {
  char tmpl[] = "/tmp/dpsq-acceptance-XXXXXX";
  if (!mkdtemp(tmpl)) {
    std::cerr << "cannot create scratch directory\n";
    return 2;
  }
  g_dir = tmpl;

  struct Criterion {
    const char* name;
    std::function<Outcome()> fn;
  };
  const Criterion criteria[] = {
      {"formula oracles", criterion_formula_oracles},
      {"security threshold", criterion_security_threshold},
      {"headline rates at 10 km", criterion_headline_rates},
      {"sweep curve shape", criterion_sweep_shape},
      {"monte carlo vs analytic model", criterion_monte_carlo},
      {"dead-time retention", criterion_dead_time},
      {"distillation convergence and accounting", criterion_distillation},
      {"session-mode equivalence", criterion_session_equivalence},
      {"artifact determinism", criterion_determinism},
      {"usd bound reporting", criterion_usd_bound},
  };

  int failures = 0;
  int idx = 0;
  for (const Criterion& c : criteria) {
    ++idx;
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (o.pass) {
      std::cout << "PASS " << idx << ": " << c.name << "\n";
    } else {
      ++failures;
      std::cout << "FAIL " << idx << ": " << c.name << " — " << o.detail << "\n";
    }
    std::cout.flush();
  }
  return failures == 0 ? 0 : 1;
}
