#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "dpsq.h"

namespace {

// 0 ok, 1 usage/internal, 2 config or input data, 3 protocol/framing,
// 4 verification or reconciliation failure.
int exit_code_for(dpsq_status st) {
  switch (st) {
    case DPSQ_OK:
      return 0;
    case DPSQ_ERR_IO:
    case DPSQ_ERR_PARSE:
    case DPSQ_ERR_MISSING_KEY:
    case DPSQ_ERR_INVARIANT:
    case DPSQ_ERR_DOMAIN:
    case DPSQ_ERR_NO_ROOT:
    case DPSQ_ERR_BAD_INPUT:
      return 2;
    case DPSQ_ERR_PROTOCOL:
      return 3;
    case DPSQ_ERR_VERIFY:
    case DPSQ_ERR_NON_CONVERGENCE:
      return 4;
    default:
      return 1;
  }
}

struct ConfigHandle {
  dpsq_config* cfg = nullptr;
  ~ConfigHandle() { dpsq_config_free(cfg); }
};

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { dpsq_string_free(s); }
};

int report_failure(dpsq_status st) {
  std::cerr << "error: " << dpsq_last_error() << "\n";
  return exit_code_for(st);
}

bool write_file(const std::string& path, const char* text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) return false;
  f << text;
  return static_cast<bool>(f);
}

void print_listen_addr(const char* addr, void*) {
  // Parsed by wrappers that launch the receiver with port 0.
  std::cout << "listening " << addr << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differential-phase-shift QKD laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed = 1;
  uint64_t slots = 1000000;
  std::string out_path;
  double from_km = 0.0, to_km = 50.0, step_km = 1.0;
  double sample_fraction = 0.1;
  std::string listen_addr, connect_addr, json_path;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file")->required();
  };

  CLI::App* analyze = app.add_subcommand("analyze", "analytic rates at the configured distance");
  add_config(analyze);
  analyze->add_option("--out", out_path, "also write the JSON report here");

  CLI::App* sweep = app.add_subcommand("sweep", "rate-vs-distance table");
  add_config(sweep);
  sweep->add_option("--from-km", from_km, "start distance")->check(CLI::NonNegativeNumber);
  sweep->add_option("--to-km", to_km, "end distance");
  sweep->add_option("--step-km", step_km, "distance step");
  sweep->add_option("--out", out_path, "also write the CSV table here");
  sweep->add_option("--json", json_path, "also write the JSON table here");

  CLI::App* simulate = app.add_subcommand("simulate", "slot-level Monte Carlo run");
  add_config(simulate);
  simulate->add_option("--seed", seed, "session seed");
  simulate->add_option("--slots", slots, "number of pulse slots");
  simulate->add_option("--out", out_path, "base path for .events.bin/.phases.bin");

  CLI::App* distill = app.add_subcommand("distill", "simulate plus the full key pipeline");
  add_config(distill);
  distill->add_option("--seed", seed, "session seed");
  distill->add_option("--slots", slots, "number of pulse slots");
  distill->add_option("--sample-fraction", sample_fraction, "publicly sampled fraction");
  distill->add_option("--out", out_path, "base path for .report.json/.transcript.txt/.key.bin");

  CLI::App* send = app.add_subcommand("session-send", "drive a two-process session");
  add_config(send);
  send->add_option("--seed", seed, "session seed");
  send->add_option("--slots", slots, "number of pulse slots");
  send->add_option("--sample-fraction", sample_fraction, "publicly sampled fraction");
  send->add_option("--connect", connect_addr, "receiver address host:port")->required();
  send->add_option("--out", out_path, "artifact base path");

  CLI::App* recv = app.add_subcommand("session-recv", "answer a two-process session");
  add_config(recv);
  recv->add_option("--listen", listen_addr, "bind address host:port (port 0 = ephemeral)")
      ->required();
  recv->add_option("--out", out_path, "artifact base path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  auto t0 = std::chrono::steady_clock::now();
  ConfigHandle cfg;
  if (dpsq_status st = dpsq_config_load(config_path.c_str(), &cfg.cfg))
    return report_failure(st);

  dpsq_status st = DPSQ_OK;
  OwnedString text;

  if (analyze->parsed()) {
    st = dpsq_analyze_json(cfg.cfg, &text.s);
    if (st == DPSQ_OK) {
      std::cout << text.s;
      if (!out_path.empty() && !write_file(out_path, text.s)) {
        std::cerr << "error: cannot write " << out_path << "\n";
        return 2;
      }
    }
  } else if (sweep->parsed()) {
    st = dpsq_sweep_csv(cfg.cfg, from_km, to_km, step_km, &text.s);
    if (st == DPSQ_OK) {
      std::cout << text.s;
      if (!out_path.empty() && !write_file(out_path, text.s)) {
        std::cerr << "error: cannot write " << out_path << "\n";
        return 2;
      }
      if (!json_path.empty()) {
        OwnedString js;
        st = dpsq_sweep_json(cfg.cfg, from_km, to_km, step_km, &js.s);
        if (st == DPSQ_OK && !write_file(json_path, js.s)) {
          std::cerr << "error: cannot write " << json_path << "\n";
          return 2;
        }
      }
    }
  } else if (simulate->parsed()) {
    st = dpsq_simulate(cfg.cfg, seed, slots, out_path.empty() ? nullptr : out_path.c_str(),
                       &text.s);
    if (text.s) std::cout << text.s;
  } else if (distill->parsed()) {
    st = dpsq_distill(cfg.cfg, seed, slots, sample_fraction,
                      out_path.empty() ? nullptr : out_path.c_str(), &text.s);
    if (text.s) std::cout << text.s;
  } else if (send->parsed()) {
    st = dpsq_session_send(cfg.cfg, seed, slots, sample_fraction, connect_addr.c_str(),
                           out_path.empty() ? nullptr : out_path.c_str(), &text.s);
    if (text.s) std::cout << text.s;
  } else if (recv->parsed()) {
    st = dpsq_session_recv(cfg.cfg, listen_addr.c_str(),
                           out_path.empty() ? nullptr : out_path.c_str(), print_listen_addr,
                           nullptr, &text.s);
    if (text.s) std::cout << text.s;
  }

  auto elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
  // Timing goes to stderr only: stdout and file artifacts stay byte-stable.
  std::cerr << "elapsed_ms=" << elapsed.count() << "\n";

  if (st != DPSQ_OK) return report_failure(st);
  return 0;
}
