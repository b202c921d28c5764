#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>

#include "distill.hpp"
#include "frame.hpp"
#include "params.hpp"
#include "report.hpp"

namespace dpsq {

// Blocking byte transport. Implementations: TCP socket, socketpair loopback.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send_bytes(std::span<const uint8_t> bytes) = 0;
  // Up to buf.size() bytes; 0 means orderly EOF.
  virtual size_t recv_some(std::span<uint8_t> buf) = 0;
};

// One frame in, one frame out, with decode errors surfaced as exceptions.
class FrameChannel {
 public:
  explicit FrameChannel(Transport& t) : t_(t) {}
  void send(const Frame& f);
  Frame recv();

 private:
  Transport& t_;
  FrameDecoder dec_;
};

std::unique_ptr<Transport> tcp_connect(const std::string& host_port);

class TcpListener {
 public:
  explicit TcpListener(const std::string& host_port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  std::string bound_address() const { return bound_; }
  std::unique_ptr<Transport> accept_one();

 private:
  int fd_ = -1;
  std::string bound_;
};

// In-process loopback pair (socketpair) for tests.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> loopback_pair();

struct SessionArtifacts {
  RunReport report;
  ReconciliationTranscript transcript;
  KeyMaterial final_key;
};

// Two-party run of the full pipeline over a transport. The sender simulates
// the optical session, drives every stage, and the two replicas of the
// classical logic stay in lockstep: given the same config file both roles
// finish with byte-identical reports and keys, matching the in-process
// pipeline for the same (config, seed, slots).
SessionArtifacts run_session_sender(const ExperimentConfig& cfg, uint64_t seed,
                                    uint64_t n_slots, const DistillOptions& opts,
                                    Transport& transport);
SessionArtifacts run_session_receiver(const ExperimentConfig& cfg, Transport& transport);

void write_run_artifacts(const std::string& out_base, const SessionArtifacts& art,
                         bool write_key);

}  // namespace dpsq
