#include "session.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

#include "errors.hpp"
#include "event_io.hpp"
#include "rng.hpp"
#include "security.hpp"
#include "toeplitz.hpp"

namespace dpsq {

namespace {

constexpr uint8_t kErrProtocol = 1;
constexpr uint8_t kErrNonConvergence = 2;
constexpr uint8_t kErrInternal = 3;

[[noreturn]] void raise_remote(const Frame& f) {
  PayloadReader r(f.payload);
  uint8_t code = r.u8();
  auto rest = r.rest();
  std::string msg = "peer: " + std::string(reinterpret_cast<const char*>(rest.data()),
                                           rest.size());
  switch (code) {
    case kErrNonConvergence: fail(Errc::non_convergence, msg);
    case kErrProtocol: fail(Errc::protocol, msg);
    default: fail(Errc::protocol, msg);
  }
}

Frame error_frame(uint8_t code, const std::string& msg) {
  Frame f;
  f.type = MsgType::error;
  f.payload.push_back(code);
  f.payload.insert(f.payload.end(), msg.begin(), msg.end());
  return f;
}

Frame expect(FrameChannel& ch, MsgType t) {
  Frame f = ch.recv();
  if (f.type == MsgType::error) raise_remote(f);
  if (f.type != t)
    fail(Errc::protocol, "unexpected frame type " +
                             std::to_string(static_cast<int>(f.type)) + ", wanted " +
                             std::to_string(static_cast<int>(t)));
  return f;
}

void expect_empty(const Frame& f) {
  if (!f.payload.empty()) fail(Errc::protocol, "expected an empty payload");
}

// POSIX fd transport shared by TCP connections and socketpair loopbacks.
class FdTransport final : public Transport {
 public:
  explicit FdTransport(int fd) : fd_(fd) {}
  ~FdTransport() override {
    if (fd_ >= 0) ::close(fd_);
  }
  FdTransport(const FdTransport&) = delete;
  FdTransport& operator=(const FdTransport&) = delete;

  void send_bytes(std::span<const uint8_t> bytes) override {
    size_t off = 0;
    while (off < bytes.size()) {
      ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        fail(Errc::io, std::string("send failed: ") + std::strerror(errno));
      }
      off += static_cast<size_t>(n);
    }
  }

  size_t recv_some(std::span<uint8_t> buf) override {
    for (;;) {
      ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
      if (n >= 0) return static_cast<size_t>(n);
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK)
        fail(Errc::protocol, "peer did not answer within the receive timeout");
      fail(Errc::io, std::string("recv failed: ") + std::strerror(errno));
    }
  }

 private:
  int fd_;
};

void set_recv_timeout(int fd) {
  timeval tv{};
  tv.tv_sec = 60;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

std::pair<std::string, std::string> split_host_port(const std::string& addr) {
  auto pos = addr.rfind(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 >= addr.size())
    fail(Errc::parse, "address must look like host:port: " + addr);
  return {addr.substr(0, pos), addr.substr(pos + 1)};
}

std::string describe_sockaddr(const sockaddr_storage& ss) {
  char host[INET6_ADDRSTRLEN] = {0};
  uint16_t port = 0;
  if (ss.ss_family == AF_INET) {
    const auto* a = reinterpret_cast<const sockaddr_in*>(&ss);
    ::inet_ntop(AF_INET, &a->sin_addr, host, sizeof host);
    port = ntohs(a->sin_port);
  } else if (ss.ss_family == AF_INET6) {
    const auto* a = reinterpret_cast<const sockaddr_in6*>(&ss);
    ::inet_ntop(AF_INET6, &a->sin6_addr, host, sizeof host);
    port = ntohs(a->sin6_port);
  }
  return std::string(host) + ":" + std::to_string(port);
}

}  // namespace

void FrameChannel::send(const Frame& f) { t_.send_bytes(encode_frame(f)); }

Frame FrameChannel::recv() {
  for (;;) {
    if (auto f = dec_.next()) return *f;
    uint8_t chunk[65536];
    size_t n = t_.recv_some(chunk);
    if (n == 0) {
      dec_.finish();  // partial frame -> truncated_frame
      fail(Errc::protocol, "peer closed the connection mid-session");
    }
    dec_.feed(std::span<const uint8_t>(chunk, n));
  }
}

std::unique_ptr<Transport> tcp_connect(const std::string& host_port) {
  auto [host, port] = split_host_port(host_port);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) fail(Errc::io, "cannot resolve " + host_port + ": " + gai_strerror(rc));

  // The peer may still be starting up; retry refused connections briefly.
  int fd = -1;
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
        ::freeaddrinfo(res);
        set_recv_timeout(fd);
        return std::make_unique<FdTransport>(fd);
      }
      ::close(fd);
      fd = -1;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  ::freeaddrinfo(res);
  fail(Errc::io, "cannot connect to " + host_port);
}

TcpListener::TcpListener(const std::string& host_port) {
  auto [host, port] = split_host_port(host_port);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) fail(Errc::io, "cannot resolve " + host_port + ": " + gai_strerror(rc));
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd_ < 0) continue;
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd_, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd_, 1) == 0) break;
    ::close(fd_);
    fd_ = -1;
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) fail(Errc::io, "cannot listen on " + host_port);
  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&ss), &len);
  bound_ = describe_sockaddr(ss);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Transport> TcpListener::accept_one() {
  for (;;) {
    int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) {
      set_recv_timeout(fd);
      return std::make_unique<FdTransport>(fd);
    }
    if (errno != EINTR) fail(Errc::io, std::string("accept failed: ") + std::strerror(errno));
  }
}

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> loopback_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
    fail(Errc::io, std::string("socketpair failed: ") + std::strerror(errno));
  return {std::make_unique<FdTransport>(fds[0]), std::make_unique<FdTransport>(fds[1])};
}

namespace {

// Summary fields shared verbatim between the roles and the in-process
// pipeline; any divergence here would break cross-mode byte equality.
struct ClassicalState {
  uint64_t sifted = 0;
  uint64_t sampled = 0;
  uint64_t mismatches = 0;
  double estimate = 0.0;
  double hint = 0.0;
  uint64_t corrected_bits = 0;
};

DistillSummary make_summary(const ClassicalState& st, const ReconciliationTranscript& tr,
                            const ExperimentConfig& cfg, bool verified, double tau,
                            uint64_t final_bits) {
  DistillSummary d;
  d.sifted_bits = st.sifted;
  d.sampled_bits = st.sampled;
  d.sample_mismatches = st.mismatches;
  d.qber_estimate = st.estimate;
  d.qber_hint = st.hint;
  d.corrected_bits = st.corrected_bits;
  d.reconcile_parities = tr.total_parities;
  d.reconcile_flips = tr.flip_positions.size();
  d.reconcile_passes = static_cast<uint32_t>(tr.rounds.size());
  d.leakage_bits = tr.total_parities + 64;
  d.tau = tau;
  d.final_bits = verified ? final_bits : 0;
  d.verified = verified;
  (void)cfg;
  return d;
}

double session_tau(const ExperimentConfig& cfg, double estimate) {
  return compression_factor(std::clamp(estimate, 0.0, 0.499), cfg.source.mean_photon_number);
}

}  // namespace

SessionArtifacts run_session_sender(const ExperimentConfig& cfg, uint64_t seed,
                                    uint64_t n_slots, const DistillOptions& opts,
                                    Transport& transport) {
  validate_config(cfg);
  FrameChannel ch(transport);
  auto [rec, log] = simulate_session(cfg, seed, n_slots);
  ClassicalSeeds seeds = derive_classical_seeds(seed);

  ch.send(Frame{MsgType::hello, {kProtocolVersion}});
  Frame h = expect(ch, MsgType::hello);
  if (h.payload.size() != 1 || h.payload[0] != kProtocolVersion)
    fail(Errc::protocol, "peer speaks a different protocol version");

  ch.send(Frame{MsgType::event_transfer, encode_detection_log(log)});
  expect_empty(expect(ch, MsgType::event_transfer));

  // The announcement names slots only; the sender reconstructs its key from
  // its phase record and never inspects detector ids.
  ch.send(Frame{MsgType::sift_announce, {}});
  Frame sa = expect(ch, MsgType::sift_announce);
  KeyMaterial a;
  a.session_id = rec.session_id;
  a.stage = KeyStage::sifted;
  {
    PayloadReader r(sa.payload);
    uint64_t count = r.u64();
    if (count != log.events.size()) fail(Errc::protocol, "announcement count is wrong");
    uint64_t prev = 0;
    for (uint64_t i = 0; i < count; ++i) {
      uint64_t slot = r.u64();
      if (slot == 0 || slot >= n_slots || (i > 0 && slot <= prev))
        fail(Errc::protocol, "announced slots must be strictly increasing and in range");
      prev = slot;
      a.bits.push_back(rec.phases.get(slot) ^ rec.phases.get(slot - 1));
    }
    r.expect_end();
  }

  ClassicalState st;
  st.sifted = a.bits.size();
  uint64_t n = a.bits.size();
  uint64_t k = static_cast<uint64_t>(opts.sample_fraction * static_cast<double>(n));
  std::vector<uint64_t> pos = sample_positions(n, k, seeds.sample);
  BitVector a_sample;
  for (uint64_t p : pos) a_sample.push_back(a.bits.get(p));
  {
    Frame f;
    f.type = MsgType::sample;
    put_u64_le(f.payload, seeds.classical);
    put_u64_le(f.payload, k);
    auto bytes = a_sample.to_bytes();
    f.payload.insert(f.payload.end(), bytes.begin(), bytes.end());
    ch.send(f);
  }
  Frame sresp = expect(ch, MsgType::sample);
  if (sresp.payload.size() != (k + 7) / 8)
    fail(Errc::protocol, "sample response has the wrong size");
  BitVector b_sample = BitVector::from_bytes(sresp.payload, k);
  st.sampled = k;
  st.mismatches = a_sample.hamming_distance(b_sample);
  st.estimate = k > 0 ? static_cast<double>(st.mismatches) / static_cast<double>(k) : 0.0;
  st.hint = std::clamp(st.estimate, 0.005, 0.3);

  KeyMaterial a2 = a;
  a2.bits = a.bits.without_positions(pos);
  a2.stage = KeyStage::sampled;
  st.corrected_bits = a2.bits.size();

  CascadeOptions copts;
  copts.qber_hint = st.hint;
  copts.seed = seeds.cascade;
  CascadeEngine eng(a2.bits.size(), copts);
  uint64_t counter = 0;
  while (auto q = eng.next_query()) {
    bool pa = a2.bits.parity_at(eng.positions(*q));
    Frame f;
    f.type = MsgType::parity;
    put_u64_le(f.payload, counter);
    put_u8(f.payload, pa ? 1 : 0);
    ch.send(f);
    Frame resp = expect(ch, MsgType::parity);
    PayloadReader r(resp.payload);
    if (r.u64() != counter) fail(Errc::protocol, "parity counter out of step");
    bool pb = r.u8() != 0;
    r.expect_end();
    eng.advance(pa, pb);
    eng.take_flips();  // the sender's key is the reference; nothing to apply
    ++counter;
  }
  if (eng.failed()) {
    ch.send(error_frame(kErrNonConvergence, "reconciliation still dirty after the pass limit"));
    fail(Errc::non_convergence, "reconciliation still dirty after the pass limit");
  }

  ch.send(Frame{MsgType::flip, {}});
  Frame fl = expect(ch, MsgType::flip);
  {
    PayloadReader r(fl.payload);
    uint64_t count = r.u64();
    const auto& mine = eng.transcript().flip_positions;
    if (count != mine.size()) fail(Errc::protocol, "flip audit count disagrees");
    for (uint64_t i = 0; i < count; ++i)
      if (r.u64() != mine[i]) fail(Errc::protocol, "flip audit positions disagree");
    r.expect_end();
  }

  uint64_t hash_a = toeplitz_hash64(a2.bits, seeds.verify);
  {
    Frame f;
    f.type = MsgType::verify;
    put_u64_le(f.payload, seeds.verify);
    put_u64_le(f.payload, hash_a);
    ch.send(f);
  }
  Frame vresp = expect(ch, MsgType::verify);
  PayloadReader vr(vresp.payload);
  uint64_t hash_b = vr.u64();
  vr.expect_end();
  bool ok = hash_a == hash_b;

  uint64_t leakage = eng.transcript().total_parities + 64;
  double tau = session_tau(cfg, st.estimate);
  uint64_t m = final_length(a2.bits.size(), tau, leakage, cfg.protocol.pa_margin_bits);

  SessionArtifacts art;
  art.transcript = eng.transcript();
  if (ok) {
    Frame f;
    f.type = MsgType::pa_seed;
    put_u64_le(f.payload, seeds.pa);
    put_u64_le(f.payload, m);
    ch.send(f);
    expect_empty(expect(ch, MsgType::pa_seed));
    KeyMaterial pre = a2;
    pre.leakage_bits = leakage;
    art.final_key = privacy_amplify(pre, m, seeds.pa);
  } else {
    art.final_key.session_id = a.session_id;
    art.final_key.stage = KeyStage::final;
  }

  {
    Frame f;
    f.type = MsgType::done;
    put_u64_le(f.payload, seed);
    ch.send(f);
    expect_empty(expect(ch, MsgType::done));
  }

  DistillSummary summary = make_summary(st, eng.transcript(), cfg, ok, tau, m);
  art.report = build_run_report(cfg, seed, n_slots, log, summary);
  return art;
}

SessionArtifacts run_session_receiver(const ExperimentConfig& cfg, Transport& transport) {
  validate_config(cfg);
  FrameChannel ch(transport);
  try {
    Frame h = ch.recv();
    if (h.type == MsgType::error) raise_remote(h);
    if (h.type != MsgType::hello) fail(Errc::protocol, "expected hello first");
    if (h.payload.size() != 1 || h.payload[0] != kProtocolVersion)
      fail(Errc::protocol, "peer speaks a different protocol version");
    ch.send(Frame{MsgType::hello, {kProtocolVersion}});

    Frame et = expect(ch, MsgType::event_transfer);
    DetectionLog log = decode_detection_log(et.payload);
    ch.send(Frame{MsgType::event_transfer, {}});

    expect_empty(expect(ch, MsgType::sift_announce));
    KeyMaterial b;
    b.session_id = log.session_id;
    b.stage = KeyStage::sifted;
    {
      Frame f;
      f.type = MsgType::sift_announce;
      put_u64_le(f.payload, log.events.size());
      for (const DetectionEvent& ev : log.events) {
        put_u64_le(f.payload, ev.slot_index);
        b.bits.push_back(ev.detector_id != 0);
      }
      ch.send(f);
    }

    Frame sf = expect(ch, MsgType::sample);
    ClassicalState st;
    st.sifted = b.bits.size();
    ClassicalSeeds seeds;
    KeyMaterial b2 = b;
    {
      PayloadReader r(sf.payload);
      seeds = seeds_from_classical(r.u64());
      uint64_t k = r.u64();
      uint64_t n = b.bits.size();
      if (k > n) fail(Errc::protocol, "sample size exceeds the sifted key");
      BitVector a_sample = BitVector::from_bytes(r.bytes((k + 7) / 8), k);
      r.expect_end();
      std::vector<uint64_t> pos = sample_positions(n, k, seeds.sample);
      BitVector b_sample;
      for (uint64_t p : pos) b_sample.push_back(b.bits.get(p));
      st.sampled = k;
      st.mismatches = a_sample.hamming_distance(b_sample);
      st.estimate = k > 0 ? static_cast<double>(st.mismatches) / static_cast<double>(k) : 0.0;
      st.hint = std::clamp(st.estimate, 0.005, 0.3);
      b2.bits = b.bits.without_positions(pos);
      b2.stage = KeyStage::sampled;
      Frame resp;
      resp.type = MsgType::sample;
      auto bytes = b_sample.to_bytes();
      resp.payload.insert(resp.payload.end(), bytes.begin(), bytes.end());
      ch.send(resp);
    }
    st.corrected_bits = b2.bits.size();

    CascadeOptions copts;
    copts.qber_hint = st.hint;
    copts.seed = seeds.cascade;
    CascadeEngine eng(b2.bits.size(), copts);
    std::vector<uint64_t> audit;
    uint64_t counter = 0;
    for (;;) {
      Frame f = ch.recv();
      if (f.type == MsgType::error) raise_remote(f);
      if (f.type == MsgType::parity) {
        auto q = eng.next_query();
        if (!q) fail(Errc::protocol, "parity frame after reconciliation finished");
        PayloadReader r(f.payload);
        if (r.u64() != counter) fail(Errc::protocol, "parity counter out of step");
        bool pa = r.u8() != 0;
        r.expect_end();
        bool pb = b2.bits.parity_at(eng.positions(*q));
        eng.advance(pa, pb);
        for (uint64_t p : eng.take_flips()) {
          b2.bits.flip(p);
          audit.push_back(p);
        }
        Frame resp;
        resp.type = MsgType::parity;
        put_u64_le(resp.payload, counter);
        put_u8(resp.payload, pb ? 1 : 0);
        ch.send(resp);
        ++counter;
        continue;
      }
      if (f.type == MsgType::flip) {
        expect_empty(f);
        if (eng.next_query())
          fail(Errc::protocol, "peer stopped reconciling before the engine finished");
        if (eng.failed())
          fail(Errc::non_convergence, "reconciliation still dirty after the pass limit");
        Frame resp;
        resp.type = MsgType::flip;
        put_u64_le(resp.payload, audit.size());
        for (uint64_t p : audit) put_u64_le(resp.payload, p);
        ch.send(resp);
        break;
      }
      fail(Errc::protocol, "unexpected frame during reconciliation");
    }
    b2.stage = KeyStage::reconciled;

    Frame vf = expect(ch, MsgType::verify);
    PayloadReader vr(vf.payload);
    uint64_t vseed = vr.u64();
    uint64_t hash_a = vr.u64();
    vr.expect_end();
    if (vseed != seeds.verify) fail(Errc::protocol, "verification seed disagrees");
    uint64_t hash_b = toeplitz_hash64(b2.bits, seeds.verify);
    bool ok = hash_a == hash_b;
    {
      Frame resp;
      resp.type = MsgType::verify;
      put_u64_le(resp.payload, hash_b);
      ch.send(resp);
    }

    uint64_t leakage = eng.transcript().total_parities + 64;
    double tau = session_tau(cfg, st.estimate);
    uint64_t m_expected = final_length(b2.bits.size(), tau, leakage, cfg.protocol.pa_margin_bits);

    SessionArtifacts art;
    art.transcript = eng.transcript();

    Frame nf = ch.recv();
    if (nf.type == MsgType::error) raise_remote(nf);
    if (nf.type == MsgType::pa_seed) {
      if (!ok) fail(Errc::protocol, "privacy amplification ordered on an unverified key");
      PayloadReader r(nf.payload);
      uint64_t pseed = r.u64();
      uint64_t m = r.u64();
      r.expect_end();
      if (pseed != seeds.pa) fail(Errc::protocol, "amplification seed disagrees");
      // Both sides compute the final length from shared knowledge; a
      // mismatch means the two processes run different configs.
      if (m != m_expected)
        fail(Errc::protocol, "final length disagrees; configs probably differ");
      KeyMaterial pre = b2;
      pre.leakage_bits = leakage;
      art.final_key = privacy_amplify(pre, m, pseed);
      ch.send(Frame{MsgType::pa_seed, {}});
      nf = ch.recv();
      if (nf.type == MsgType::error) raise_remote(nf);
    } else if (ok) {
      fail(Errc::protocol, "peer skipped privacy amplification on a verified key");
    } else {
      art.final_key.session_id = b.session_id;
      art.final_key.stage = KeyStage::final;
    }

    if (nf.type != MsgType::done) fail(Errc::protocol, "expected done");
    PayloadReader dr(nf.payload);
    uint64_t sim_seed = dr.u64();
    dr.expect_end();
    ch.send(Frame{MsgType::done, {}});

    DistillSummary summary = make_summary(st, eng.transcript(), cfg, ok, tau, m_expected);
    art.report = build_run_report(cfg, sim_seed, log.slot_count, log, summary);
    if (!ok) {
      art.final_key = KeyMaterial{};
      art.final_key.session_id = b.session_id;
      art.final_key.stage = KeyStage::final;
    }
    return art;
  } catch (const Error& e) {
    // Best effort: tell the peer why before propagating.
    uint8_t code = e.code() == Errc::non_convergence ? kErrNonConvergence
                   : e.code() == Errc::protocol      ? kErrProtocol
                                                     : kErrInternal;
    try {
      ch.send(error_frame(code, e.what()));
    } catch (...) {
    }
    throw;
  }
}

void write_run_artifacts(const std::string& out_base, const SessionArtifacts& art,
                         bool write_key) {
  write_text_file(out_base + ".report.json", run_report_json(art.report));
  write_text_file(out_base + ".transcript.txt", transcript_text(art.transcript));
  if (write_key) write_key_file(out_base + ".key.bin", art.final_key.bits);
}

}  // namespace dpsq
