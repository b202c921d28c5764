#pragma once

#include <stdexcept>
#include <string>

namespace dpsq {

enum class Errc {
  io,
  parse,
  missing_key,
  invariant,
  domain,
  no_root,
  unsorted_input,
  session_mismatch,
  slot_out_of_range,
  length_mismatch,
  empty_key,
  non_convergence,
  output_too_long,
  truncated_frame,
  unknown_frame_type,
  oversize_frame,
  protocol,
  verify_failed,
  state,
};

class Error : public std::runtime_error {
 public:
  Error(Errc c, std::string msg) : std::runtime_error(std::move(msg)), code_(c) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc c, const std::string& msg) { throw Error(c, msg); }

}  // namespace dpsq
