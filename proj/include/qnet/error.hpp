#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qnet {

enum class ErrorCode {
  PortRange,
  Fanout,
  NoPath,
  Lane,
  Precondition,
  NoPeak,
  Starved,
  Unroutable,
  Resource,
  Conflict,
  Device,
  UnknownHandle,
  NotFinished,
  Expired,
  Scope,
  Code,
  Disparity,
  Timeout,
  Empty,
  AbortQber,
  Length,
  Bind,
  Corrupt,
  Capacity,
  Schema,
  Path,
  Timing,
  UnknownDevice,
  State,
  Io,
  Reconcile,
};

/// Wire name of an error code, e.g. "E_PORT_RANGE".
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// A non-fatal validation result. Validators return lists of these rather
/// than throwing.
struct Finding {
  ErrorCode code;
  std::string element;
  std::string message;
};

using Findings = std::vector<Finding>;

}  // namespace qnet
