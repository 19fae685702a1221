#include "qnet/error.hpp"

namespace qnet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::PortRange: return "E_PORT_RANGE";
    case ErrorCode::Fanout: return "E_FANOUT";
    case ErrorCode::NoPath: return "E_NO_PATH";
    case ErrorCode::Lane: return "E_LANE";
    case ErrorCode::Precondition: return "E_PRECONDITION";
    case ErrorCode::NoPeak: return "E_NO_PEAK";
    case ErrorCode::Starved: return "E_STARVED";
    case ErrorCode::Unroutable: return "E_UNROUTABLE";
    case ErrorCode::Resource: return "E_RESOURCE";
    case ErrorCode::Conflict: return "E_CONFLICT";
    case ErrorCode::Device: return "E_DEVICE";
    case ErrorCode::UnknownHandle: return "E_UNKNOWN_HANDLE";
    case ErrorCode::NotFinished: return "E_NOT_FINISHED";
    case ErrorCode::Expired: return "E_EXPIRED";
    case ErrorCode::Scope: return "E_SCOPE";
    case ErrorCode::Code: return "E_CODE";
    case ErrorCode::Disparity: return "E_DISPARITY";
    case ErrorCode::Timeout: return "E_TIMEOUT";
    case ErrorCode::Empty: return "E_EMPTY";
    case ErrorCode::AbortQber: return "E_ABORT_QBER";
    case ErrorCode::Length: return "E_LENGTH";
    case ErrorCode::Bind: return "E_BIND";
    case ErrorCode::Corrupt: return "E_CORRUPT";
    case ErrorCode::Capacity: return "E_CAPACITY";
    case ErrorCode::Schema: return "E_SCHEMA";
    case ErrorCode::Path: return "E_PATH";
    case ErrorCode::Timing: return "E_TIMING";
    case ErrorCode::UnknownDevice: return "E_UNKNOWN_DEVICE";
    case ErrorCode::State: return "E_STATE";
    case ErrorCode::Io: return "E_IO";
    case ErrorCode::Reconcile: return "E_RECONCILE";
  }
  return "E_UNKNOWN";
}

}  // namespace qnet
