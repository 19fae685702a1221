#pragma once

// QNIC count-data serial protocol. One ASCII command per line:
//   SING? <ch>     -> SING <ch> <n>
//   COIN? <pair>   -> COIN <pair> <n>
//   STAT?          -> STAT <state>
//   WIN?           -> WIN <ps>
// Errors come back in band as ERR 01 SYNTAX or ERR 02 SCOPE.

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "qnet/control/service.hpp"

namespace qnet::qnic {

inline constexpr std::size_t kMaxLine = 256;
inline constexpr const char* kErrSyntax = "ERR 01 SYNTAX";
inline constexpr const char* kErrScope = "ERR 02 SCOPE";

/// A QNIC at one Quantum Node (event tag) acting for one subscriber on one
/// instantiation. Counts come from the latest closed interval.
class SerialSession {
 public:
  SerialSession(const control::ControlPlane& plane, std::string subscriber_id, std::string instantiation_id,
                std::uint8_t node_tag);

  /// Response line without the terminator. Never throws.
  std::string handle(std::string_view line);

 private:
  const control::ControlPlane* plane_;
  std::string subscriber_;
  std::string instantiation_;
  std::uint8_t node_;
  optics::TimePs last_interval_ = -1;
};

/// Line server over TCP. A connection first sends
/// `BIND <subscriber> <instantiation> <node>` (answered `OK` or an ERR
/// line), then serial commands. Lines end in LF; CR is ignored.
class SerialServer {
 public:
  explicit SerialServer(const control::ControlPlane& plane);
  ~SerialServer();
  SerialServer(const SerialServer&) = delete;
  SerialServer& operator=(const SerialServer&) = delete;

  /// Throws E_BIND. Port 0 picks a free port.
  void listen(const std::string& host, int port);
  int port() const { return port_; }
  void stop();

 private:
  void accept_loop();
  void serve(int fd);

  const control::ControlPlane* plane_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex clients_mu_;
  std::vector<std::thread> clients_;
  std::vector<int> client_fds_;
};

}  // namespace qnet::qnic
