#pragma once

// JSON-over-HTTP front end for a ControlPlane. The bearer token is taken
// as the caller's subscriber id.

#include <memory>
#include <string>

#include "qnet/control/service.hpp"

namespace qnet::control {

/// HTTP status for an error code.
int http_status(ErrorCode code);

/// {code, message, findings[]}
nlohmann::json error_body(ErrorCode code, const std::string& message, const Findings& findings = {});
nlohmann::json to_json(const Finding& f);
nlohmann::json to_json(const ScheduleWindow& w);

class ApiServer {
 public:
  explicit ApiServer(ControlPlane& plane);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Port 0 picks a free port. Throws E_BIND.
  void bind(const std::string& host, int port);
  int port() const;
  /// Serve on a worker thread until stop().
  void start();
  /// Serve on the calling thread until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace qnet::control
