#pragma once

// qnet run | serve | report, as library calls so tests can drive them.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "qnet/control/archive.hpp"
#include "qnet/control/engine.hpp"

namespace qnet::cli {

enum ExitCode : int { kExitOk = 0, kExitIo = 1, kExitFindings = 2, kExitRuntime = 3 };

int exit_code(ErrorCode code);

/// scenario.v1: a design.v1 document plus topology and run parameters.
struct Scenario {
  topology::NetworkTopology topology;
  nlohmann::json design;
  control::RunSettings run;
  std::vector<double> rate_table_q{0.0, 0.01, 0.02, 0.05, 0.08, 0.1};
};

/// {"hubs": n} or a topology.v1 document.
topology::NetworkTopology topology_from_document(const nlohmann::json& doc);
/// Throws E_IO for an unreadable file, E_SCHEMA for a bad document.
Scenario load_scenario(const std::string& path);

struct RunArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};
int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);

struct ServeArgs {
  std::string addr = "127.0.0.1:8080";
  std::string topology;
  std::string archive_dir = "archives";
};
/// Serves HTTP on addr and the QNIC serial protocol on the next port
/// until `wait` returns, then archives every finished run.
int cmd_serve(const ServeArgs& args, std::ostream& out, std::ostream& err,
              const std::function<void(int http_port, int serial_port)>& wait);

struct ReportArgs {
  std::string archive;
  control::ReportFormat format = control::ReportFormat::Csv;
};
int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err);

}  // namespace qnet::cli
