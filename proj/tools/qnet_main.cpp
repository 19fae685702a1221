#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "qnet/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qnet: desk-scale quantum network emulator"};
  app.require_subcommand(1);

  qnet::cli::RunArgs run;
  std::uint64_t seed = 0;
  auto* run_cmd = app.add_subcommand("run", "run a scenario end to end");
  run_cmd->add_option("scenario", run.scenario, "scenario.v1 file")->required();
  auto* seed_opt = run_cmd->add_option("--seed", seed, "override the scenario seed");
  run_cmd->add_option("--out", run.out_dir, "output directory")->capture_default_str();

  qnet::cli::ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "serve the control plane over HTTP");
  serve_cmd->add_option("--addr", serve.addr, "host:port")->capture_default_str();
  serve_cmd->add_option("--topology", serve.topology, "topology.v1 file");

  qnet::cli::ReportArgs report;
  std::string format = "csv";
  auto* report_cmd = app.add_subcommand("report", "tabulate an archive");
  report_cmd->add_option("archive", report.archive, "archive zip")->required();
  report_cmd->add_option("--format", format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (*run_cmd) {
    if (*seed_opt) run.seed = seed;
    return qnet::cli::cmd_run(run, std::cout, std::cerr);
  }
  if (*report_cmd) {
    report.format = format == "json" ? qnet::control::ReportFormat::Json : qnet::control::ReportFormat::Csv;
    return qnet::cli::cmd_report(report, std::cout, std::cerr);
  }
  // Block the stop signals before any server thread starts, then wait on them here.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
  return qnet::cli::cmd_serve(serve, std::cout, std::cerr, [&](int, int) {
    int sig = 0;
    sigwait(&stop_signals, &sig);
  });
}
