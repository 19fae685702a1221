#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "qnet/cli.hpp"
#include "qnet/control/http_api.hpp"

#include <httplib.h>

using namespace qnet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kScenarios = QNET_SCENARIO_DIR;

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qnet_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const std::string& scenario, const fs::path& dir, std::optional<std::uint64_t> seed = {}) {
  std::ostringstream out, err;
  const int code = cli::cmd_run({scenario, seed, dir.string()}, out, err);
  return {code, out.str(), err.str()};
}

Outcome report(const std::string& archive, control::ReportFormat f) {
  std::ostringstream out, err;
  const int code = cli::cmd_report({archive, f}, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("cli run: bbm92 scenario, reproducible outputs") {
  const auto d1 = fresh_dir("run1"), d2 = fresh_dir("run2"), d3 = fresh_dir("run3");
  const auto a = run(kScenarios + "/bbm92_two_hubs.json", d1);
  INFO(a.err);
  REQUIRE(a.code == 0);
  REQUIRE(run(kScenarios + "/bbm92_two_hubs.json", d2).code == 0);
  for (const auto* f : {"counts.csv", "qkd_report.json", "convergence.jsonl"}) {
    REQUIRE(fs::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  const auto rep = json::parse(slurp(d1 / "qkd_report.json"));
  CHECK(rep["transcript"]["q"].get<double>() < 0.02);
  CHECK(rep["transcript"]["keys_match"] == true);
  CHECK(rep["transcript"]["final_length"].get<std::size_t>() > 0);
  CHECK(rep["rate_table"].size() >= 6);
  CHECK(a.out.find("fraction") != std::string::npos);

  REQUIRE(run(kScenarios + "/bbm92_two_hubs.json", d3, 99).code == 0);
  CHECK(slurp(d1 / "counts.csv") != slurp(d3 / "counts.csv"));
}

TEST_CASE("cli run: exit codes") {
  const auto dir = fresh_dir("codes");
  auto r = run(kScenarios + "/port_out_of_range.json", dir);
  CHECK(r.code == 2);
  CHECK(r.err.rfind("E_PORT_RANGE\t", 0) == 0);

  r = run((dir / "missing.json").string(), dir);
  CHECK(r.code == 1);
  CHECK(r.err.rfind("E_IO\t", 0) == 0);

  std::ofstream(dir / "broken.json") << "{\"schema\": ";
  r = run((dir / "broken.json").string(), dir);
  CHECK(r.code == 2);
  CHECK(r.err.rfind("E_SCHEMA\t", 0) == 0);

  std::ofstream(dir / "wrong.json") << R"({"schema": "scenario.v1", "design": {"schema": "design.v1"}})";
  r = run((dir / "wrong.json").string(), dir);
  CHECK(r.code == 2);

  // Five sources on one hub cannot be placed.
  auto doc = json::parse(slurp(kScenarios + "/bbm92_two_hubs.json"));
  doc["design"].erase("qkd");
  doc["design"]["pairs"] = json::array();
  auto& sources = doc["design"]["sources"];
  for (int k = 0; k < 4; ++k) sources.push_back({{"id", "extra" + std::to_string(k)}, {"hub", 0}, {"arms", json::object()}});
  std::ofstream(dir / "crowded.json") << doc.dump();
  r = run((dir / "crowded.json").string(), dir);
  CHECK(r.code == 2);
  CHECK(r.err.rfind("E_RESOURCE\t", 0) == 0);
}

TEST_CASE("cli exit-code table covers every error code") {
  using E = ErrorCode;
  const std::map<E, int> expected{
      {E::PortRange, 2},   {E::Fanout, 2},      {E::NoPath, 2},     {E::Lane, 2},          {E::Precondition, 2},
      {E::NoPeak, 3},      {E::Starved, 3},     {E::Unroutable, 2}, {E::Resource, 2},      {E::Conflict, 2},
      {E::Device, 3},      {E::UnknownHandle, 3}, {E::NotFinished, 3}, {E::Expired, 3},    {E::Scope, 3},
      {E::Code, 3},        {E::Disparity, 3},   {E::Timeout, 3},    {E::Empty, 3},         {E::AbortQber, 3},
      {E::Length, 3},      {E::Bind, 3},        {E::Corrupt, 1},    {E::Capacity, 2},      {E::Schema, 2},
      {E::Path, 2},        {E::Timing, 2},      {E::UnknownDevice, 2}, {E::State, 3},      {E::Io, 1},
      {E::Reconcile, 3}};
  CHECK(expected.size() == static_cast<std::size_t>(E::Reconcile) + 1);
  for (const auto& [code, exit] : expected) {
    INFO(to_string(code));
    CHECK(cli::exit_code(code) == exit);
  }
}

TEST_CASE("cli report: csv and json agree, truncation is caught") {
  const auto dir = fresh_dir("report");
  REQUIRE(run(kScenarios + "/bbm92_two_hubs.json", dir).code == 0);
  const auto zip = (dir / "archives" / "I1.zip").string();
  const auto csv = report(zip, control::ReportFormat::Csv);
  const auto js = report(zip, control::ReportFormat::Json);
  REQUIRE(csv.code == 0);
  REQUIRE(js.code == 0);
  CHECK(report(zip, control::ReportFormat::Csv).out == csv.out);

  std::vector<std::string> lines;
  std::istringstream in(csv.out);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  const auto doc = json::parse(js.out);
  const auto counts = slurp(dir / "counts.csv");
  const auto records = static_cast<std::size_t>(std::count(counts.begin(), counts.end(), '\n')) - 1;
  REQUIRE(lines.size() == records + 2);
  CHECK(doc["intervals"].size() == records);
  std::vector<std::string> header;
  std::istringstream hs(lines[0]);
  for (std::string h; std::getline(hs, h, ',');) header.push_back(h);
  for (std::size_t i = 0; i < records; ++i) {
    std::istringstream row(lines[i + 1]);
    std::size_t col = 0;
    for (std::string v; std::getline(row, v, ','); ++col)
      CHECK(doc["intervals"][i][header[col]].get<std::int64_t>() == std::stoll(v));
  }

  const auto bytes = slurp(zip);
  std::ofstream(dir / "short.zip", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  const auto bad = report((dir / "short.zip").string(), control::ReportFormat::Csv);
  CHECK(bad.code == 1);
  CHECK(bad.err.rfind("E_CORRUPT\t", 0) == 0);
  CHECK(report((dir / "absent.zip").string(), control::ReportFormat::Csv).code == 1);
}

TEST_CASE("cli serve: http round trip and archive flush on shutdown") {
  const auto dir = fresh_dir("serve");
  cli::ServeArgs args{"127.0.0.1:0", "", (dir / "archives").string()};
  std::ostringstream out, err;
  std::string instance;
  const int code = cli::cmd_serve(args, out, err, [&](int http_port, int serial_port) {
    CHECK(serial_port > 0);
    httplib::Client c("127.0.0.1", http_port);
    c.set_default_headers({{"Authorization", "Bearer alice"}});
    auto design = json::parse(slurp(kScenarios + "/bbm92_two_hubs.json"))["design"];
    design.erase("qkd");
    auto r = c.Post("/requests", design.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 201);
    CHECK(json::parse(r->body)["request_id"] == design["request_id"]);
    r = c.Get("/instantiations/I9");
    CHECK(r->status == 404);
    CHECK(json::parse(r->body)["code"] == "E_UNKNOWN_HANDLE");
    REQUIRE(c.Post("/requests/" + design["request_id"].get<std::string>() + "/schedule")->status == 200);
    r = c.Post("/instantiations", json{{"request_id", design["request_id"]}}.dump(), "application/json");
    REQUIRE(r->status == 201);
    instance = json::parse(r->body)["id"];
    for (int i = 0; i < 500; ++i) {
      const auto s = json::parse(c.Get("/instantiations/" + instance)->body);
      if (s["state"] == "COMPLETED") break;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  });
  CHECK(code == 0);
  REQUIRE(!instance.empty());
  CHECK(fs::exists(dir / "archives" / (instance + ".zip")));

  // A taken port is a bind failure.
  std::ostringstream err2;
  cli::cmd_serve(args, out, err, [&](int http_port, int) {
    cli::ServeArgs clash{"127.0.0.1:" + std::to_string(http_port), "", (dir / "archives").string()};
    CHECK(cli::cmd_serve(clash, out, err2, [](int, int) {}) == 3);
  });
  CHECK(err2.str().rfind("E_BIND\t", 0) == 0);
}
