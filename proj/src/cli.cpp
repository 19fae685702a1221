#include "qnet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "qnet/control/http_api.hpp"
#include "qnet/control/service.hpp"
#include "qnet/qnic_serial.hpp"
#include "qnet/topology_json.hpp"

namespace qnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::Corrupt: return kExitIo;
    case ErrorCode::Schema:
    case ErrorCode::PortRange:
    case ErrorCode::Fanout:
    case ErrorCode::NoPath:
    case ErrorCode::Lane:
    case ErrorCode::Capacity:
    case ErrorCode::Path:
    case ErrorCode::Timing:
    case ErrorCode::UnknownDevice:
    case ErrorCode::Resource:
    case ErrorCode::Unroutable:
    case ErrorCode::Conflict:
    case ErrorCode::Precondition: return kExitFindings;
    default: return kExitRuntime;
  }
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << text)) throw Error(ErrorCode::Io, "cannot write " + p.string());
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Schema, what + ": " + e.what());
  }
}

void print_error(std::ostream& err, const Error& e) { err << to_string(e.code()) << '\t' << e.what() << '\n'; }

control::RunSettings run_settings(const json& doc) {
  control::RunSettings r;
  if (!doc.is_object()) throw Error(ErrorCode::Schema, "run must be an object");
  r.duration_s = doc.value("duration_s", r.duration_s);
  r.seed = doc.value("seed", r.seed);
  r.apc_threshold = doc.value("apc_threshold", r.apc_threshold);
  r.apc_max_iters = doc.value("apc_max_iters", r.apc_max_iters);
  r.apc_iters_per_interval = doc.value("apc_iters_per_interval", r.apc_iters_per_interval);
  r.apc_sample_ms = doc.value("apc_sample_ms", r.apc_sample_ms);
  r.qkd_timeout_s = doc.value("qkd_timeout_s", r.qkd_timeout_s);
  if (r.duration_s <= 0) throw Error(ErrorCode::Schema, "run.duration_s must be positive");
  return r;
}

std::string convergence_jsonl(const std::vector<control::ApcOutcome>& apc) {
  std::string out;
  for (const auto& a : apc) {
    if (!a.skipped.empty()) continue;
    for (const auto& s : a.initial.trace)
      out += json{{"endpoint", a.setting.endpoint}, {"phase", "lock"}, {"iteration", s.iteration},
                  {"angles", s.angles}, {"signal", s.signal}}.dump() + "\n";
    for (std::size_t k = 0; k < a.interval_signals.size(); ++k)
      out += json{{"endpoint", a.setting.endpoint}, {"phase", "track"}, {"interval", k},
                  {"signal", a.interval_signals[k]}}.dump() + "\n";
  }
  return out;
}

json qkd_report(const qkd::SessionReport& r, std::span<const double> qs) {
  std::vector<double> all(qs.begin(), qs.end());
  all.push_back(r.estimate.q);
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  json rows = json::array();
  for (const auto& row : qkd::key_rate_table(r.estimate.remaining.size(), all))
    rows.push_back({{"q", row.q}, {"sifted", row.sifted}, {"final_bits", row.final_bits}, {"fraction", row.fraction}});
  return {{"transcript", qkd::transcript(r)}, {"rate_table", rows}};
}

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::Bind, "address must be host:port");
  try {
    return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::Bind, "bad port in " + addr);
  }
}

}  // namespace

topology::NetworkTopology topology_from_document(const json& doc) {
  if (doc.is_object() && doc.contains("hubs") && doc["hubs"].is_number_integer()) {
    const int hubs = doc["hubs"].get<int>();
    if (hubs < 1 || hubs > 64) throw Error(ErrorCode::Schema, "hubs must be 1..64");
    return topology::build_network(hubs);
  }
  return topology::topology_from_json(doc);
}

Scenario load_scenario(const std::string& path) {
  const auto doc = parse_json(read_file(path), path);
  if (!doc.is_object() || doc.value("schema", std::string{}) != "scenario.v1")
    throw Error(ErrorCode::Schema, "expected schema scenario.v1");
  Scenario s;
  const json topo = doc.value("topology", json{{"hubs", 2}});
  if (topo.is_string()) {
    const auto file = fs::path(path).parent_path() / topo.get<std::string>();
    s.topology = topology_from_document(parse_json(read_file(file), file.string()));
  } else {
    s.topology = topology_from_document(topo);
  }
  if (!doc.contains("design")) throw Error(ErrorCode::Schema, "scenario has no design");
  s.design = doc["design"];
  s.run = run_settings(doc.value("run", json::object()));
  if (doc.contains("rate_table_q")) s.rate_table_q = doc["rate_table_q"].get<std::vector<double>>();
  return s;
}

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  try {
    auto scenario = load_scenario(args.scenario);
    if (args.seed) scenario.run.seed = *args.seed;
    const fs::path dir(args.out_dir);
    fs::create_directories(dir);

    const auto start = scenario.design.contains("window") ? scenario.design["window"].value("start_s", std::int64_t{0}) : 0;
    control::ServiceOptions opts;
    opts.archive_dir = (dir / "archives").string();
    opts.run = scenario.run;
    opts.clock = [start] { return start; };
    control::ControlPlane plane(scenario.topology, opts);

    const auto rec = plane.submit(scenario.design);
    if (!rec.findings.empty()) {
      for (const auto& f : rec.findings) err << to_string(f.code) << '\t' << f.element << ": " << f.message << '\n';
      return kExitFindings;
    }
    plane.schedule(rec.request.request_id);
    const auto id = plane.instantiate(rec.request.request_id);
    plane.wait(id);
    const auto snap = plane.monitor(id);
    const auto archived = plane.archive(id);
    if (snap.state == control::InstanceState::Failed) {
      err << "E_DEVICE\t" << snap.failure << '\n';
      return kExitRuntime;
    }
    const auto result = plane.result(id);

    std::string csv = timing::counts_csv_header(result.plan) + "\n";
    for (const auto& r : result.counts) csv += timing::counts_csv_row(result.plan, r) + "\n";
    write_file(dir / "counts.csv", csv);
    if (std::any_of(result.apc.begin(), result.apc.end(), [](const auto& a) { return a.skipped.empty(); }))
      write_file(dir / "convergence.jsonl", convergence_jsonl(result.apc));
    out << "instantiation " << id << " " << control::to_string(snap.state) << ", " << result.counts.size()
        << " intervals, archive " << archived.path << '\n';
    if (rec.request.qkd) {
      if (!result.qkd) {
        err << result.qkd_error << '\n';
        return kExitRuntime;
      }
      const auto report = qkd_report(*result.qkd, scenario.rate_table_q);
      write_file(dir / "qkd_report.json", report.dump(2) + "\n");
      std::vector<qkd::RateRow> rows;
      for (const auto& r : report["rate_table"])
        rows.push_back({r["q"], r["sifted"], r["final_bits"], r["fraction"]});
      out << "q = " << result.qkd->estimate.q << ", final key " << result.qkd->distilled.key_a.size() << " bits\n"
          << qkd::format_rate_table(rows);
      if (result.qkd->aborted) return kExitRuntime;
    }
    return kExitOk;
  } catch (const Error& e) {
    print_error(err, e);
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "E_IO\t" << e.what() << '\n';
    return kExitIo;
  }
}

int cmd_serve(const ServeArgs& args, std::ostream& out, std::ostream& err,
              const std::function<void(int, int)>& wait) {
  try {
    auto t = args.topology.empty() ? topology::build_network(2)
                                   : topology_from_document(parse_json(read_file(args.topology), args.topology));
    const auto [host, port] = split_addr(args.addr);
    control::ServiceOptions opts;
    opts.archive_dir = args.archive_dir;
    opts.background = true;
    control::ControlPlane plane(std::move(t), opts);
    control::ApiServer api(plane);
    api.bind(host, port);
    qnic::SerialServer serial(plane);
    serial.listen(host, port == 0 ? 0 : port + 1);
    api.start();
    out << "http " << host << ":" << api.port() << " serial " << host << ":" << serial.port() << std::endl;
    wait(api.port(), serial.port());
    api.stop();
    serial.stop();
    plane.shutdown();
    out << "archived " << plane.instantiations().size() << " instantiations" << std::endl;
    return kExitOk;
  } catch (const Error& e) {
    print_error(err, e);
    return exit_code(e.code());
  }
}

int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err) {
  try {
    out << control::archive_report(control::load_archive(args.archive), args.format);
    return kExitOk;
  } catch (const Error& e) {
    print_error(err, e);
    return exit_code(e.code());
  }
}

}  // namespace qnet::cli
