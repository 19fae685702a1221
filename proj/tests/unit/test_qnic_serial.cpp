#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>

#include "qnet/control/compiler.hpp"
#include "qnet/qnic_serial.hpp"

using namespace qnet;
using namespace qnet::control;
using nlohmann::json;

namespace {

json design(const std::string& id) {
  json doc = json::parse(R"({
    "schema": "design.v1", "subscriber_id": "alice",
    "window": {"start_s": 0, "end_s": 3600},
    "sources": [{"id": "src", "hub": 0, "pair_rate_hz": 200000, "arms": {"A": "a", "B": "b"}}],
    "endpoints": [
      {"id": "a", "node": "H0.QN1", "receiver": {"kind": "linear"}},
      {"id": "b", "node": "H1.QN2", "receiver": {"kind": "linear"}}
    ],
    "pairs": [{"id": "ab", "a": "a", "b": "b", "channel_a": 0, "channel_b": 1}]
  })");
  doc["request_id"] = id;
  return doc;
}

ServiceOptions options(bool hold) {
  ServiceOptions o;
  o.archive_dir = (std::filesystem::temp_directory_path() / "qnet_test_serial").string();
  o.clock = [] { return std::int64_t{0}; };
  o.run.duration_s = 0.5;
  o.hold_runs = hold;
  return o;
}

std::string roundtrip(int fd, const std::string& line) {
  const std::string out = line + "\n";
  REQUIRE(::send(fd, out.data(), out.size(), 0) == static_cast<ssize_t>(out.size()));
  std::string in;
  char c;
  while (::recv(fd, &c, 1, 0) == 1 && c != '\n') in.push_back(c);
  if (!in.empty() && in.back() == '\r') in.pop_back();
  return in;
}

}  // namespace

TEST_CASE("serial: status, window, scope and syntax") {
  ControlPlane cp(topology::build_network(2), options(true));
  cp.submit(design("r"));
  cp.schedule("r");
  const auto id = cp.instantiate("r");
  const auto tag = cp.request("r").config.endpoints[0].tag;
  qnic::SerialSession s(cp, "alice", id, tag);
  CHECK(s.handle("STAT?") == "STAT ACTIVE");
  CHECK(s.handle("WIN?") == "WIN 1000");
  CHECK(s.handle("SING? 99") == "ERR 02 SCOPE");
  CHECK(s.handle("SING? 0") == "SING 0 0");
  CHECK(s.handle("COIN? 3") == "ERR 02 SCOPE");
  CHECK(s.handle("COIN? nope") == "ERR 02 SCOPE");
  CHECK(s.handle("HELLO") == "ERR 01 SYNTAX");
  CHECK(s.handle("SING?") == "ERR 01 SYNTAX");
  CHECK(s.handle("SING? x1") == "ERR 01 SYNTAX");
  CHECK(s.handle("STAT? now") == "ERR 01 SYNTAX");
  CHECK(s.handle("") == "ERR 01 SYNTAX");
  CHECK(s.handle(std::string(300, 'S')) == "ERR 01 SYNTAX");
  CHECK(s.handle("SING?\t0\x01") == "ERR 01 SYNTAX");

  qnic::SerialSession other(cp, "bob", id, tag);
  CHECK(other.handle("STAT?") == "ERR 02 SCOPE");
  qnic::SerialSession nothing(cp, "alice", "I42", tag);
  CHECK(nothing.handle("STAT?") == "ERR 02 SCOPE");
  cp.begin(id);
  cp.wait(id);
  CHECK(s.handle("STAT?") == "STAT COMPLETED");
}

TEST_CASE("serial: coincidence count against expected rates") {
  ControlPlane cp(topology::build_network(2), options(false));
  cp.submit(design("r"));
  cp.schedule("r");
  const auto id = cp.instantiate("r");
  const auto c = cp.request("r").config;
  qnic::SerialSession s(cp, "alice", id, c.endpoints[0].tag);

  const auto links = build_links(c, cp.topology(), config_switch_states(cp.topology(), c));
  const auto rates = optics::expected_rates(optics::rate_config(links[0].link), 1000.0);
  // Aligned psi-plus on equal analyzers: half the coincidences land on (0, 1).
  const double interval_s = static_cast<double>(c.interval_ps) / 1e12;
  const double expected = 0.5 * rates.coincidences_hz * interval_s;
  const auto reply = s.handle("COIN? 0");
  REQUIRE(reply.rfind("COIN 0 ", 0) == 0);
  const double got = std::stod(reply.substr(7));
  CHECK(std::abs(got - expected) <= 4.0 * std::sqrt(expected));
  CHECK(s.handle("COIN? ab") == "COIN ab " + reply.substr(7));

  const auto latest = cp.monitor(id).latest;
  REQUIRE(latest);
  const auto singles = latest->singles.at({c.endpoints[0].tag, 0});
  CHECK(s.handle("SING? 0") == "SING 0 " + std::to_string(singles));
}

TEST_CASE("serial: answers never go back in time during a run") {
  auto opts = options(false);
  opts.background = true;
  opts.run.duration_s = 1.0;
  ControlPlane cp(topology::build_network(2), opts);
  cp.submit(design("r"));
  cp.schedule("r");
  const auto id = cp.instantiate("r");
  qnic::SerialSession s(cp, "alice", id, cp.request("r").config.endpoints[0].tag);
  std::size_t seen = 0;
  for (int i = 0; i < 200 && cp.monitor(id).state == InstanceState::Active; ++i) {
    s.handle("COIN? 0");
    const auto snap = cp.monitor(id);
    CHECK(snap.intervals >= seen);
    seen = snap.intervals;
  }
  cp.wait(id);
}

TEST_CASE("serial server over TCP") {
  ControlPlane cp(topology::build_network(2), options(false));
  cp.submit(design("r"));
  cp.schedule("r");
  const auto id = cp.instantiate("r");
  qnic::SerialServer server(cp);
  server.listen("127.0.0.1", 0);
  REQUIRE(server.port() > 0);

  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(server.port()));
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  CHECK(roundtrip(fd, "STAT?") == "ERR 01 SYNTAX");
  CHECK(roundtrip(fd, "BIND alice " + id + " " + std::to_string(cp.request("r").config.endpoints[0].tag)) == "OK");
  CHECK(roundtrip(fd, "STAT?\r") == "STAT COMPLETED");
  CHECK(roundtrip(fd, "SING? 99") == "ERR 02 SCOPE");
  ::close(fd);

  CHECK_THROWS_AS(qnic::SerialServer(cp).listen("127.0.0.1", server.port()), Error);
  server.stop();
}
