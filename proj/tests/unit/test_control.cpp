#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "design_gen.hpp"
#include "qnet/control/compiler.hpp"
#include "qnet/control/scheduler.hpp"
#include "qnet/control/validate.hpp"

using namespace qnet;
using namespace qnet::control;
using nlohmann::json;
using topology::SwitchId;
using topology::SwitchRole;

namespace {

json two_node_design() {
  return json::parse(R"({
    "schema": "design.v1", "request_id": "r1", "subscriber_id": "alice",
    "window": {"start_s": 0, "end_s": 60},
    "sources": [{"id": "src", "hub": 0, "mode": "entangled", "arms": {"A": "qn1", "B": "qn2"}}],
    "endpoints": [
      {"id": "qn1", "node": "H0.QN1", "receiver": {"kind": "bucket"}},
      {"id": "qn2", "node": "H0.QN2", "receiver": {"kind": "bucket"}}
    ],
    "pairs": [{"id": "p0", "a": "qn1", "b": "qn2"}]
  })");
}

bool has_code(const Findings& f, ErrorCode code) {
  return std::any_of(f.begin(), f.end(), [&](const Finding& x) { return x.code == code; });
}

std::string describe(const Findings& f) {
  std::string s;
  for (const auto& x : f) s += std::string(to_string(x.code)) + " " + x.element + ": " + x.message + "\n";
  return s;
}

CompiledConfig source_claim(const std::string& id, std::int64_t start, std::int64_t end,
                            std::vector<std::pair<HubId, int>> slots) {
  CompiledConfig c;
  c.request_id = id;
  c.subscriber_id = "sub";
  c.window_start_s = start;
  c.window_end_s = end;
  for (auto [h, s] : slots) {
    SourceSetting ss;
    ss.hub = h;
    ss.slot = s;
    c.sources.push_back(ss);
  }
  return c;
}

}  // namespace

TEST_CASE("design.v1 parses and round-trips") {
  const auto t = topology::build_network(2);
  const auto req = design_from_json(two_node_design(), t);
  CHECK(req.request_id == "r1");
  REQUIRE(req.sources.size() == 1);
  CHECK(req.sources[0].arm_a == "qn1");
  REQUIRE(req.endpoints.size() == 2);
  CHECK(req.endpoints[0].node == parse_node_ref("H0.QN1", t));
  const auto again = design_from_json(to_json(req, t), t);
  CHECK(to_json(again, t) == to_json(req, t));
}

TEST_CASE("design.v1 rejects malformed documents") {
  const auto t = topology::build_network(1);
  auto doc = two_node_design();
  doc["sources"][0]["arms"]["A"] = "ghost";
  CHECK_THROWS_AS(design_from_json(doc, t), Error);
  doc = two_node_design();
  doc["endpoints"][0]["node"] = "H5.QN1";
  try {
    design_from_json(doc, t);
    FAIL("expected E_SCHEMA");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Schema);
  }
  doc = two_node_design();
  doc["window"]["end_s"] = 0;
  CHECK_THROWS_AS(design_from_json(doc, t), Error);
  doc = two_node_design();
  doc["endpoints"][1]["id"] = "qn1";
  CHECK_THROWS_AS(design_from_json(doc, t), Error);
}

TEST_CASE("compile: one entangled source to two local nodes") {
  const auto t = topology::build_network(2);
  const auto c = compile_request(design_from_json(two_node_design(), t), t);
  REQUIRE(c.sources.size() == 1);
  CHECK(c.sources[0].enabled);
  CHECK(c.sources[0].mode == optics::PrepareMode::Entangled);
  CHECK(c.switches.at(SwitchId{0, SwitchRole::Ring}).size() == 2);
  CHECK(c.timing_pairs.size() == 1);
  CHECK(c.routes.size() == 2);

  // Re-resolve every route and compare against the emitted mappings.
  const auto states = config_switch_states(t, c);
  std::set<std::pair<SwitchId, std::pair<int, int>>> used;
  for (const auto& r : c.routes) {
    const auto path = route_path(t, states, c, r);
    CHECK(path.contiguous());
    CHECK(path.endpoint_b == path_endpoint(*c.endpoint(r.endpoint)));
    for (const auto& hop : path.switch_hops) used.insert(hop);
  }
  for (const auto& [sw, maps] : c.switches) {
    if (sw.role != SwitchRole::Ring && sw.role != SwitchRole::Internal) continue;
    for (const auto& m : maps) CHECK(used.count({sw, m}) == 1);
  }
  CHECK(validate_config(c, t).empty());
}

TEST_CASE("compile is deterministic and config.v1 round-trips") {
  const auto t = topology::build_network(3);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto req = design_from_json(oracle::random_design(rng, 3, "r" + std::to_string(i)), t);
    const auto a = compile_request(req, t);
    const auto b = compile_request(req, t);
    CHECK(to_json(a) == to_json(b));
    CHECK(to_json(config_from_json(to_json(a))) == to_json(a));
  }
}

TEST_CASE("compile: empty design gives empty config") {
  const auto t = topology::build_network(1);
  NetworkConfigRequest req;
  req.request_id = "empty";
  const auto c = compile_request(req, t);
  CHECK(c.empty());
  CHECK(c.resources().empty());
  CHECK(validate_config(c, t).empty());
}

TEST_CASE("compile: five sources on one hub") {
  const auto t = topology::build_network(1);
  NetworkConfigRequest req;
  req.request_id = "five";
  for (int i = 0; i < 5; ++i) req.sources.push_back({"s" + std::to_string(i), 0, std::nullopt, {}, 1e5, "", ""});
  try {
    compile_request(req, t);
    FAIL("expected E_RESOURCE");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Resource);
  }
}

TEST_CASE("compile: detector budget") {
  const auto t = topology::build_network(1);
  NetworkConfigRequest req;
  req.request_id = "det";
  for (int i = 0; i < 3; ++i) {
    DesignEndpoint e;
    e.id = "e" + std::to_string(i);
    e.node = static_cast<NodeId>(i);
    e.receiver = optics::ReceiverKind::Bbm92;
    req.endpoints.push_back(e);
  }
  try {
    compile_request(req, t);
    FAIL("expected E_RESOURCE");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Resource);
  }
}

TEST_CASE("compile: cross-hub routes take the short way round") {
  const auto t = topology::build_network(5);
  auto doc = two_node_design();
  doc["endpoints"][1]["node"] = "H4.QN3";
  const auto c = compile_request(design_from_json(doc, t), t);
  const auto states = config_switch_states(t, c);
  const auto path = route_path(t, states, c, c.routes[1]);
  std::set<HubId> hubs;
  for (const auto& [sw, rc] : path.switch_hops) hubs.insert(sw.hub);
  CHECK(hubs == std::set<HubId>{0, 4});
  CHECK(validate_config(c, t).empty());
}

TEST_CASE("compile then validate holds on fuzzed designs") {
  std::mt19937_64 rng(2024);
  int ok = 0;
  for (int i = 0; i < 300; ++i) {
    const int hubs = 1 + static_cast<int>(rng() % 4);
    const auto t = topology::build_network(hubs);
    const auto doc = oracle::random_design(rng, hubs, "f" + std::to_string(i));
    const auto c = compile_request(design_from_json(doc, t), t);
    const auto f = validate_config(c, t);
    if (f.empty()) ++ok;
    else INFO(doc.dump(), "\n", describe(f));
  }
  CHECK(ok == 300);
}

TEST_CASE("validate: fan-out on a 60x60 switch") {
  const auto t = topology::build_network(1);
  CompiledConfig c;
  c.switches[{0, SwitchRole::Ring}] = {{0, 20}, {1, 20}};
  CHECK(has_code(validate_config(c, t), ErrorCode::Fanout));
  c.switches[{0, SwitchRole::Ring}] = {{0, 20}, {0, 21}};
  CHECK(has_code(validate_config(c, t), ErrorCode::Fanout));
}

TEST_CASE("validate: port range and unknown switch") {
  const auto t = topology::build_network(1);
  CompiledConfig c;
  c.switches[{0, SwitchRole::Ring}] = {{0, 60}};
  CHECK(has_code(validate_config(c, t), ErrorCode::PortRange));
  c.switches.clear();
  c.switches[{3, SwitchRole::Ring}] = {{0, 1}};
  CHECK(has_code(validate_config(c, t), ErrorCode::UnknownDevice));
}

TEST_CASE("validate: nine detector channels on one hub") {
  const auto t = topology::build_network(1);
  CompiledConfig c;
  for (int i = 0; i < 9; ++i) {
    EndpointSetting e;
    e.id = "e" + std::to_string(i);
    e.hub = 0;
    e.measure_lane = i % 4;
    e.tag = hub_measure_tag(0);
    e.detector_channels = {i};
    c.endpoints.push_back(e);
  }
  CHECK(has_code(validate_config(c, t), ErrorCode::Capacity));
}

TEST_CASE("validate: broken path and stray timing pair") {
  const auto t = topology::build_network(2);
  auto c = compile_request(design_from_json(two_node_design(), t), t);
  auto broken = c;
  broken.switches.erase(SwitchId{0, SwitchRole::Ring});
  CHECK(has_code(validate_config(broken, t), ErrorCode::Path));
  auto stray = c;
  stray.timing_pairs[0].a.channel = 7;
  CHECK(has_code(validate_config(stray, t), ErrorCode::Timing));
}

TEST_CASE("validate reports calendar conflicts") {
  const auto t = topology::build_network(1);
  const auto c = compile_request(design_from_json(two_node_design(), t), t);
  Calendar cal;
  auto other = c;
  other.request_id = "other";
  REQUIRE(cal.schedule(other).accepted());
  CHECK(has_code(validate_config(c, t, &cal), ErrorCode::Conflict));
  auto later = c;
  later.window_start_s = 60;
  later.window_end_s = 120;
  CHECK(validate_config(later, t, &cal).empty());
}

TEST_CASE("scheduler examples") {
  Calendar cal;
  CHECK(cal.schedule(source_claim("a", 0, 100, {{0, 0}})).accepted());
  CHECK(cal.schedule(source_claim("b", 0, 100, {{1, 0}})).accepted());
  const auto c = cal.schedule(source_claim("c", 50, 150, {{0, 0}}));
  REQUIRE_FALSE(c.accepted());
  REQUIRE(c.conflicts.size() == 1);
  CHECK(c.conflicts[0].request_id == "a");
  CHECK(c.conflicts[0].shared == std::vector<std::string>{"H0.source0"});
  try {
    cal.schedule_or_throw(source_claim("c", 50, 150, {{0, 0}}));
    FAIL("expected E_CONFLICT");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Conflict);
  }
  // Half-open windows touch without overlapping.
  CHECK(cal.schedule(source_claim("d", 100, 200, {{0, 0}})).accepted());
  // Same request twice returns the held window.
  const auto again = cal.schedule(source_claim("a", 0, 100, {{0, 0}}));
  REQUIRE(again.accepted());
  CHECK(again.window->request_id == "a");
  CHECK(cal.accepted().size() == 3);
  CHECK(cal.release("a"));
  CHECK(cal.schedule(source_claim("c", 50, 150, {{0, 1}})).accepted());
  CHECK_THROWS_AS(cal.schedule(source_claim("bad", 10, 10, {})), Error);
}

TEST_CASE("scheduler batch is FIFO within priority") {
  Calendar cal;
  std::vector<PendingRequest> batch{{source_claim("low", 0, 10, {{0, 0}}), 0},
                                    {source_claim("high", 0, 10, {{0, 0}}), 5},
                                    {source_claim("high2", 0, 10, {{0, 0}}), 5}};
  const auto out = schedule_batch(cal, batch);
  CHECK_FALSE(out[0].accepted());
  CHECK(out[1].accepted());
  CHECK_FALSE(out[2].accepted());
}

TEST_CASE("scheduler agrees with a pairwise scan on random requests") {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 5; ++round) {
    Calendar cal;
    struct Req {
      std::int64_t start, end;
      std::set<std::pair<HubId, int>> slots;
    };
    std::vector<Req> reqs;
    std::vector<bool> accepted_by_oracle;
    for (int i = 0; i < 100; ++i) {
      Req r;
      r.start = static_cast<std::int64_t>(rng() % 1000);
      r.end = r.start + 1 + static_cast<std::int64_t>(rng() % 200);
      const int n = 1 + static_cast<int>(rng() % 3);
      for (int k = 0; k < n; ++k) r.slots.insert({static_cast<HubId>(rng() % 3), static_cast<int>(rng() % 4)});
      reqs.push_back(r);
      bool ok = true;
      for (std::size_t j = 0; j < reqs.size() - 1; ++j) {
        if (!accepted_by_oracle[j]) continue;
        const auto& o = reqs[j];
        const bool overlap = r.start < o.end && o.start < r.end;
        bool shared = false;
        for (const auto& s : r.slots) shared = shared || o.slots.count(s);
        ok = ok && !(overlap && shared);
      }
      accepted_by_oracle.push_back(ok);
      const auto out = cal.schedule(
          source_claim("q" + std::to_string(i), r.start, r.end, {r.slots.begin(), r.slots.end()}));
      CHECK(out.accepted() == ok);
    }
    const auto windows = cal.accepted();
    for (std::size_t i = 0; i < windows.size(); ++i)
      for (std::size_t j = i + 1; j < windows.size(); ++j) {
        const auto& a = windows[i];
        const auto& b = windows[j];
        std::vector<std::string> common;
        std::set_intersection(a.resources.begin(), a.resources.end(), b.resources.begin(), b.resources.end(),
                              std::back_inserter(common));
        CHECK_FALSE((a.start_s < b.end_s && b.start_s < a.end_s && !common.empty()));
      }
  }
}

TEST_CASE("switch overrides reach the compiled config and validation") {
  const auto t = topology::build_network(2);
  auto doc = two_node_design();
  doc["switch_overrides"] = {{"H0.ring", {{61, 0}}}};
  const auto req = design_from_json(doc, t);
  CHECK(design_from_json(to_json(req, t), t).switch_overrides == req.switch_overrides);
  const auto c = compile_request(req, t);
  const auto findings = validate_config(c, t);
  CHECK(has_code(findings, ErrorCode::PortRange));

  doc["switch_overrides"] = {{"H0.nowhere", {{0, 0}}}};
  CHECK_THROWS_AS(design_from_json(doc, t), Error);
  doc["switch_overrides"] = {{"H0.ring", {{0}}}};
  CHECK_THROWS_AS(design_from_json(doc, t), Error);
}
