#include "qnet/control/design.hpp"

#include <algorithm>
#include <set>

namespace qnet::control {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& msg) { throw Error(ErrorCode::Schema, msg); }

const char* mode_name(optics::PrepareMode m) { return m == optics::PrepareMode::Entangled ? "entangled" : "heralded"; }

optics::PrepareMode parse_mode(const std::string& s) {
  if (s == "entangled") return optics::PrepareMode::Entangled;
  if (s == "heralded") return optics::PrepareMode::Heralded;
  schema_error("unknown prepare mode '" + s + "'");
}

const char* arm_name(topology::Arm a) { return a == topology::Arm::A ? "A" : "B"; }

topology::Arm parse_arm(const std::string& s) {
  if (s == "A") return topology::Arm::A;
  if (s == "B") return topology::Arm::B;
  schema_error("unknown arm '" + s + "'");
}

topology::Bundle parse_bundle(const std::string& s) {
  if (s == "Primary") return topology::Bundle::Primary;
  if (s == "Secondary") return topology::Bundle::Secondary;
  schema_error("unknown bundle '" + s + "'");
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    schema_error(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) schema_error(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    schema_error(std::string("field '") + key + "': " + e.what());
  }
}

json detector_json(const optics::DetectorModel& d) {
  return {{"efficiency", d.efficiency},
          {"dark_count_hz", d.dark_count_hz},
          {"jitter_sigma_ps", d.jitter_sigma_ps},
          {"dead_time_ps", d.dead_time_ps}};
}

optics::DetectorModel detector_from(const json& j) {
  optics::DetectorModel d;
  d.efficiency = get_or(j, "efficiency", d.efficiency);
  d.dark_count_hz = get_or(j, "dark_count_hz", d.dark_count_hz);
  d.jitter_sigma_ps = get_or(j, "jitter_sigma_ps", d.jitter_sigma_ps);
  d.dead_time_ps = get_or(j, "dead_time_ps", d.dead_time_ps);
  if (d.efficiency < 0 || d.efficiency > 1 || d.dark_count_hz < 0 || d.jitter_sigma_ps < 0 || d.dead_time_ps < 0)
    schema_error("detector parameters out of range");
  return d;
}

json qkd_json(const QkdRequest& q) {
  return {{"a", q.a}, {"b", q.b}, {"target_coincidences", q.target_coincidences}, {"sample_fraction", q.sample_fraction}};
}

QkdRequest qkd_from(const json& j) {
  QkdRequest q;
  q.a = require<std::string>(j, "a");
  q.b = require<std::string>(j, "b");
  q.target_coincidences = get_or<std::uint64_t>(j, "target_coincidences", q.target_coincidences);
  q.sample_fraction = get_or(j, "sample_fraction", q.sample_fraction);
  if (!(q.sample_fraction > 0 && q.sample_fraction < 1)) schema_error("qkd sample_fraction must be in (0, 1)");
  return q;
}

json channel_key_json(timing::ChannelKey k) { return {{"node", k.node}, {"channel", k.channel}}; }

timing::ChannelKey channel_key_from(const json& j) {
  return {require<std::uint8_t>(j, "node"), require<std::uint8_t>(j, "channel")};
}

}  // namespace

std::uint8_t hub_measure_tag(HubId hub) { return static_cast<std::uint8_t>(128 + hub); }

std::optional<NodeId> parse_node_ref(const std::string& ref, const topology::NetworkTopology& t) {
  for (const auto& n : t.nodes)
    if (n.name == ref) return n.id;
  if (!ref.empty() && std::all_of(ref.begin(), ref.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    const auto id = static_cast<NodeId>(std::stoul(ref));
    if (id < t.node_count()) return id;
  }
  return std::nullopt;
}

const DesignEndpoint* NetworkConfigRequest::endpoint(const std::string& id) const {
  for (const auto& e : endpoints)
    if (e.id == id) return &e;
  return nullptr;
}

NetworkConfigRequest design_from_json(const json& doc, const topology::NetworkTopology& t) {
  if (!doc.is_object()) schema_error("design must be an object");
  if (get_or<std::string>(doc, "schema", kDesignSchema) != kDesignSchema) schema_error("expected schema design.v1");
  NetworkConfigRequest r;
  r.request_id = require<std::string>(doc, "request_id");
  r.subscriber_id = require<std::string>(doc, "subscriber_id");
  if (r.request_id.empty() || r.subscriber_id.empty()) schema_error("request_id and subscriber_id must be non-empty");
  r.priority = get_or(doc, "priority", 0);
  if (doc.contains("window")) {
    r.window_start_s = require<std::int64_t>(doc["window"], "start_s");
    r.window_end_s = require<std::int64_t>(doc["window"], "end_s");
  }
  if (r.window_end_s <= r.window_start_s) schema_error("window end must be after start");

  std::set<std::string> ids;
  for (const auto& e : doc.value("endpoints", json::array())) {
    DesignEndpoint ep;
    ep.id = require<std::string>(e, "id");
    if (!ids.insert(ep.id).second) schema_error("duplicate endpoint id '" + ep.id + "'");
    if (e.contains("node")) {
      const auto& nj = e["node"];
      const std::string ref = nj.is_string() ? nj.get<std::string>() : std::to_string(nj.get<long long>());
      ep.node = parse_node_ref(ref, t);
      if (!ep.node) schema_error("unknown node '" + ref + "'");
    } else if (e.contains("hub_measure")) {
      ep.measure_hub = e["hub_measure"].get<HubId>();
      if (ep.measure_hub >= t.hub_count()) schema_error("unknown hub in endpoint '" + ep.id + "'");
    } else {
      schema_error("endpoint '" + ep.id + "' needs node or hub_measure");
    }
    const json rx = e.value("receiver", json::object());
    ep.receiver = optics::parse_receiver_kind(get_or<std::string>(rx, "kind", "bucket"));
    ep.angle = get_or(rx, "angle", 0.0);
    if (rx.contains("basis_angles")) {
      const auto& b = rx["basis_angles"];
      if (!b.is_array() || b.size() != 2) schema_error("basis_angles needs two values");
      ep.basis_angle[0] = b[0].get<double>();
      ep.basis_angle[1] = b[1].get<double>();
    }
    ep.apc = get_or(e, "apc", false);
    r.endpoints.push_back(ep);
  }

  std::set<std::string> fed;
  std::set<std::string> source_ids;
  for (const auto& s : doc.value("sources", json::array())) {
    DesignSource src;
    src.id = require<std::string>(s, "id");
    if (!source_ids.insert(src.id).second) schema_error("duplicate source id '" + src.id + "'");
    src.hub = require<HubId>(s, "hub");
    if (src.hub >= t.hub_count()) schema_error("source '" + src.id + "' names an unknown hub");
    if (s.contains("slot")) src.slot = s["slot"].get<int>();
    src.mode = parse_mode(get_or<std::string>(s, "mode", "entangled"));
    src.pair_rate_hz = get_or(s, "pair_rate_hz", src.pair_rate_hz);
    if (!(src.pair_rate_hz > 0)) schema_error("pair_rate_hz must be positive");
    const json arms = s.value("arms", json::object());
    src.arm_a = get_or<std::string>(arms, "A", "");
    src.arm_b = get_or<std::string>(arms, "B", "");
    for (const auto* arm : {&src.arm_a, &src.arm_b}) {
      if (arm->empty()) continue;
      if (!ids.count(*arm)) schema_error("source '" + src.id + "' feeds unknown endpoint '" + *arm + "'");
      if (!fed.insert(*arm).second) schema_error("endpoint '" + *arm + "' is fed twice");
    }
    r.sources.push_back(src);
  }

  std::set<std::string> pair_ids;
  for (const auto& p : doc.value("pairs", json::array())) {
    DesignPair dp;
    dp.id = require<std::string>(p, "id");
    if (!pair_ids.insert(dp.id).second) schema_error("duplicate pair id '" + dp.id + "'");
    dp.a = require<std::string>(p, "a");
    dp.b = require<std::string>(p, "b");
    if (!ids.count(dp.a) || !ids.count(dp.b)) schema_error("pair '" + dp.id + "' names an unknown endpoint");
    dp.channel_a = get_or(p, "channel_a", 0);
    dp.channel_b = get_or(p, "channel_b", 0);
    r.pairs.push_back(dp);
  }
  if (doc.contains("qkd")) {
    r.qkd = qkd_from(doc["qkd"]);
    if (!ids.count(r.qkd->a) || !ids.count(r.qkd->b)) schema_error("qkd names an unknown endpoint");
  }
  if (doc.contains("timing")) {
    r.coincidence_window_ps = get_or<TimePs>(doc["timing"], "window_ps", r.coincidence_window_ps);
    r.interval_ps = get_or<TimePs>(doc["timing"], "interval_ps", r.interval_ps);
  }
  if (r.coincidence_window_ps <= 0 || r.interval_ps <= 0) schema_error("timing window and interval must be positive");
  if (doc.contains("detector")) r.detector = detector_from(doc["detector"]);
  r.drift_rate = get_or(doc, "drift_rate", 0.0);
  if (r.drift_rate < 0) schema_error("drift_rate must be non-negative");
  const json overrides = doc.value("switch_overrides", json::object());
  if (!overrides.is_object()) schema_error("switch_overrides must be an object");
  for (const auto& [name, maps] : overrides.items()) {
    const auto id = topology::parse_switch_id(name);
    if (!id) schema_error("unknown switch name '" + name + "'");
    if (!maps.is_array()) schema_error("switch_overrides entries are lists");
    for (const auto& m : maps) {
      if (!m.is_array() || m.size() != 2 || !m[0].is_number_integer() || !m[1].is_number_integer())
        schema_error("switch mapping entries are [row, col]");
      r.switch_overrides[*id].emplace_back(m[0].get<int>(), m[1].get<int>());
    }
  }
  return r;
}

json to_json(const NetworkConfigRequest& r, const topology::NetworkTopology& t) {
  json doc{{"schema", kDesignSchema},
           {"request_id", r.request_id},
           {"subscriber_id", r.subscriber_id},
           {"priority", r.priority},
           {"window", {{"start_s", r.window_start_s}, {"end_s", r.window_end_s}}}};
  json sources = json::array();
  for (const auto& s : r.sources) {
    json js{{"id", s.id}, {"hub", s.hub}, {"mode", mode_name(s.mode)}, {"pair_rate_hz", s.pair_rate_hz}};
    if (s.slot) js["slot"] = *s.slot;
    json arms = json::object();
    if (!s.arm_a.empty()) arms["A"] = s.arm_a;
    if (!s.arm_b.empty()) arms["B"] = s.arm_b;
    js["arms"] = arms;
    sources.push_back(js);
  }
  doc["sources"] = sources;
  json endpoints = json::array();
  for (const auto& e : r.endpoints) {
    json je{{"id", e.id}};
    if (e.node) je["node"] = t.node(*e.node).name;
    else je["hub_measure"] = e.measure_hub;
    je["receiver"] = {{"kind", optics::to_string(e.receiver)},
                      {"angle", e.angle},
                      {"basis_angles", {e.basis_angle[0], e.basis_angle[1]}}};
    je["apc"] = e.apc;
    endpoints.push_back(je);
  }
  doc["endpoints"] = endpoints;
  json pairs = json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"id", p.id}, {"a", p.a}, {"b", p.b}, {"channel_a", p.channel_a}, {"channel_b", p.channel_b}});
  doc["pairs"] = pairs;
  if (r.qkd) doc["qkd"] = qkd_json(*r.qkd);
  doc["timing"] = {{"window_ps", r.coincidence_window_ps}, {"interval_ps", r.interval_ps}};
  doc["detector"] = detector_json(r.detector);
  doc["drift_rate"] = r.drift_rate;
  if (!r.switch_overrides.empty()) {
    json ov = json::object();
    for (const auto& [id, maps] : r.switch_overrides) {
      json m = json::array();
      for (const auto& [row, col] : maps) m.push_back({row, col});
      ov[topology::to_string(id)] = m;
    }
    doc["switch_overrides"] = ov;
  }
  return doc;
}

// ---------------------------------------------------------------------------

const EndpointSetting* CompiledConfig::endpoint(const std::string& id) const {
  for (const auto& e : endpoints)
    if (e.id == id) return &e;
  return nullptr;
}

std::set<std::string> CompiledConfig::resources() const {
  std::set<std::string> out;
  auto hub = [](HubId h) { return "H" + std::to_string(h); };
  for (const auto& s : sources) out.insert(hub(s.hub) + ".source" + std::to_string(s.slot));
  for (const auto& [sw, maps] : switches)
    for (const auto& [r, c] : maps) {
      out.insert(topology::to_string(sw) + "/r" + std::to_string(r));
      out.insert(topology::to_string(sw) + "/c" + std::to_string(c));
    }
  for (const auto& e : endpoints) {
    out.insert(hub(e.hub) + ".measure" + std::to_string(e.measure_module));
    for (int c : e.detector_channels) out.insert(hub(e.hub) + ".det" + std::to_string(c));
  }
  for (const auto& a : apc) out.insert(hub(a.hub) + ".apc" + std::to_string(a.channel));
  return out;
}

std::size_t CompiledConfig::device_count() const {
  std::size_t n = sources.size() + apc.size() + switches.size();
  for (const auto& e : endpoints) n += 1 + e.detector_channels.size();
  return n;
}

json to_json(const CompiledConfig& c) {
  json doc{{"schema", kConfigSchema},
           {"request_id", c.request_id},
           {"subscriber_id", c.subscriber_id},
           {"window", {{"start_s", c.window_start_s}, {"end_s", c.window_end_s}}}};
  json sw = json::object();
  for (const auto& [id, maps] : c.switches) {
    json m = json::array();
    for (const auto& [r, col] : maps) m.push_back({r, col});
    sw[topology::to_string(id)] = m;
  }
  doc["switches"] = sw;
  json sources = json::array();
  for (const auto& s : c.sources)
    sources.push_back({{"id", s.design_id},
                       {"hub", s.hub},
                       {"slot", s.slot},
                       {"enabled", s.enabled},
                       {"mode", mode_name(s.mode)},
                       {"pair_rate_hz", s.pair_rate_hz},
                       {"prepare_module", s.prepare_module}});
  doc["sources"] = sources;
  json routes = json::array();
  for (const auto& r : c.routes)
    routes.push_back({{"endpoint", r.endpoint},
                      {"source_hub", r.source_hub},
                      {"source_slot", r.source_slot},
                      {"arm", arm_name(r.arm)},
                      {"bundle", topology::to_string(r.bundle)},
                      {"lane", r.lane}});
  doc["routes"] = routes;
  json endpoints = json::array();
  for (const auto& e : c.endpoints) {
    json je{{"id", e.id},
            {"hub", e.hub},
            {"measure_lane", e.measure_lane},
            {"measure_module", e.measure_module},
            {"receiver", optics::to_string(e.receiver)},
            {"angle", e.angle},
            {"basis_angles", {e.basis_angle[0], e.basis_angle[1]}},
            {"detector_channels", e.detector_channels},
            {"tag", e.tag}};
    if (e.node) je["node"] = *e.node;
    endpoints.push_back(je);
  }
  doc["endpoints"] = endpoints;
  json apc = json::array();
  for (const auto& a : c.apc) apc.push_back({{"hub", a.hub}, {"channel", a.channel}, {"endpoint", a.endpoint}});
  doc["apc"] = apc;
  json pairs = json::array();
  for (const auto& p : c.timing_pairs)
    pairs.push_back({{"id", p.id}, {"a", channel_key_json(p.a)}, {"b", channel_key_json(p.b)}, {"offset_ps", p.offset_ps}});
  doc["timing_pairs"] = pairs;
  if (c.qkd) doc["qkd"] = qkd_json(*c.qkd);
  doc["timing"] = {{"window_ps", c.coincidence_window_ps}, {"interval_ps", c.interval_ps}};
  doc["detector"] = detector_json(c.detector);
  doc["drift_rate"] = c.drift_rate;
  return doc;
}

CompiledConfig config_from_json(const json& doc) {
  if (!doc.is_object()) schema_error("config must be an object");
  if (get_or<std::string>(doc, "schema", kConfigSchema) != kConfigSchema) schema_error("expected schema config.v1");
  CompiledConfig c;
  c.request_id = require<std::string>(doc, "request_id");
  c.subscriber_id = require<std::string>(doc, "subscriber_id");
  if (doc.contains("window")) {
    c.window_start_s = require<std::int64_t>(doc["window"], "start_s");
    c.window_end_s = require<std::int64_t>(doc["window"], "end_s");
  }
  const json switches = doc.value("switches", json::object());
  for (const auto& [name, maps] : switches.items()) {
    const auto id = topology::parse_switch_id(name);
    if (!id) schema_error("bad switch id '" + name + "'");
    auto& v = c.switches[*id];
    for (const auto& p : maps) {
      if (!p.is_array() || p.size() != 2) schema_error("switch mapping entries are [row, col]");
      v.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
  }
  for (const auto& s : doc.value("sources", json::array())) {
    SourceSetting ss;
    ss.design_id = get_or<std::string>(s, "id", "");
    ss.hub = require<HubId>(s, "hub");
    ss.slot = require<int>(s, "slot");
    ss.enabled = get_or(s, "enabled", true);
    ss.mode = parse_mode(get_or<std::string>(s, "mode", "entangled"));
    ss.pair_rate_hz = get_or(s, "pair_rate_hz", ss.pair_rate_hz);
    ss.prepare_module = get_or(s, "prepare_module", 0);
    c.sources.push_back(ss);
  }
  for (const auto& r : doc.value("routes", json::array())) {
    RouteSetting rs;
    rs.endpoint = require<std::string>(r, "endpoint");
    rs.source_hub = require<HubId>(r, "source_hub");
    rs.source_slot = require<int>(r, "source_slot");
    rs.arm = parse_arm(require<std::string>(r, "arm"));
    rs.bundle = parse_bundle(get_or<std::string>(r, "bundle", "Primary"));
    rs.lane = get_or(r, "lane", 0);
    c.routes.push_back(rs);
  }
  for (const auto& e : doc.value("endpoints", json::array())) {
    EndpointSetting es;
    es.id = require<std::string>(e, "id");
    if (e.contains("node")) es.node = e["node"].get<NodeId>();
    es.hub = require<HubId>(e, "hub");
    es.measure_lane = get_or(e, "measure_lane", -1);
    es.measure_module = get_or(e, "measure_module", 0);
    es.receiver = optics::parse_receiver_kind(get_or<std::string>(e, "receiver", "bucket"));
    es.angle = get_or(e, "angle", 0.0);
    if (e.contains("basis_angles")) {
      es.basis_angle[0] = e["basis_angles"].at(0).get<double>();
      es.basis_angle[1] = e["basis_angles"].at(1).get<double>();
    }
    es.detector_channels = get_or(e, "detector_channels", std::vector<int>{});
    es.tag = get_or<std::uint8_t>(e, "tag", es.node ? static_cast<std::uint8_t>(*es.node) : hub_measure_tag(es.hub));
    c.endpoints.push_back(es);
  }
  for (const auto& a : doc.value("apc", json::array()))
    c.apc.push_back({require<HubId>(a, "hub"), require<int>(a, "channel"), get_or<std::string>(a, "endpoint", "")});
  for (const auto& p : doc.value("timing_pairs", json::array()))
    c.timing_pairs.push_back({require<std::string>(p, "id"), channel_key_from(p.at("a")), channel_key_from(p.at("b")),
                              get_or<TimePs>(p, "offset_ps", 0)});
  if (doc.contains("qkd")) c.qkd = qkd_from(doc["qkd"]);
  if (doc.contains("timing")) {
    c.coincidence_window_ps = get_or<TimePs>(doc["timing"], "window_ps", c.coincidence_window_ps);
    c.interval_ps = get_or<TimePs>(doc["timing"], "interval_ps", c.interval_ps);
  }
  if (doc.contains("detector")) c.detector = detector_from(doc["detector"]);
  c.drift_rate = get_or(doc, "drift_rate", 0.0);
  return c;
}

}  // namespace qnet::control
