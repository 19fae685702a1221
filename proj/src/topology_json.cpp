#include "qnet/topology_json.hpp"

namespace qnet::topology {

using nlohmann::json;

namespace {

const char* shape_name(SwitchShape s) {
  switch (s) {
    case SwitchShape::k60x60: return "60x60";
    case SwitchShape::k20x20: return "20x20";
    case SwitchShape::k8x24: return "8x24";
  }
  return "?";
}

SwitchShape parse_shape(const std::string& s) {
  if (s == "60x60") return SwitchShape::k60x60;
  if (s == "20x20") return SwitchShape::k20x20;
  if (s == "8x24") return SwitchShape::k8x24;
  throw Error(ErrorCode::Schema, "unknown switch shape '" + s + "'");
}

const char* kind_name(ElementKind k) {
  switch (k) {
    case ElementKind::Hub: return "hub";
    case ElementKind::Node: return "node";
    case ElementKind::ControlCenter: return "control_center";
  }
  return "?";
}

ElementKind parse_kind(const std::string& s) {
  if (s == "hub") return ElementKind::Hub;
  if (s == "node") return ElementKind::Node;
  if (s == "control_center") return ElementKind::ControlCenter;
  throw Error(ErrorCode::Schema, "unknown element kind '" + s + "'");
}

BundleKind parse_bundle_kind(const std::string& s) {
  if (s == "Primary") return BundleKind::Primary;
  if (s == "Secondary") return BundleKind::Secondary;
  if (s == "LAN") return BundleKind::Lan;
  throw Error(ErrorCode::Schema, "unknown bundle kind '" + s + "'");
}

json pairs_json(const std::vector<std::pair<int, int>>& v) {
  json out = json::array();
  for (const auto& [x, y] : v) out.push_back({x, y});
  return out;
}

std::vector<std::pair<int, int>> pairs_from(const json& j) {
  std::vector<std::pair<int, int>> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::Schema, "expected [a, b] pair");
    out.emplace_back(p[0].get<int>(), p[1].get<int>());
  }
  return out;
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

}  // namespace

json to_json(const NetworkTopology& t) {
  json doc;
  doc["schema"] = kTopologySchema;
  json hubs = json::array();
  for (const auto& h : t.hubs) {
    hubs.push_back({{"id", h.id},
                    {"name", h.name},
                    {"sources", h.sources},
                    {"prepare_modules", h.prepare_modules},
                    {"measure_modules", h.measure_modules},
                    {"detector_channels", h.detector_channels},
                    {"apc_channels", h.apc_channels},
                    {"node_ports", h.node_ports},
                    {"timing_links", h.timing_links},
                    {"ring_switch", shape_name(h.ring_shape)},
                    {"internal_switch", shape_name(h.internal_shape)},
                    {"select_switch", shape_name(h.select_shape)},
                    {"ring_jumpers", pairs_json(h.ring_jumpers)}});
  }
  doc["hubs"] = hubs;
  json nodes = json::array();
  for (const auto& n : t.nodes)
    nodes.push_back({{"id", n.id}, {"hub", n.hub}, {"spoke", n.spoke}, {"name", n.name}});
  doc["nodes"] = nodes;
  json links = json::array();
  for (const auto& l : t.links) {
    json bundles = json::array();
    for (const auto& b : l.bundles)
      bundles.push_back({{"kind", to_string(b.kind)},
                         {"qubit_fibers", b.qubit_fibers},
                         {"timing_fibers", b.timing_fibers},
                         {"lan_fibers", b.lan_fibers},
                         {"per_fiber_loss_db", b.per_fiber_loss_db},
                         {"length_km", b.length_km},
                         {"birefringence", {b.birefringence.x(), b.birefringence.y(), b.birefringence.z()}}});
    links.push_back({{"id", l.id},
                     {"a", {{"kind", kind_name(l.a.kind)}, {"index", l.a.index}}},
                     {"b", {{"kind", kind_name(l.b.kind)}, {"index", l.b.index}}},
                     {"bundles", bundles}});
  }
  doc["links"] = links;
  doc["control_center"] = {{"name", t.control_center.name}};
  doc["hub_loss"] = {{"switch_db", t.hub_loss.switch_db},
                     {"cable_db", t.hub_loss.cable_db},
                     {"jumper_db", t.hub_loss.jumper_db}};
  doc["defaults"] = {{"loss_db_per_km", t.defaults.loss_db_per_km},
                     {"spoke_length_km", t.defaults.spoke_length_km},
                     {"ring_length_km", t.defaults.ring_length_km},
                     {"control_length_km", t.defaults.control_length_km}};
  return doc;
}

NetworkTopology topology_from_json(const json& doc) {
  try {
    if (!doc.is_object() || doc.value("schema", "") != kTopologySchema)
      throw Error(ErrorCode::Schema, "document is not topology.v1");
    NetworkTopology t;
    if (auto it = doc.find("defaults"); it != doc.end()) {
      t.defaults.loss_db_per_km = field_or(*it, "loss_db_per_km", t.defaults.loss_db_per_km);
      t.defaults.spoke_length_km = field_or(*it, "spoke_length_km", t.defaults.spoke_length_km);
      t.defaults.ring_length_km = field_or(*it, "ring_length_km", t.defaults.ring_length_km);
      t.defaults.control_length_km = field_or(*it, "control_length_km", t.defaults.control_length_km);
    }
    for (const auto& h : doc.at("hubs")) {
      EquipmentHub hub;
      hub.id = h.at("id").get<HubId>();
      hub.name = field_or<std::string>(h, "name", "H" + std::to_string(hub.id));
      hub.sources = field_or(h, "sources", hub.sources);
      hub.prepare_modules = field_or(h, "prepare_modules", hub.prepare_modules);
      hub.measure_modules = field_or(h, "measure_modules", hub.measure_modules);
      hub.detector_channels = field_or(h, "detector_channels", hub.detector_channels);
      hub.apc_channels = field_or(h, "apc_channels", hub.apc_channels);
      hub.node_ports = field_or(h, "node_ports", hub.node_ports);
      hub.timing_links = field_or(h, "timing_links", hub.timing_links);
      hub.ring_shape = parse_shape(field_or<std::string>(h, "ring_switch", "60x60"));
      hub.internal_shape = parse_shape(field_or<std::string>(h, "internal_switch", "20x20"));
      hub.select_shape = parse_shape(field_or<std::string>(h, "select_switch", "8x24"));
      hub.ring_jumpers = h.contains("ring_jumpers") ? pairs_from(h["ring_jumpers"]) : default_ring_jumpers();
      t.hubs.push_back(std::move(hub));
    }
    for (const auto& n : doc.at("nodes")) {
      QuantumNode node;
      node.id = n.at("id").get<NodeId>();
      node.hub = n.at("hub").get<HubId>();
      node.spoke = n.at("spoke").get<int>();
      node.name = field_or<std::string>(n, "name", "node" + std::to_string(node.id));
      t.nodes.push_back(std::move(node));
    }
    for (const auto& l : doc.at("links")) {
      Link link;
      link.id = l.at("id").get<std::uint32_t>();
      link.a = {parse_kind(l.at("a").at("kind").get<std::string>()), l.at("a").at("index").get<std::uint32_t>()};
      link.b = {parse_kind(l.at("b").at("kind").get<std::string>()), l.at("b").at("index").get<std::uint32_t>()};
      for (const auto& b : l.at("bundles")) {
        const BundleKind kind = parse_bundle_kind(b.at("kind").get<std::string>());
        FiberBundle fb = FiberBundle::make(kind, b.value("length_km", 0.0), 0.0);
        fb.qubit_fibers = field_or(b, "qubit_fibers", fb.qubit_fibers);
        fb.timing_fibers = field_or(b, "timing_fibers", fb.timing_fibers);
        fb.lan_fibers = field_or(b, "lan_fibers", fb.lan_fibers);
        fb.per_fiber_loss_db = b.value("per_fiber_loss_db", 0.0);
        if (auto it = b.find("birefringence"); it != b.end()) {
          if (!it->is_array() || it->size() != 3) throw Error(ErrorCode::Schema, "birefringence needs 3 components");
          fb.birefringence = Vec3((*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>());
        }
        if (fb.per_fiber_loss_db < 0 || fb.length_km < 0)
          throw Error(ErrorCode::Schema, "bundle loss and length must be non-negative");
        link.bundles.push_back(fb);
      }
      t.links.push_back(std::move(link));
    }
    if (auto it = doc.find("control_center"); it != doc.end())
      t.control_center.name = field_or<std::string>(*it, "name", "CC");
    if (auto it = doc.find("hub_loss"); it != doc.end()) {
      t.hub_loss.switch_db = field_or(*it, "switch_db", t.hub_loss.switch_db);
      t.hub_loss.cable_db = field_or(*it, "cable_db", t.hub_loss.cable_db);
      t.hub_loss.jumper_db = field_or(*it, "jumper_db", t.hub_loss.jumper_db);
    }
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("topology.v1: ") + e.what());
  }
}

json to_json(const SwitchStates& states) {
  json out = json::object();
  for (const auto& [id, sw] : states.all()) {
    auto m = sw.mapping();
    if (!m.empty()) out[to_string(id)] = pairs_json(m);
  }
  return out;
}

SwitchStates switch_states_from_json(const NetworkTopology& t, const json& doc) {
  SwitchStates states(t);
  if (!doc.is_object()) throw Error(ErrorCode::Schema, "switch states must be an object");
  for (const auto& [key, value] : doc.items()) {
    auto id = parse_switch_id(key);
    if (!id || !states.contains(*id)) throw Error(ErrorCode::UnknownDevice, "unknown switch " + key);
    try {
      states.at(*id) = set_crossbar(states.at(*id), pairs_from(value));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Schema, key + ": " + e.what());
    }
  }
  return states;
}

}  // namespace qnet::topology
