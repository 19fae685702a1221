#include "qnet/topology.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>

namespace qnet::topology {

const char* to_string(BundleKind kind) {
  switch (kind) {
    case BundleKind::Primary: return "Primary";
    case BundleKind::Secondary: return "Secondary";
    case BundleKind::Lan: return "LAN";
  }
  return "?";
}

const char* to_string(Bundle bundle) {
  return bundle == Bundle::Primary ? "Primary" : "Secondary";
}

FiberBundle FiberBundle::make(BundleKind kind, double length_km, double loss_db_per_km) {
  FiberBundle b;
  b.kind = kind;
  if (kind == BundleKind::Lan) {
    b.qubit_fibers = 0;
    b.timing_fibers = 0;
    b.lan_fibers = 2;
  }
  b.length_km = length_km;
  b.per_fiber_loss_db = length_km * loss_db_per_km;
  return b;
}

// ---------------------------------------------------------------------------
// Crossbar

namespace {

std::pair<int, int> shape_dims(SwitchShape shape) {
  switch (shape) {
    case SwitchShape::k60x60: return {60, 60};
    case SwitchShape::k20x20: return {20, 20};
    case SwitchShape::k8x24: return {8, 24};
  }
  return {0, 0};
}

}  // namespace

CrossbarSwitch CrossbarSwitch::make(std::string id, SwitchShape shape,
                                    std::vector<std::pair<int, int>> jumpers) {
  CrossbarSwitch sw;
  sw.id = std::move(id);
  std::tie(sw.rows, sw.cols) = shape_dims(shape);
  sw.row_to_col.assign(sw.rows, -1);
  sw.jumpers = std::move(jumpers);
  return sw;
}

std::vector<std::pair<int, int>> CrossbarSwitch::mapping() const {
  std::vector<std::pair<int, int>> out;
  for (int r = 0; r < rows; ++r)
    if (row_to_col[r] >= 0) out.emplace_back(r, row_to_col[r]);
  return out;
}

std::optional<int> CrossbarSwitch::col_of(int row) const {
  if (row < 0 || row >= rows || row_to_col[row] < 0) return std::nullopt;
  return row_to_col[row];
}

std::optional<int> CrossbarSwitch::row_of(int col) const {
  for (int r = 0; r < rows; ++r)
    if (row_to_col[r] == col) return r;
  return std::nullopt;
}

CrossbarSwitch set_crossbar(const CrossbarSwitch& sw,
                            const std::vector<std::pair<int, int>>& mapping) {
  CrossbarSwitch out = sw;
  out.row_to_col.assign(sw.rows, -1);
  std::vector<bool> col_used(sw.cols, false);
  for (const auto& [r, c] : mapping) {
    if (r < 0 || r >= sw.rows || c < 0 || c >= sw.cols) {
      std::ostringstream msg;
      msg << sw.id << ": port (" << r << "," << c << ") outside " << sw.rows << "x" << sw.cols;
      throw Error(ErrorCode::PortRange, msg.str());
    }
    if (out.row_to_col[r] >= 0 || col_used[c]) {
      std::ostringstream msg;
      msg << sw.id << ": mapping (" << r << "," << c << ") reuses a row or column";
      throw Error(ErrorCode::Fanout, msg.str());
    }
    out.row_to_col[r] = c;
    col_used[c] = true;
  }
  return out;
}

std::vector<std::pair<int, int>> effective_connectivity(const CrossbarSwitch& sw) {
  std::vector<int> partner(sw.cols, -1);
  for (const auto& [x, y] : sw.jumpers) {
    partner[x] = y;
    partner[y] = x;
  }
  std::vector<int> col_to_row(sw.cols, -1);
  for (int r = 0; r < sw.rows; ++r)
    if (sw.row_to_col[r] >= 0) col_to_row[sw.row_to_col[r]] = r;

  std::vector<std::pair<int, int>> links;
  for (int r = 0; r < sw.rows; ++r) {
    const int c = sw.row_to_col[r];
    if (c < 0 || partner[c] < 0) continue;
    const int r2 = col_to_row[partner[c]];
    if (r2 > r) links.emplace_back(r, r2);
  }
  return links;
}

// ---------------------------------------------------------------------------
// Topology queries

const FiberBundle* Link::bundle(BundleKind kind) const {
  for (const auto& b : bundles)
    if (b.kind == kind) return &b;
  return nullptr;
}

int Link::total_fibers() const {
  int n = 0;
  for (const auto& b : bundles) n += b.total_fibers();
  return n;
}

const QuantumNode& NetworkTopology::node(NodeId id) const {
  for (const auto& n : nodes)
    if (n.id == id) return n;
  throw Error(ErrorCode::Precondition, "unknown node " + std::to_string(id));
}

std::optional<NodeId> NetworkTopology::node_at(HubId hub, int spoke) const {
  for (const auto& n : nodes)
    if (n.hub == hub && n.spoke == spoke) return n.id;
  return std::nullopt;
}

std::vector<const Link*> NetworkTopology::ring_links() const {
  std::vector<const Link*> out;
  if (hubs.empty()) return out;
  HubId h = hubs.front().id;
  for (std::size_t i = 0; i < hubs.size(); ++i) {
    const Link* l = ring_link_from(h);
    if (!l) break;
    out.push_back(l);
    h = l->b.index;
    if (h == hubs.front().id) break;
  }
  return out;
}

const Link* NetworkTopology::spoke_link(NodeId node) const {
  for (const auto& l : links)
    if (l.a.kind == ElementKind::Hub && l.b.kind == ElementKind::Node && l.b.index == node)
      return &l;
  return nullptr;
}

const Link* NetworkTopology::ring_link_from(HubId hub) const {
  for (const auto& l : links)
    if (l.a.kind == ElementKind::Hub && l.b.kind == ElementKind::Hub && l.a.index == hub)
      return &l;
  return nullptr;
}

HubId NetworkTopology::next_hub(HubId hub) const {
  const Link* l = ring_link_from(hub);
  if (!l) throw Error(ErrorCode::Precondition, "hub has no ring link");
  return l->b.index;
}

HubId NetworkTopology::prev_hub(HubId hub) const {
  for (const auto& l : links)
    if (l.a.kind == ElementKind::Hub && l.b.kind == ElementKind::Hub && l.b.index == hub)
      return l.a.index;
  throw Error(ErrorCode::Precondition, "hub has no incoming ring link");
}

std::vector<std::pair<int, int>> default_ring_jumpers() {
  std::vector<std::pair<int, int>> j;
  for (int c = ports::kRingJumperBase; c + 1 < 60; c += 2) j.emplace_back(c, c + 1);
  return j;
}

namespace {

EquipmentHub make_hub(HubId id) {
  EquipmentHub h;
  h.id = id;
  h.name = "H" + std::to_string(id);
  h.ring_jumpers = default_ring_jumpers();
  return h;
}

std::vector<FiberBundle> full_bundle_set(double length_km, double loss_per_km) {
  return {FiberBundle::make(BundleKind::Primary, length_km, loss_per_km),
          FiberBundle::make(BundleKind::Secondary, length_km, loss_per_km),
          FiberBundle::make(BundleKind::Lan, length_km, loss_per_km)};
}

void add_nodes_for_hub(NetworkTopology& t, HubId hub) {
  for (int k = 0; k < kNodesPerHub; ++k) {
    QuantumNode n;
    n.id = static_cast<NodeId>(t.nodes.size());
    n.hub = hub;
    n.spoke = k;
    n.name = "H" + std::to_string(hub) + ".QN" + std::to_string(k + 1);
    t.nodes.push_back(n);
  }
}

std::uint32_t next_link_id(const NetworkTopology& t) {
  std::uint32_t id = 0;
  for (const auto& l : t.links) id = std::max(id, l.id + 1);
  return id;
}

void add_spoke_links(NetworkTopology& t, HubId hub) {
  for (const auto& n : t.nodes) {
    if (n.hub != hub) continue;
    Link l;
    l.id = next_link_id(t);
    l.a = {ElementKind::Hub, hub};
    l.b = {ElementKind::Node, n.id};
    l.bundles = full_bundle_set(t.defaults.spoke_length_km, t.defaults.loss_db_per_km);
    t.links.push_back(l);
  }
}

}  // namespace

NetworkTopology build_network(int hub_count, const BundleDefaults& defaults) {
  if (hub_count < 1) throw Error(ErrorCode::Precondition, "hub_count must be >= 1");
  NetworkTopology t;
  t.defaults = defaults;
  for (int h = 0; h < hub_count; ++h) t.hubs.push_back(make_hub(h));
  for (int h = 0; h < hub_count; ++h) add_nodes_for_hub(t, h);
  for (int h = 0; h < hub_count; ++h) {
    Link l;
    l.id = next_link_id(t);
    l.a = {ElementKind::Hub, static_cast<std::uint32_t>(h)};
    l.b = {ElementKind::Hub, static_cast<std::uint32_t>((h + 1) % hub_count)};
    l.bundles = full_bundle_set(defaults.ring_length_km, defaults.loss_db_per_km);
    t.links.push_back(l);
  }
  for (int h = 0; h < hub_count; ++h) add_spoke_links(t, h);
  Link cc;
  cc.id = next_link_id(t);
  cc.a = {ElementKind::ControlCenter, 0};
  cc.b = {ElementKind::Hub, 0};
  cc.bundles = {FiberBundle::make(BundleKind::Lan, defaults.control_length_km, defaults.loss_db_per_km)};
  t.links.push_back(cc);
  return t;
}

NetworkTopology add_hub(const NetworkTopology& t) {
  if (t.hubs.empty()) return build_network(1, t.defaults);
  NetworkTopology out = t;
  const HubId new_id = static_cast<HubId>(out.hubs.size());
  const HubId last = out.hubs.back().id;
  const HubId first = out.hubs.front().id;
  out.hubs.push_back(make_hub(new_id));

  bool rewired = false;
  for (auto& l : out.links) {
    if (l.a.kind == ElementKind::Hub && l.b.kind == ElementKind::Hub && l.a.index == last &&
        l.b.index == first) {
      l.b.index = new_id;
      rewired = true;
      break;
    }
  }
  if (!rewired) throw Error(ErrorCode::Precondition, "ring is not closed; cannot insert hub");
  Link closing;
  closing.id = next_link_id(out);
  closing.a = {ElementKind::Hub, new_id};
  closing.b = {ElementKind::Hub, first};
  closing.bundles = full_bundle_set(out.defaults.ring_length_km, out.defaults.loss_db_per_km);
  out.links.push_back(closing);

  add_nodes_for_hub(out, new_id);
  add_spoke_links(out, new_id);
  return out;
}

// ---------------------------------------------------------------------------
// Validation

const char* to_string(Violation v) {
  switch (v) {
    case Violation::NodeCount: return "NODE_COUNT";
    case Violation::SpokeIndex: return "SPOKE_INDEX";
    case Violation::EquipmentCount: return "EQUIPMENT_COUNT";
    case Violation::SwitchShape: return "SWITCH_SHAPE";
    case Violation::Jumper: return "JUMPER";
    case Violation::BundleFibers: return "BUNDLE_FIBERS";
    case Violation::LinkFibers: return "LINK_FIBERS";
    case Violation::NodeLink: return "NODE_LINK";
    case Violation::RingCycle: return "RING_CYCLE";
    case Violation::LanReach: return "LAN_REACH";
  }
  return "?";
}

namespace {

bool bundle_counts_ok(const FiberBundle& b) {
  switch (b.kind) {
    case BundleKind::Primary:
    case BundleKind::Secondary:
      return b.qubit_fibers == 4 && b.timing_fibers == 1 && b.lan_fibers == 0;
    case BundleKind::Lan:
      return b.qubit_fibers == 0 && b.timing_fibers == 0 && b.lan_fibers == 2;
  }
  return false;
}

std::string element_name(const NetworkTopology& t, ElementRef e) {
  switch (e.kind) {
    case ElementKind::Hub: return "H" + std::to_string(e.index);
    case ElementKind::Node:
      for (const auto& n : t.nodes)
        if (n.id == e.index) return n.name;
      return "node#" + std::to_string(e.index);
    case ElementKind::ControlCenter: return t.control_center.name;
  }
  return "?";
}

}  // namespace

std::vector<ViolationEntry> validate_topology(const NetworkTopology& t) {
  std::vector<ViolationEntry> report;
  auto add = [&](Violation v, std::string element, std::string msg) {
    report.push_back({v, std::move(element), std::move(msg)});
  };

  std::set<HubId> hub_ids;
  for (const auto& h : t.hubs) {
    hub_ids.insert(h.id);
    if (h.sources != kSourcesPerHub || h.prepare_modules != kPrepareModules ||
        h.measure_modules != kMeasureModules || h.detector_channels != kDetectorChannels ||
        h.apc_channels != kApcChannels || h.node_ports != kNodesPerHub)
      add(Violation::EquipmentCount, h.name, "equipment counts differ from 4/3/3/8/4/5");
    if (h.ring_shape != SwitchShape::k60x60 || h.internal_shape != SwitchShape::k20x20 ||
        h.select_shape != SwitchShape::k8x24)
      add(Violation::SwitchShape, h.name, "switch shapes must be 60x60, 20x20, 8x24");
    std::set<int> seen;
    for (const auto& [x, y] : h.ring_jumpers) {
      const bool in_range = x >= ports::kRingJumperBase && x < 60 &&
                            y >= ports::kRingJumperBase && y < 60 && x != y;
      if (!in_range || !seen.insert(x).second || !seen.insert(y).second)
        add(Violation::Jumper, h.name,
            "jumper (" + std::to_string(x) + "," + std::to_string(y) + ") out of range or overlapping");
    }
  }

  for (const auto& h : t.hubs) {
    std::set<int> spokes;
    int count = 0;
    for (const auto& n : t.nodes) {
      if (n.hub != h.id) continue;
      ++count;
      if (n.spoke < 0 || n.spoke >= kNodesPerHub || !spokes.insert(n.spoke).second)
        add(Violation::SpokeIndex, n.name, "spoke index invalid or duplicated");
    }
    if (count != kNodesPerHub)
      add(Violation::NodeCount, h.name, std::to_string(count) + " nodes attached, expected 5");
  }

  for (const auto& n : t.nodes) {
    if (!hub_ids.count(n.hub)) {
      add(Violation::NodeLink, n.name, "attached to unknown hub");
      continue;
    }
    int attached = 0;
    for (const auto& l : t.links) {
      const bool touches = (l.b.kind == ElementKind::Node && l.b.index == n.id) ||
                           (l.a.kind == ElementKind::Node && l.a.index == n.id);
      if (!touches) continue;
      const ElementRef other = (l.b.kind == ElementKind::Node && l.b.index == n.id) ? l.a : l.b;
      if (other.kind == ElementKind::Hub && other.index == n.hub) ++attached;
      else add(Violation::NodeLink, n.name, "linked to an element other than its hub");
    }
    if (attached != 1)
      add(Violation::NodeLink, n.name, std::to_string(attached) + " links to its hub, expected 1");
  }

  for (const auto& l : t.links) {
    const std::string name = element_name(t, l.a) + "-" + element_name(t, l.b);
    for (const auto& b : l.bundles)
      if (!bundle_counts_ok(b)) add(Violation::BundleFibers, name, std::string(to_string(b.kind)) + " bundle has wrong fiber counts");
    const bool cc = l.a.kind == ElementKind::ControlCenter || l.b.kind == ElementKind::ControlCenter;
    if (cc) {
      if (l.bundles.size() != 1 || l.bundles[0].kind != BundleKind::Lan)
        add(Violation::LinkFibers, name, "Control Center link must be a LAN bundle");
    } else {
      const bool has_all = l.bundle(BundleKind::Primary) && l.bundle(BundleKind::Secondary) &&
                           l.bundle(BundleKind::Lan) && l.bundles.size() == 3;
      if (!has_all || l.total_fibers() != 12)
        add(Violation::LinkFibers, name, "link carries " + std::to_string(l.total_fibers()) + " fibers, expected 12");
    }
  }

  // Ring: every hub has exactly one outgoing and one incoming ring link and
  // following them visits every hub once.
  {
    std::map<HubId, int> out_deg, in_deg;
    std::map<HubId, HubId> succ;
    for (const auto& l : t.links) {
      if (l.a.kind != ElementKind::Hub || l.b.kind != ElementKind::Hub) continue;
      ++out_deg[l.a.index];
      ++in_deg[l.b.index];
      succ[l.a.index] = l.b.index;
    }
    bool ok = !t.hubs.empty();
    for (const auto& h : t.hubs)
      if (out_deg[h.id] != 1 || in_deg[h.id] != 1) ok = false;
    if (ok) {
      std::set<HubId> visited;
      HubId cur = t.hubs.front().id;
      for (std::size_t i = 0; i < t.hubs.size(); ++i) {
        visited.insert(cur);
        cur = succ[cur];
      }
      ok = cur == t.hubs.front().id && visited.size() == t.hubs.size();
    }
    if (!ok) add(Violation::RingCycle, "ring", "hubs do not form a single cycle");
  }

  // LAN reachability from the Control Center.
  {
    std::set<ElementRef> reached{{ElementKind::ControlCenter, 0}};
    std::queue<ElementRef> q;
    q.push({ElementKind::ControlCenter, 0});
    while (!q.empty()) {
      const ElementRef e = q.front();
      q.pop();
      for (const auto& l : t.links) {
        if (!l.bundle(BundleKind::Lan)) continue;
        ElementRef other;
        if (l.a == e) other = l.b;
        else if (l.b == e) other = l.a;
        else continue;
        if (reached.insert(other).second) q.push(other);
      }
    }
    for (const auto& h : t.hubs)
      if (!reached.count({ElementKind::Hub, h.id})) add(Violation::LanReach, h.name, "not reachable over LAN");
    for (const auto& n : t.nodes)
      if (!reached.count({ElementKind::Node, n.id})) add(Violation::LanReach, n.name, "not reachable over LAN");
  }

  return report;
}

// ---------------------------------------------------------------------------
// Switch state

const char* to_string(SwitchRole role) {
  switch (role) {
    case SwitchRole::Ring: return "ring";
    case SwitchRole::Internal: return "internal";
    case SwitchRole::PrepareSelect: return "prepare_select";
    case SwitchRole::MeasureSelect: return "measure_select";
  }
  return "?";
}

std::string to_string(const SwitchId& id) {
  return "H" + std::to_string(id.hub) + "." + to_string(id.role);
}

std::optional<SwitchId> parse_switch_id(const std::string& text) {
  if (text.size() < 4 || text[0] != 'H') return std::nullopt;
  const auto dot = text.find('.');
  if (dot == std::string::npos) return std::nullopt;
  SwitchId id;
  try {
    std::size_t used = 0;
    const unsigned long hub = std::stoul(text.substr(1, dot - 1), &used);
    if (used != dot - 1) return std::nullopt;
    id.hub = static_cast<HubId>(hub);
  } catch (...) {
    return std::nullopt;
  }
  const std::string role = text.substr(dot + 1);
  for (SwitchRole r : {SwitchRole::Ring, SwitchRole::Internal, SwitchRole::PrepareSelect,
                       SwitchRole::MeasureSelect}) {
    if (role == to_string(r)) {
      id.role = r;
      return id;
    }
  }
  return std::nullopt;
}

SwitchStates::SwitchStates(const NetworkTopology& t) {
  for (const auto& h : t.hubs) {
    auto put = [&](SwitchRole role, SwitchShape shape, std::vector<std::pair<int, int>> jumpers) {
      const SwitchId id{h.id, role};
      switches_.emplace(id, CrossbarSwitch::make(to_string(id), shape, std::move(jumpers)));
    };
    put(SwitchRole::Ring, h.ring_shape, h.ring_jumpers);
    put(SwitchRole::Internal, h.internal_shape, {});
    put(SwitchRole::PrepareSelect, h.select_shape, {});
    put(SwitchRole::MeasureSelect, h.select_shape, {});
  }
}

const CrossbarSwitch& SwitchStates::at(const SwitchId& id) const {
  auto it = switches_.find(id);
  if (it == switches_.end()) throw Error(ErrorCode::UnknownDevice, "unknown switch " + to_string(id));
  return it->second;
}

CrossbarSwitch& SwitchStates::at(const SwitchId& id) {
  auto it = switches_.find(id);
  if (it == switches_.end()) throw Error(ErrorCode::UnknownDevice, "unknown switch " + to_string(id));
  return it->second;
}

// ---------------------------------------------------------------------------
// Paths

std::string to_string(const Endpoint& e) {
  switch (e.kind) {
    case Endpoint::Kind::Source:
      return "H" + std::to_string(e.hub) + ".source" + std::to_string(e.index) +
             (e.arm == Arm::A ? "A" : "B");
    case Endpoint::Kind::Measure:
      return "H" + std::to_string(e.hub) + ".measure" + std::to_string(e.index);
    case Endpoint::Kind::Node:
      return "node" + std::to_string(e.node);
  }
  return "?";
}

double OpticalPath::total_loss_db() const {
  double s = 0.0;
  for (const auto& seg : segments) s += seg.loss_db;
  return s;
}

double OpticalPath::total_length_km() const {
  double s = 0.0;
  for (const auto& seg : segments) s += seg.length_km;
  return s;
}

Mat2 OpticalPath::net_rotation() const {
  Mat2 u = Mat2::Identity();
  for (const auto& seg : segments) u = seg.rotation * u;
  return u;
}

bool OpticalPath::contiguous() const {
  for (std::size_t i = 1; i < segments.size(); ++i)
    if (segments[i - 1].to != segments[i].from) return false;
  return true;
}

namespace {

// Per-hub vertex block layout.
constexpr std::uint32_t kRingRows = 0;
constexpr std::uint32_t kRingCols = 60;
constexpr std::uint32_t kIntRows = 120;
constexpr std::uint32_t kIntCols = 140;
constexpr std::uint32_t kSourceArms = 160;
constexpr std::uint32_t kMeasure = 168;
constexpr std::uint32_t kPerHub = 172;
constexpr std::uint32_t kPerNode = 8;

}  // namespace

PortGraph::PortGraph(const NetworkTopology& t) : topology_(&t), per_hub_(kPerHub) {
  std::uint32_t max_hub = 0;
  for (const auto& h : t.hubs) max_hub = std::max(max_hub, h.id + 1);
  std::uint32_t max_node = 0;
  for (const auto& n : t.nodes) max_node = std::max(max_node, n.id + 1);
  node_base_ = max_hub * per_hub_;
  fixed_.assign(node_base_ + max_node * kPerNode, std::nullopt);

  const auto& loss = t.hub_loss;
  auto cable = [&](std::string label) {
    FixedEdge e;
    e.loss_db = loss.cable_db;
    e.label = std::move(label);
    return e;
  };

  for (const auto& h : t.hubs) {
    const std::string hn = h.name;
    for (int s = 0; s < kSourcesPerHub; ++s)
      for (Arm arm : {Arm::A, Arm::B})
        connect(vertex_of(Endpoint::source(h.id, s, arm), 0, Bundle::Primary),
                switch_port({h.id, SwitchRole::Internal}, true, ports::internal_row_prepared(s, arm)),
                cable(hn + " prepare out"));
    for (int m = 0; m < kMeasureLanes; ++m)
      connect(vertex_of(Endpoint::measure(h.id, m), 0, Bundle::Primary),
              switch_port({h.id, SwitchRole::Internal}, false, ports::internal_col_measure(m)),
              cable(hn + " measure in"));
    for (int i = 0; i < kHubLanes; ++i) {
      connect(switch_port({h.id, SwitchRole::Internal}, false, ports::internal_col_to_ring(i)),
              switch_port({h.id, SwitchRole::Ring}, false, ports::ring_col_hub_out(i)),
              cable(hn + " hub-out"));
      connect(switch_port({h.id, SwitchRole::Internal}, true, ports::internal_row_from_ring(i)),
              switch_port({h.id, SwitchRole::Ring}, false, ports::ring_col_hub_in(i)),
              cable(hn + " hub-in"));
    }
    for (const auto& [x, y] : h.ring_jumpers) {
      if (x < 0 || x >= 60 || y < 0 || y >= 60) continue;
      FixedEdge j;
      j.loss_db = loss.jumper_db;
      j.label = hn + " jumper";
      connect(switch_port({h.id, SwitchRole::Ring}, false, x),
              switch_port({h.id, SwitchRole::Ring}, false, y), j);
    }
  }

  auto fiber = [](const FiberBundle& b, std::string label) {
    FixedEdge e;
    e.kind = PathSegment::Kind::Fiber;
    e.loss_db = b.per_fiber_loss_db;
    e.length_km = b.length_km;
    e.rotation = stokes_rotation(b.birefringence);
    e.label = std::move(label);
    return e;
  };

  for (const auto& l : t.links) {
    for (Bundle bundle : {Bundle::Primary, Bundle::Secondary}) {
      const FiberBundle* fb =
          l.bundle(bundle == Bundle::Primary ? BundleKind::Primary : BundleKind::Secondary);
      if (!fb) continue;
      for (int lane = 0; lane < kQubitLanes; ++lane) {
        if (l.a.kind == ElementKind::Hub && l.b.kind == ElementKind::Hub) {
          connect(switch_port({l.a.index, SwitchRole::Ring}, true, ports::ring_row_next(bundle, lane)),
                  switch_port({l.b.index, SwitchRole::Ring}, true, ports::ring_row_prev(bundle, lane)),
                  fiber(*fb, "H" + std::to_string(l.a.index) + "->H" + std::to_string(l.b.index)));
        } else if (l.a.kind == ElementKind::Hub && l.b.kind == ElementKind::Node) {
          const QuantumNode* node = nullptr;
          for (const auto& n : t.nodes)
            if (n.id == l.b.index) node = &n;
          if (!node || node->spoke < 0 || node->spoke >= kNodesPerHub) continue;
          connect(switch_port({l.a.index, SwitchRole::Ring}, true,
                              ports::ring_row_spoke(node->spoke, bundle, lane)),
                  vertex_of(Endpoint::at_node(node->id), lane, bundle),
                  fiber(*fb, "spoke " + node->name));
        }
      }
    }
  }
}

void PortGraph::connect(VertexId a, VertexId b, FixedEdge edge) {
  if (a >= fixed_.size() || b >= fixed_.size()) return;
  FixedEdge back = edge;
  back.peer = a;
  // Fibers are reciprocal media here; the reverse direction uses the
  // transpose rotation.
  back.rotation = edge.rotation.transpose();
  edge.peer = b;
  fixed_[a] = edge;
  fixed_[b] = back;
}

VertexId PortGraph::vertex_of(const Endpoint& e, int lane, Bundle bundle) const {
  switch (e.kind) {
    case Endpoint::Kind::Source:
      return e.hub * per_hub_ + kSourceArms + 2 * e.index + static_cast<int>(e.arm);
    case Endpoint::Kind::Measure:
      return e.hub * per_hub_ + kMeasure + e.index;
    case Endpoint::Kind::Node:
      return node_base_ + e.node * kPerNode + static_cast<int>(bundle) * 4 + lane;
  }
  return 0;
}

VertexId PortGraph::switch_port(const SwitchId& sw, bool row, int index) const {
  const std::uint32_t base = sw.hub * per_hub_;
  if (sw.role == SwitchRole::Ring) return base + (row ? kRingRows : kRingCols) + index;
  return base + (row ? kIntRows : kIntCols) + index;
}

std::optional<std::tuple<SwitchId, bool, int>> PortGraph::switch_port_of(VertexId v) const {
  if (v >= node_base_) return std::nullopt;
  const HubId hub = v / per_hub_;
  const std::uint32_t off = v % per_hub_;
  if (off < kRingCols) return std::tuple{SwitchId{hub, SwitchRole::Ring}, true, int(off - kRingRows)};
  if (off < kIntRows) return std::tuple{SwitchId{hub, SwitchRole::Ring}, false, int(off - kRingCols)};
  if (off < kIntCols) return std::tuple{SwitchId{hub, SwitchRole::Internal}, true, int(off - kIntRows)};
  if (off < kSourceArms) return std::tuple{SwitchId{hub, SwitchRole::Internal}, false, int(off - kIntCols)};
  return std::nullopt;
}

bool PortGraph::is_endpoint(VertexId v) const { return !switch_port_of(v).has_value(); }

std::string PortGraph::describe(VertexId v) const {
  if (v >= node_base_) {
    const std::uint32_t n = (v - node_base_) / kPerNode;
    const std::uint32_t r = (v - node_base_) % kPerNode;
    return "node" + std::to_string(n) + (r < 4 ? ".P" : ".S") + std::to_string(r % 4);
  }
  if (auto sp = switch_port_of(v)) {
    const auto& [sw, row, idx] = *sp;
    return to_string(sw) + (row ? ".row" : ".col") + std::to_string(idx);
  }
  const HubId hub = v / per_hub_;
  const std::uint32_t off = v % per_hub_;
  if (off < kMeasure) {
    const int k = off - kSourceArms;
    return to_string(Endpoint::source(hub, k / 2, k % 2 ? Arm::B : Arm::A));
  }
  return to_string(Endpoint::measure(hub, off - kMeasure));
}

namespace {

bool endpoint_exists(const NetworkTopology& t, const Endpoint& e) {
  switch (e.kind) {
    case Endpoint::Kind::Source:
    case Endpoint::Kind::Measure: {
      const int limit = e.kind == Endpoint::Kind::Source ? kSourcesPerHub : kMeasureLanes;
      if (e.index < 0 || e.index >= limit) return false;
      for (const auto& h : t.hubs)
        if (h.id == e.hub) return true;
      return false;
    }
    case Endpoint::Kind::Node:
      for (const auto& n : t.nodes)
        if (n.id == e.node) return true;
      return false;
  }
  return false;
}

}  // namespace

OpticalPath resolve_path(const NetworkTopology& t, const SwitchStates& states, const Endpoint& a,
                         const Endpoint& b, int qubit_lane, Bundle bundle) {
  const PortGraph g(t);
  return resolve_path(g, states, a, b, qubit_lane, bundle);
}

OpticalPath resolve_path(const PortGraph& g, const SwitchStates& states, const Endpoint& a,
                         const Endpoint& b, int qubit_lane, Bundle bundle) {
  if (qubit_lane < 0 || qubit_lane >= kQubitLanes)
    throw Error(ErrorCode::Lane, "qubit lane " + std::to_string(qubit_lane) + " outside 0..3");
  if (a == b) throw Error(ErrorCode::Precondition, "path endpoints must differ");
  if (!endpoint_exists(g.topology(), a) || !endpoint_exists(g.topology(), b))
    throw Error(ErrorCode::Precondition, "unknown endpoint");

  const VertexId start = g.vertex_of(a, qubit_lane, bundle);
  const VertexId target = g.vertex_of(b, qubit_lane, bundle);
  const double switch_db = g.topology().hub_loss.switch_db;

  OpticalPath path;
  path.endpoint_a = a;
  path.endpoint_b = b;

  PathSegment transit;
  bool transit_open = false;
  auto flush_transit = [&] {
    if (transit_open) path.segments.push_back(transit);
    transit_open = false;
  };
  auto add_hub_step = [&](VertexId from, VertexId to, double loss, const Mat2& rot, const std::string& label) {
    if (!transit_open) {
      transit = PathSegment{};
      transit.kind = PathSegment::Kind::HubTransit;
      transit.from = from;
      transit.label = label;
      transit_open = true;
    }
    transit.to = to;
    transit.loss_db += loss;
    transit.rotation = rot * transit.rotation;
  };

  VertexId v = start;
  const std::size_t max_steps = 4 * g.vertex_count() + 8;
  for (std::size_t step = 0; step < max_steps; ++step) {
    // Fixed edge out of v.
    const auto& fe = g.fixed_edge(v);
    if (!fe) throw Error(ErrorCode::NoPath, "path from " + to_string(a) + " dead-ends at " + g.describe(v));
    const VertexId u = fe->peer;
    if (fe->kind == PathSegment::Kind::Fiber) {
      flush_transit();
      PathSegment seg;
      seg.kind = PathSegment::Kind::Fiber;
      seg.from = v;
      seg.to = u;
      seg.loss_db = fe->loss_db;
      seg.length_km = fe->length_km;
      seg.rotation = fe->rotation;
      seg.label = fe->label;
      path.segments.push_back(seg);
    } else {
      add_hub_step(v, u, fe->loss_db, fe->rotation, fe->label);
    }
    v = u;
    if (g.is_endpoint(v)) {
      flush_transit();
      if (v != target)
        throw Error(ErrorCode::NoPath, "path from " + to_string(a) + " ends at " + g.describe(v) +
                                           " instead of " + to_string(b));
      return path;
    }
    // Switch edge out of v.
    const auto [sw, is_row, idx] = *g.switch_port_of(v);
    const CrossbarSwitch& xb = states.at(sw);
    const std::optional<int> other = is_row ? xb.col_of(idx) : xb.row_of(idx);
    if (!other)
      throw Error(ErrorCode::NoPath, "path from " + to_string(a) + " stops at unmapped " + g.describe(v));
    const VertexId w = g.switch_port(sw, !is_row, *other);
    path.switch_hops.push_back({sw, is_row ? std::pair{idx, *other} : std::pair{*other, idx}});
    add_hub_step(v, w, switch_db, Mat2::Identity(), "H" + std::to_string(sw.hub) + " transit");
    v = w;
  }
  throw Error(ErrorCode::NoPath, "path from " + to_string(a) + " loops");
}

}  // namespace qnet::topology
