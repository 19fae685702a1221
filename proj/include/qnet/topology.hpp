#pragma once

// Physical network graph: Equipment Hubs on a ring, five Quantum Nodes per
// hub, 12-fiber bundle sets on every link, and crossbar switch semantics.
//
// Port conventions (fixed, documented in docs/formats.md):
//
//   Ring switch (60x60). Rows are the network side, columns the equipment
//   side where jumpers are patched.
//     row  spoke*8 + bundle*4 + lane      node spokes (rows 0..39)
//     row  40 + bundle*4 + lane           fiber toward the next hub
//     row  48 + bundle*4 + lane           fiber toward the previous hub
//     rows 56..59                         spare
//     col  0..7                           hub-out lanes (to internal col 8+i)
//     col  8..15                          hub-in lanes  (to internal row 8+i)
//     col  16..59                         22 jumper pairs (16,17) .. (58,59)
//
//   Internal switch (20x20).
//     row  2*source + arm                 prepared photon outputs (rows 0..7)
//     row  8 + i                          from ring hub-in lane i
//     col  lane                           measure lanes 0..3
//     col  8 + i                          to ring hub-out lane i
//
//   The two 8x24 select switches choose Prepare/Measure modules: row = source
//   slot or detector channel, col = module*8 + port.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "qnet/error.hpp"
#include "qnet/linalg.hpp"

namespace qnet::topology {

using HubId = std::uint32_t;
using NodeId = std::uint32_t;

inline constexpr int kNodesPerHub = 5;
inline constexpr int kQubitLanes = 4;
inline constexpr int kSourcesPerHub = 4;
inline constexpr int kPrepareModules = 3;
inline constexpr int kMeasureModules = 3;
inline constexpr int kMeasureLanes = 4;
inline constexpr int kDetectorChannels = 8;
inline constexpr int kApcChannels = 4;
inline constexpr int kHubLanes = 8;
inline constexpr int kTimingLinks = 18;

enum class BundleKind { Primary, Secondary, Lan };
/// The two qubit-carrying bundles.
enum class Bundle { Primary = 0, Secondary = 1 };
enum class Arm { A = 0, B = 1 };

const char* to_string(BundleKind kind);
const char* to_string(Bundle bundle);

struct FiberBundle {
  BundleKind kind = BundleKind::Primary;
  int qubit_fibers = 4;
  int timing_fibers = 1;
  int lan_fibers = 0;
  double per_fiber_loss_db = 0.0;
  double length_km = 0.0;
  /// Static birefringence of the qubit fibers, Stokes axis-angle vector.
  Vec3 birefringence = Vec3::Zero();

  int total_fibers() const { return qubit_fibers + timing_fibers + lan_fibers; }

  static FiberBundle make(BundleKind kind, double length_km, double loss_db_per_km);
};

enum class SwitchShape { k60x60, k20x20, k8x24 };

struct CrossbarSwitch {
  std::string id;
  int rows = 0;
  int cols = 0;
  /// row -> col, -1 when unmapped.
  std::vector<int> row_to_col;
  std::vector<std::pair<int, int>> jumpers;

  static CrossbarSwitch make(std::string id, SwitchShape shape,
                             std::vector<std::pair<int, int>> jumpers = {});

  std::vector<std::pair<int, int>> mapping() const;
  std::optional<int> col_of(int row) const;
  std::optional<int> row_of(int col) const;

  bool operator==(const CrossbarSwitch&) const = default;
};

/// Replace the switch mapping. Throws E_PORT_RANGE or E_FANOUT.
CrossbarSwitch set_crossbar(const CrossbarSwitch& sw,
                            const std::vector<std::pair<int, int>>& mapping);

/// Right-side (row) pairs joined through a jumper loop.
std::vector<std::pair<int, int>> effective_connectivity(const CrossbarSwitch& sw);

struct HubLossModel {
  double switch_db = 1.0;
  double cable_db = 0.1;
  double jumper_db = 0.2;
};

struct EquipmentHub {
  HubId id = 0;
  std::string name;
  int sources = kSourcesPerHub;
  int prepare_modules = kPrepareModules;
  int measure_modules = kMeasureModules;
  int detector_channels = kDetectorChannels;
  int apc_channels = kApcChannels;
  int node_ports = kNodesPerHub;
  int timing_links = kTimingLinks;
  SwitchShape ring_shape = SwitchShape::k60x60;
  SwitchShape internal_shape = SwitchShape::k20x20;
  SwitchShape select_shape = SwitchShape::k8x24;
  std::vector<std::pair<int, int>> ring_jumpers;
};

struct QuantumNode {
  NodeId id = 0;
  HubId hub = 0;
  int spoke = 0;
  std::string name;
};

enum class ElementKind { Hub, Node, ControlCenter };

struct ElementRef {
  ElementKind kind = ElementKind::Hub;
  std::uint32_t index = 0;
  bool operator==(const ElementRef&) const = default;
  auto operator<=>(const ElementRef&) const = default;
};

/// One physical link: hub-hub links run from `a`'s next-hub ports to `b`'s
/// previous-hub ports; hub-node links run from the hub's spoke to the node.
struct Link {
  std::uint32_t id = 0;
  ElementRef a;
  ElementRef b;
  std::vector<FiberBundle> bundles;

  const FiberBundle* bundle(BundleKind kind) const;
  int total_fibers() const;
};

struct ControlCenter {
  std::string name = "CC";
};

struct BundleDefaults {
  double loss_db_per_km = 0.2;
  double spoke_length_km = 1.0;
  double ring_length_km = 10.0;
  double control_length_km = 1.0;
};

struct NetworkTopology {
  std::vector<EquipmentHub> hubs;
  std::vector<QuantumNode> nodes;
  std::vector<Link> links;
  ControlCenter control_center;
  HubLossModel hub_loss;
  BundleDefaults defaults;

  std::size_t hub_count() const { return hubs.size(); }
  std::size_t node_count() const { return nodes.size(); }
  const QuantumNode& node(NodeId id) const;
  std::optional<NodeId> node_at(HubId hub, int spoke) const;
  /// Hub-hub links in ring order.
  std::vector<const Link*> ring_links() const;
  const Link* spoke_link(NodeId node) const;
  const Link* ring_link_from(HubId hub) const;
  HubId next_hub(HubId hub) const;
  HubId prev_hub(HubId hub) const;
};

NetworkTopology build_network(int hub_count, const BundleDefaults& defaults = {});
NetworkTopology add_hub(const NetworkTopology& t);

std::vector<std::pair<int, int>> default_ring_jumpers();

// ---------------------------------------------------------------------------
// Validation

enum class Violation {
  NodeCount,
  SpokeIndex,
  EquipmentCount,
  SwitchShape,
  Jumper,
  BundleFibers,
  LinkFibers,
  NodeLink,
  RingCycle,
  LanReach,
};

const char* to_string(Violation v);

struct ViolationEntry {
  Violation code;
  std::string element;
  std::string message;
};

std::vector<ViolationEntry> validate_topology(const NetworkTopology& t);

// ---------------------------------------------------------------------------
// Switch state

enum class SwitchRole { Ring, Internal, PrepareSelect, MeasureSelect };
const char* to_string(SwitchRole role);

struct SwitchId {
  HubId hub = 0;
  SwitchRole role = SwitchRole::Ring;
  auto operator<=>(const SwitchId&) const = default;
  bool operator==(const SwitchId&) const = default;
};

std::string to_string(const SwitchId& id);
std::optional<SwitchId> parse_switch_id(const std::string& text);

/// Runtime switch mappings for every switch in a topology. Topology values
/// stay immutable; configuration produces new SwitchStates values.
class SwitchStates {
 public:
  SwitchStates() = default;
  explicit SwitchStates(const NetworkTopology& t);

  const CrossbarSwitch& at(const SwitchId& id) const;
  CrossbarSwitch& at(const SwitchId& id);
  bool contains(const SwitchId& id) const { return switches_.count(id) != 0; }
  const std::map<SwitchId, CrossbarSwitch>& all() const { return switches_; }

  bool operator==(const SwitchStates&) const = default;

 private:
  std::map<SwitchId, CrossbarSwitch> switches_;
};

// ---------------------------------------------------------------------------
// Port layout helpers

namespace ports {
inline constexpr int kRingNextBase = 40;
inline constexpr int kRingPrevBase = 48;
inline constexpr int kRingHubInBase = 8;
inline constexpr int kRingJumperBase = 16;
inline constexpr int kInternalFromRingBase = 8;
inline constexpr int kInternalToRingBase = 8;

constexpr int ring_row_spoke(int spoke, Bundle b, int lane) {
  return spoke * 8 + static_cast<int>(b) * 4 + lane;
}
constexpr int ring_row_next(Bundle b, int lane) { return kRingNextBase + static_cast<int>(b) * 4 + lane; }
constexpr int ring_row_prev(Bundle b, int lane) { return kRingPrevBase + static_cast<int>(b) * 4 + lane; }
constexpr int ring_col_hub_out(int i) { return i; }
constexpr int ring_col_hub_in(int i) { return kRingHubInBase + i; }
constexpr int internal_row_prepared(int source, Arm arm) { return 2 * source + static_cast<int>(arm); }
constexpr int internal_row_from_ring(int i) { return kInternalFromRingBase + i; }
constexpr int internal_col_measure(int lane) { return lane; }
constexpr int internal_col_to_ring(int i) { return kInternalToRingBase + i; }
}  // namespace ports

// ---------------------------------------------------------------------------
// Optical paths

struct Endpoint {
  enum class Kind { Source, Measure, Node };
  Kind kind = Kind::Node;
  HubId hub = 0;
  int index = 0;  // source slot or measure lane
  Arm arm = Arm::A;
  NodeId node = 0;

  static Endpoint source(HubId hub, int slot, Arm arm) { return {Kind::Source, hub, slot, arm, 0}; }
  static Endpoint measure(HubId hub, int lane) { return {Kind::Measure, hub, lane, Arm::A, 0}; }
  static Endpoint at_node(NodeId node) { return {Kind::Node, 0, 0, Arm::A, node}; }

  bool operator==(const Endpoint&) const = default;
};

std::string to_string(const Endpoint& e);

using VertexId = std::uint32_t;

struct PathSegment {
  enum class Kind { Fiber, HubTransit };
  Kind kind = Kind::HubTransit;
  VertexId from = 0;
  VertexId to = 0;
  double loss_db = 0.0;
  double length_km = 0.0;
  Mat2 rotation = Mat2::Identity();
  std::string label;
};

struct OpticalPath {
  Endpoint endpoint_a;
  Endpoint endpoint_b;
  std::vector<PathSegment> segments;
  /// Every switch cross-connection the photon traverses.
  std::vector<std::pair<SwitchId, std::pair<int, int>>> switch_hops;

  double total_loss_db() const;
  double total_length_km() const;
  /// Ordered product U_n ... U_1 of segment unitaries (a -> b).
  Mat2 net_rotation() const;
  bool contiguous() const;
};

/// Explicit port graph of a topology. Every vertex has at most one fixed
/// (cable, fiber, jumper) edge and at most one switch edge, so each lit
/// path is a simple chain.
class PortGraph {
 public:
  explicit PortGraph(const NetworkTopology& t);

  struct FixedEdge {
    VertexId peer = 0;
    PathSegment::Kind kind = PathSegment::Kind::HubTransit;
    double loss_db = 0.0;
    double length_km = 0.0;
    Mat2 rotation = Mat2::Identity();
    std::string label;
  };

  std::size_t vertex_count() const { return fixed_.size(); }
  const std::optional<FixedEdge>& fixed_edge(VertexId v) const { return fixed_[v]; }

  VertexId vertex_of(const Endpoint& e, int lane, Bundle bundle) const;
  VertexId switch_port(const SwitchId& sw, bool row, int index) const;
  /// Inverse of switch_port; nullopt for endpoint vertices.
  std::optional<std::tuple<SwitchId, bool, int>> switch_port_of(VertexId v) const;
  bool is_endpoint(VertexId v) const;
  std::string describe(VertexId v) const;

  const NetworkTopology& topology() const { return *topology_; }

 private:
  const NetworkTopology* topology_;
  std::uint32_t per_hub_ = 0;
  std::uint32_t node_base_ = 0;
  std::vector<std::optional<FixedEdge>> fixed_;

  void connect(VertexId a, VertexId b, FixedEdge edge);
};

/// Walk the unique lit path from `a`. `lane`/`bundle` select the node-side
/// fiber when an endpoint is a Quantum Node.
/// Throws E_LANE, E_PRECONDITION (a == b or unknown endpoint), E_NO_PATH.
OpticalPath resolve_path(const NetworkTopology& t, const SwitchStates& states,
                         const Endpoint& a, const Endpoint& b, int qubit_lane,
                         Bundle bundle);
OpticalPath resolve_path(const PortGraph& g, const SwitchStates& states,
                         const Endpoint& a, const Endpoint& b, int qubit_lane,
                         Bundle bundle);

}  // namespace qnet::topology
