#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridgin/matrix.hpp"

namespace gridgin {

using NodeId = std::int32_t;
using EdgeId = std::int32_t;

enum class StationKind { PrimarySubstation, DistributionStation };

const char* to_string(StationKind kind) noexcept;
StationKind station_kind_from_string(const std::string& s);

struct Station {
  NodeId id = 0;
  StationKind kind = StationKind::DistributionStation;
  double load_kw = 0.0;
  double nominal_voltage_v = 10500.0;

  bool is_source() const noexcept {
    return kind == StationKind::PrimarySubstation;
  }
  friend bool operator==(const Station&, const Station&) = default;
};

struct Cable {
  EdgeId id = 0;
  NodeId u = 0;
  NodeId v = 0;
  double impedance_ohm = 1.0;
  double nominal_current_a = 1.0;

  NodeId other(NodeId x) const noexcept { return x == u ? v : u; }
  friend bool operator==(const Cable&, const Cable&) = default;
};

/// One entry of a node's adjacency list.
struct Incidence {
  NodeId neighbor;
  EdgeId edge;
};

/// Thrown for out-of-range node or edge ids.
class GridError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Undirected MV grid: stations, cables and the set of normally-open cables.
///
/// Cable endpoints are stored canonically with u < v. The grid is immutable
/// once built; adjacency is precomputed for entries whose endpoints are in
/// range so that invalid grids can still be inspected by validate_grid.
class Grid {
 public:
  Grid() = default;
  Grid(std::vector<Station> nodes, std::vector<Cable> edges,
       std::vector<EdgeId> normally_open);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  const std::vector<Station>& nodes() const noexcept { return nodes_; }
  const std::vector<Cable>& edges() const noexcept { return edges_; }
  const Station& node(NodeId v) const;
  const Cable& edge(EdgeId e) const;

  /// Sorted, de-duplicated ids of normally-open cables.
  const std::vector<EdgeId>& normally_open() const noexcept { return open_; }
  bool is_normally_open(EdgeId e) const noexcept;

  std::span<const Incidence> incident(NodeId v) const;
  std::size_t degree(NodeId v) const { return incident(v).size(); }

  std::vector<NodeId> sources() const;
  double total_load_kw() const noexcept;

  bool valid_node(NodeId v) const noexcept {
    return v >= 0 && static_cast<std::size_t>(v) < nodes_.size();
  }
  bool valid_edge(EdgeId e) const noexcept {
    return e >= 0 && static_cast<std::size_t>(e) < edges_.size();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_ && a.open_ == b.open_;
  }

 private:
  std::vector<Station> nodes_;
  std::vector<Cable> edges_;
  std::vector<EdgeId> open_;
  std::vector<std::uint32_t> adj_offset_;
  std::vector<Incidence> adj_;
};

/// Node feature columns.
enum NodeFeature : std::size_t {
  kPowerConsumption = 0,
  kVoltageRadial = 1,
  kVoltageClosed = 2,
  kNodeDegree = 3,
};
/// Edge feature columns.
enum EdgeFeature : std::size_t {
  kImpedance = 0,
  kNominalCurrent = 1,
  kCurrentRadial = 2,
  kCurrentClosed = 3,
};
inline constexpr std::size_t kNodeFeatureCount = 4;
inline constexpr std::size_t kEdgeFeatureCount = 4;

const char* node_feature_name(std::size_t column);
const char* edge_feature_name(std::size_t column);

struct FeatureSet {
  Matrix node_features;  // |V| x 4
  Matrix edge_features;  // |E| x 4

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

enum class Provenance { Generated, Augmented };
const char* to_string(Provenance p) noexcept;
Provenance provenance_from_string(const std::string& s);

struct LabeledSample {
  Grid grid;
  FeatureSet features;
  int label = 0;  // 1 = n-1, 0 = not n-1
  Provenance provenance = Provenance::Generated;
};

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const noexcept { return issues.empty(); }
};

ValidationReport validate_grid(const Grid& grid);

/// Checks that a feature set matches the grid's dimensions, holds only finite
/// values and carries the correct degree column.
ValidationReport validate_features(const Grid& grid, const FeatureSet& fs);

/// Sorted neighbours of v in the closed (all cables in) graph.
std::vector<NodeId> neighbors(const Grid& grid, NodeId v);

struct Neighborhood {
  std::vector<NodeId> nodes;  // sorted
  std::vector<EdgeId> edges;  // sorted; both endpoints inside `nodes`
};

/// BFS ball of radius k around v in the closed graph.
Neighborhood k_hop_neighborhood(const Grid& grid, NodeId v, int k);

/// Hop distances from v in the closed graph; -1 for unreachable nodes.
std::vector<int> hop_distances(const Grid& grid, NodeId v);

struct RouteLengthStats {
  int min = 0;
  double avg = 0.0;
  int max = 0;
  std::size_t routes = 0;

  /// Default model depth derived from the dataset.
  int suggested_depth() const;
};

/// Hop lengths of radial-state paths from primary substations to the leaf
/// distribution stations they feed, pooled over all grids.
RouteLengthStats route_length_stats(std::span<const Grid> grids);
RouteLengthStats route_length_stats(const Grid& grid);

/// True iff removing `open_set` leaves a forest in which every node reaches
/// exactly one primary substation.
bool is_radial(const Grid& grid, std::span<const EdgeId> open_set);

/// Hop depth of every node in the radial operating state (-1 if unserved).
std::vector<int> radial_depths(const Grid& grid);

}  // namespace gridgin
