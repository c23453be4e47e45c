#include "gridgin/grid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include "detail/union_find.hpp"

namespace gridgin {

const char* to_string(StationKind kind) noexcept {
  return kind == StationKind::PrimarySubstation ? "primary" : "distribution";
}

StationKind station_kind_from_string(const std::string& s) {
  if (s == "primary") return StationKind::PrimarySubstation;
  if (s == "distribution") return StationKind::DistributionStation;
  throw std::invalid_argument("unknown station kind '" + s + "'");
}

const char* to_string(Provenance p) noexcept {
  return p == Provenance::Generated ? "generated" : "augmented";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "generated") return Provenance::Generated;
  if (s == "augmented") return Provenance::Augmented;
  throw std::invalid_argument("unknown provenance '" + s + "'");
}

const char* node_feature_name(std::size_t column) {
  static constexpr const char* names[] = {"power_consumption", "voltage_radial",
                                          "voltage_closed", "node_degree"};
  if (column >= kNodeFeatureCount) throw std::out_of_range("node feature column");
  return names[column];
}

const char* edge_feature_name(std::size_t column) {
  static constexpr const char* names[] = {"impedance", "nominal_current",
                                          "current_radial", "current_closed"};
  if (column >= kEdgeFeatureCount) throw std::out_of_range("edge feature column");
  return names[column];
}

Grid::Grid(std::vector<Station> nodes, std::vector<Cable> edges,
           std::vector<EdgeId> normally_open)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), open_(std::move(normally_open)) {
  for (auto& c : edges_) {
    if (c.u > c.v) std::swap(c.u, c.v);
  }
  std::sort(open_.begin(), open_.end());
  open_.erase(std::unique(open_.begin(), open_.end()), open_.end());

  const std::size_t n = nodes_.size();
  std::vector<std::uint32_t> deg(n, 0);
  auto usable = [&](const Cable& c) {
    return valid_node(c.u) && valid_node(c.v) && c.u != c.v;
  };
  for (const auto& c : edges_) {
    if (!usable(c)) continue;
    ++deg[c.u];
    ++deg[c.v];
  }
  adj_offset_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) adj_offset_[v + 1] = adj_offset_[v] + deg[v];
  adj_.resize(adj_offset_[n]);
  std::vector<std::uint32_t> fill(adj_offset_.begin(), adj_offset_.end() - 1);
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const auto& c = edges_[i];
    if (!usable(c)) continue;
    const auto e = static_cast<EdgeId>(i);
    adj_[fill[c.u]++] = {c.v, e};
    adj_[fill[c.v]++] = {c.u, e};
  }
  for (std::size_t v = 0; v < n; ++v) {
    std::sort(adj_.begin() + adj_offset_[v], adj_.begin() + adj_offset_[v + 1],
              [](const Incidence& a, const Incidence& b) {
                return std::pair(a.neighbor, a.edge) < std::pair(b.neighbor, b.edge);
              });
  }
}

const Station& Grid::node(NodeId v) const {
  if (!valid_node(v)) throw GridError("invalid node id " + std::to_string(v));
  return nodes_[static_cast<std::size_t>(v)];
}

const Cable& Grid::edge(EdgeId e) const {
  if (!valid_edge(e)) throw GridError("invalid edge id " + std::to_string(e));
  return edges_[static_cast<std::size_t>(e)];
}

bool Grid::is_normally_open(EdgeId e) const noexcept {
  return std::binary_search(open_.begin(), open_.end(), e);
}

std::span<const Incidence> Grid::incident(NodeId v) const {
  if (!valid_node(v)) throw GridError("invalid node id " + std::to_string(v));
  const auto i = static_cast<std::size_t>(v);
  return {adj_.data() + adj_offset_[i], adj_offset_[i + 1] - adj_offset_[i]};
}

std::vector<NodeId> Grid::sources() const {
  std::vector<NodeId> out;
  for (const auto& s : nodes_) {
    if (s.is_source()) out.push_back(s.id);
  }
  return out;
}

double Grid::total_load_kw() const noexcept {
  double total = 0.0;
  for (const auto& s : nodes_) total += s.load_kw;
  return total;
}

namespace {

std::string edge_label(const Cable& c) {
  std::ostringstream os;
  os << "(" << c.u << "," << c.v << ")";
  return os.str();
}

bool closed_graph_connected(const Grid& grid) {
  const std::size_t n = grid.node_count();
  if (n == 0) return true;
  auto dist = hop_distances(grid, 0);
  return std::none_of(dist.begin(), dist.end(), [](int d) { return d < 0; });
}

}  // namespace

ValidationReport validate_grid(const Grid& grid) {
  ValidationReport report;
  auto issue = [&](std::string s) { report.issues.push_back(std::move(s)); };

  const auto& nodes = grid.nodes();
  const auto& edges = grid.edges();
  if (nodes.empty()) issue("grid has no nodes");

  std::size_t sources = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& s = nodes[i];
    if (s.id != static_cast<NodeId>(i)) {
      issue("node id " + std::to_string(s.id) + " at index " + std::to_string(i) +
            " is not dense");
    }
    if (!std::isfinite(s.load_kw) || s.load_kw < 0.0) {
      issue("node " + std::to_string(i) + " has negative or non-finite load");
    }
    if (!std::isfinite(s.nominal_voltage_v) || s.nominal_voltage_v <= 0.0) {
      issue("node " + std::to_string(i) + " has non-positive nominal voltage");
    }
    if (s.is_source()) {
      ++sources;
      if (s.load_kw != 0.0) {
        issue("primary substation " + std::to_string(i) + " has non-zero load");
      }
    }
  }
  if (sources == 0) issue("no primary substation");

  bool endpoints_ok = true;
  std::set<std::pair<NodeId, NodeId>> seen;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& c = edges[i];
    const std::string name = "edge " + std::to_string(i);
    if (c.id != static_cast<EdgeId>(i)) issue(name + " has non-dense id " + std::to_string(c.id));
    if (!grid.valid_node(c.u) || !grid.valid_node(c.v)) {
      issue(name + " has an endpoint out of range");
      endpoints_ok = false;
      continue;
    }
    if (c.u == c.v) {
      issue(name + " is a self-loop");
      endpoints_ok = false;
      continue;
    }
    if (!seen.insert({c.u, c.v}).second) issue("duplicate edge " + edge_label(c));
    if (!std::isfinite(c.impedance_ohm) || c.impedance_ohm <= 0.0) {
      issue(name + " has non-positive impedance");
    }
    if (!std::isfinite(c.nominal_current_a) || c.nominal_current_a <= 0.0) {
      issue(name + " has non-positive nominal current");
    }
  }

  bool open_ok = true;
  for (EdgeId e : grid.normally_open()) {
    if (!grid.valid_edge(e)) {
      issue("normally-open edge id " + std::to_string(e) + " out of range");
      open_ok = false;
    }
  }

  if (!nodes.empty() && endpoints_ok) {
    if (!closed_graph_connected(grid)) issue("closed graph is not connected");
    if (sources > 0 && open_ok && !is_radial(grid, grid.normally_open())) {
      issue("radial state is not a forest with exactly one primary substation per component");
    }
  }
  return report;
}

ValidationReport validate_features(const Grid& grid, const FeatureSet& fs) {
  ValidationReport report;
  const auto& nf = fs.node_features;
  const auto& ef = fs.edge_features;
  if (nf.rows() != grid.node_count() || nf.cols() != kNodeFeatureCount) {
    report.issues.push_back("node feature matrix has wrong shape");
  }
  if (ef.rows() != grid.edge_count() || ef.cols() != kEdgeFeatureCount) {
    report.issues.push_back("edge feature matrix has wrong shape");
  }
  if (!report.ok()) return report;
  auto finite = [](const Matrix& m) {
    return std::all_of(m.values().begin(), m.values().end(),
                       [](double x) { return std::isfinite(x); });
  };
  if (!finite(nf) || !finite(ef)) report.issues.push_back("non-finite feature value");
  for (std::size_t v = 0; v < grid.node_count(); ++v) {
    const auto deg = static_cast<double>(grid.degree(static_cast<NodeId>(v)));
    if (nf(v, kNodeDegree) != deg) {
      report.issues.push_back("degree feature of node " + std::to_string(v) +
                              " does not match the grid");
    }
  }
  return report;
}

std::vector<NodeId> neighbors(const Grid& grid, NodeId v) {
  std::vector<NodeId> out;
  for (const auto& inc : grid.incident(v)) out.push_back(inc.neighbor);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<int> hop_distances(const Grid& grid, NodeId v) {
  std::vector<int> dist(grid.node_count(), -1);
  if (!grid.valid_node(v)) throw GridError("invalid node id " + std::to_string(v));
  std::deque<NodeId> queue{v};
  dist[static_cast<std::size_t>(v)] = 0;
  while (!queue.empty()) {
    const NodeId x = queue.front();
    queue.pop_front();
    for (const auto& inc : grid.incident(x)) {
      auto& d = dist[static_cast<std::size_t>(inc.neighbor)];
      if (d < 0) {
        d = dist[static_cast<std::size_t>(x)] + 1;
        queue.push_back(inc.neighbor);
      }
    }
  }
  return dist;
}

Neighborhood k_hop_neighborhood(const Grid& grid, NodeId v, int k) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  const auto dist = hop_distances(grid, v);
  Neighborhood out;
  std::vector<char> inside(grid.node_count(), 0);
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] >= 0 && dist[i] <= k) {
      inside[i] = 1;
      out.nodes.push_back(static_cast<NodeId>(i));
    }
  }
  for (const auto& c : grid.edges()) {
    if (grid.valid_node(c.u) && grid.valid_node(c.v) && inside[c.u] && inside[c.v]) {
      out.edges.push_back(c.id);
    }
  }
  return out;
}

bool is_radial(const Grid& grid, std::span<const EdgeId> open_set) {
  const std::size_t n = grid.node_count();
  std::vector<char> open(grid.edge_count(), 0);
  for (EdgeId e : open_set) {
    if (grid.valid_edge(e)) open[static_cast<std::size_t>(e)] = 1;
  }
  detail::UnionFind uf(n);
  for (std::size_t i = 0; i < grid.edge_count(); ++i) {
    if (open[i]) continue;
    const auto& c = grid.edges()[i];
    if (!grid.valid_node(c.u) || !grid.valid_node(c.v)) return false;
    if (!uf.unite(static_cast<std::uint32_t>(c.u), static_cast<std::uint32_t>(c.v))) {
      return false;  // cycle
    }
  }
  std::vector<int> sources_in(n, 0);
  for (const auto& s : grid.nodes()) {
    if (s.is_source()) ++sources_in[uf.find(static_cast<std::uint32_t>(s.id))];
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (sources_in[uf.find(static_cast<std::uint32_t>(v))] != 1) return false;
  }
  return true;
}

std::vector<int> radial_depths(const Grid& grid) {
  std::vector<int> depth(grid.node_count(), -1);
  std::deque<NodeId> queue;
  for (NodeId s : grid.sources()) {
    depth[static_cast<std::size_t>(s)] = 0;
    queue.push_back(s);
  }
  while (!queue.empty()) {
    const NodeId x = queue.front();
    queue.pop_front();
    for (const auto& inc : grid.incident(x)) {
      if (grid.is_normally_open(inc.edge)) continue;
      auto& d = depth[static_cast<std::size_t>(inc.neighbor)];
      if (d < 0) {
        d = depth[static_cast<std::size_t>(x)] + 1;
        queue.push_back(inc.neighbor);
      }
    }
  }
  return depth;
}

int RouteLengthStats::suggested_depth() const {
  return static_cast<int>(std::lround(avg));
}

namespace {

void accumulate_routes(const Grid& grid, RouteLengthStats& stats, double& sum) {
  const auto depth = radial_depths(grid);
  std::size_t found = 0;
  for (const auto& s : grid.nodes()) {
    if (s.is_source()) continue;
    std::size_t radial_degree = 0;
    for (const auto& inc : grid.incident(s.id)) {
      if (!grid.is_normally_open(inc.edge)) ++radial_degree;
    }
    const int d = depth[static_cast<std::size_t>(s.id)];
    if (radial_degree != 1 || d < 0) continue;
    if (stats.routes == 0) {
      stats.min = stats.max = d;
    } else {
      stats.min = std::min(stats.min, d);
      stats.max = std::max(stats.max, d);
    }
    ++stats.routes;
    ++found;
    sum += d;
  }
  if (found == 0) throw std::invalid_argument("grid has no leaf stations");
}

}  // namespace

RouteLengthStats route_length_stats(std::span<const Grid> grids) {
  RouteLengthStats stats;
  double sum = 0.0;
  for (const auto& g : grids) accumulate_routes(g, stats, sum);
  if (stats.routes > 0) stats.avg = sum / static_cast<double>(stats.routes);
  return stats;
}

RouteLengthStats route_length_stats(const Grid& grid) {
  return route_length_stats(std::span<const Grid>(&grid, 1));
}

}  // namespace gridgin
