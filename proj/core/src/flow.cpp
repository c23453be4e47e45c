#include "gridgin/flow.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <deque>
#include <limits>

#include "detail/forest_flow.hpp"

namespace gridgin {

namespace detail {

std::size_t forest_flow(const Grid& grid, std::span<const char> closed,
                        std::vector<double>& edge_current, std::vector<double>& node_voltage,
                        ForestScratch& s) {
  const std::size_t n = grid.node_count();
  const auto& nodes = grid.nodes();
  const auto& edges = grid.edges();
  edge_current.assign(grid.edge_count(), 0.0);
  node_voltage.assign(n, std::numeric_limits<double>::quiet_NaN());
  s.order.clear();
  s.parent_edge.assign(n, -1);
  s.parent.assign(n, -1);
  s.subtree_current.assign(n, 0.0);

  std::vector<char> visited(n, 0);
  for (const auto& st : nodes) {
    if (!st.is_source()) continue;
    visited[static_cast<std::size_t>(st.id)] = 1;
    s.order.push_back(st.id);
  }
  for (std::size_t head = 0; head < s.order.size(); ++head) {
    const NodeId x = s.order[head];
    for (const auto& inc : grid.incident(x)) {
      if (!closed[static_cast<std::size_t>(inc.edge)]) continue;
      const auto y = static_cast<std::size_t>(inc.neighbor);
      if (visited[y]) continue;
      visited[y] = 1;
      s.parent[y] = x;
      s.parent_edge[y] = inc.edge;
      s.order.push_back(inc.neighbor);
    }
  }

  for (auto it = s.order.rbegin(); it != s.order.rend(); ++it) {
    const auto v = static_cast<std::size_t>(*it);
    s.subtree_current[v] += load_current_a(nodes[v]);
    if (s.parent[v] >= 0) s.subtree_current[static_cast<std::size_t>(s.parent[v])] += s.subtree_current[v];
  }
  for (const NodeId x : s.order) {
    const auto v = static_cast<std::size_t>(x);
    if (s.parent[v] < 0) {
      node_voltage[v] = nodes[v].nominal_voltage_v;
      continue;
    }
    const auto e = static_cast<std::size_t>(s.parent_edge[v]);
    const double i = s.subtree_current[v];
    // Positive current flows u -> v; here it flows parent -> child.
    edge_current[e] = edges[e].u == s.parent[v] ? i : -i;
    node_voltage[v] = node_voltage[static_cast<std::size_t>(s.parent[v])] - i * edges[e].impedance_ohm;
  }
  return s.order.size();
}

}  // namespace detail

FlowSolution radial_flow(const Grid& grid, std::span<const EdgeId> open_set) {
  if (!is_radial(grid, open_set)) throw FlowError("open set does not yield a radial topology");
  std::vector<char> closed(grid.edge_count(), 1);
  for (EdgeId e : open_set) closed[static_cast<std::size_t>(e)] = 0;
  FlowSolution sol;
  sol.state = FlowState::RadialInitial;
  detail::ForestScratch scratch;
  detail::forest_flow(grid, closed, sol.edge_current, sol.node_voltage, scratch);
  return sol;
}

FlowSolution closed_flow(const Grid& grid) {
  const std::size_t n = grid.node_count();
  const auto& nodes = grid.nodes();
  const auto sources = grid.sources();
  if (sources.empty()) throw FlowError("singular system: no primary substation");

  // Every node must see a source, otherwise the reduced Laplacian is singular.
  {
    std::vector<char> reached(n, 0);
    std::deque<NodeId> queue(sources.begin(), sources.end());
    for (NodeId s : sources) reached[static_cast<std::size_t>(s)] = 1;
    while (!queue.empty()) {
      const NodeId x = queue.front();
      queue.pop_front();
      for (const auto& inc : grid.incident(x)) {
        auto& r = reached[static_cast<std::size_t>(inc.neighbor)];
        if (!r) {
          r = 1;
          queue.push_back(inc.neighbor);
        }
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (!reached[v]) throw FlowError("singular system: node " + std::to_string(v) + " cannot reach a source");
    }
  }

  // Unknowns are offsets from a reference voltage so that small drops keep
  // full precision.
  const double v_ref = nodes[static_cast<std::size_t>(sources.front())].nominal_voltage_v;
  std::vector<int> index(n, -1);
  int unknowns = 0;
  for (std::size_t v = 0; v < n; ++v) {
    if (!nodes[v].is_source()) index[v] = unknowns++;
  }

  std::vector<double> offset(n, 0.0);
  for (NodeId s : sources) {
    offset[static_cast<std::size_t>(s)] = nodes[static_cast<std::size_t>(s)].nominal_voltage_v - v_ref;
  }

  if (unknowns > 0) {
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(unknowns);
    for (std::size_t v = 0; v < n; ++v) {
      if (index[v] >= 0) rhs[index[v]] -= load_current_a(nodes[v]);
    }
    for (const auto& c : grid.edges()) {
      const double g = 1.0 / c.impedance_ohm;
      const int iu = index[static_cast<std::size_t>(c.u)];
      const int iv = index[static_cast<std::size_t>(c.v)];
      if (iu >= 0) triplets.emplace_back(iu, iu, g);
      if (iv >= 0) triplets.emplace_back(iv, iv, g);
      if (iu >= 0 && iv >= 0) {
        triplets.emplace_back(iu, iv, -g);
        triplets.emplace_back(iv, iu, -g);
      } else if (iu >= 0) {
        rhs[iu] += g * offset[static_cast<std::size_t>(c.v)];
      } else if (iv >= 0) {
        rhs[iv] += g * offset[static_cast<std::size_t>(c.u)];
      }
    }
    Eigen::SparseMatrix<double> lap(unknowns, unknowns);
    lap.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(lap);
    if (solver.info() != Eigen::Success) throw FlowError("singular system in closed-state load flow");
    const Eigen::VectorXd x = solver.solve(rhs);
    if (solver.info() != Eigen::Success) throw FlowError("closed-state load flow failed to solve");
    for (std::size_t v = 0; v < n; ++v) {
      if (index[v] >= 0) offset[v] = x[index[v]];
    }
  }

  FlowSolution sol;
  sol.state = FlowState::Closed;
  sol.node_voltage.resize(n);
  for (std::size_t v = 0; v < n; ++v) sol.node_voltage[v] = v_ref + offset[v];
  sol.edge_current.resize(grid.edge_count());
  for (const auto& c : grid.edges()) {
    sol.edge_current[static_cast<std::size_t>(c.id)] =
        (offset[static_cast<std::size_t>(c.u)] - offset[static_cast<std::size_t>(c.v)]) / c.impedance_ohm;
  }
  return sol;
}

LimitReport check_limits(const FlowSolution& flow, const Grid& grid, double max_deviation) {
  if (flow.edge_current.size() != grid.edge_count() || flow.node_voltage.size() != grid.node_count()) {
    throw std::invalid_argument("flow solution does not match grid dimensions");
  }
  LimitReport report;
  for (const auto& c : grid.edges()) {
    if (std::abs(flow.edge_current[static_cast<std::size_t>(c.id)]) > c.nominal_current_a) {
      report.overloaded_edges.push_back(c.id);
    }
  }
  for (const auto& s : grid.nodes()) {
    const double v = flow.node_voltage[static_cast<std::size_t>(s.id)];
    if (std::isnan(v)) continue;
    if (std::abs(s.nominal_voltage_v - v) / s.nominal_voltage_v > max_deviation) {
      report.voltage_violations.push_back(s.id);
    }
  }
  report.feasible = report.overloaded_edges.empty() && report.voltage_violations.empty();
  return report;
}

double source_injection_a(const FlowSolution& flow, const Grid& grid) {
  double total = 0.0;
  for (const auto& s : grid.nodes()) {
    if (!s.is_source()) continue;
    for (const auto& inc : grid.incident(s.id)) {
      const auto& c = grid.edge(inc.edge);
      const double i = flow.edge_current[static_cast<std::size_t>(inc.edge)];
      total += c.u == s.id ? i : -i;
    }
  }
  return total;
}

double total_load_current_a(const Grid& grid) {
  double total = 0.0;
  for (const auto& s : grid.nodes()) total += load_current_a(s);
  return total;
}

FeatureSet compute_features(const Grid& grid) {
  const FlowSolution radial = radial_flow(grid, grid.normally_open());
  const FlowSolution closed = closed_flow(grid);
  FeatureSet fs;
  fs.node_features = Matrix(grid.node_count(), kNodeFeatureCount);
  fs.edge_features = Matrix(grid.edge_count(), kEdgeFeatureCount);
  for (const auto& s : grid.nodes()) {
    const auto v = static_cast<std::size_t>(s.id);
    fs.node_features(v, kPowerConsumption) = s.load_kw;
    fs.node_features(v, kVoltageRadial) = radial.node_voltage[v];
    fs.node_features(v, kVoltageClosed) = closed.node_voltage[v];
    fs.node_features(v, kNodeDegree) = static_cast<double>(grid.degree(s.id));
  }
  for (const auto& c : grid.edges()) {
    const auto e = static_cast<std::size_t>(c.id);
    fs.edge_features(e, kImpedance) = c.impedance_ohm;
    fs.edge_features(e, kNominalCurrent) = c.nominal_current_a;
    fs.edge_features(e, kCurrentRadial) = std::abs(radial.edge_current[e]);
    fs.edge_features(e, kCurrentClosed) = std::abs(closed.edge_current[e]);
  }
  return fs;
}

}  // namespace gridgin
