#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "gridgin/contingency.hpp"
#include "gridgin/flow.hpp"
#include "gridgin/grid.hpp"
#include "gridgin/rng.hpp"

namespace testing {

using namespace gridgin;

inline Station source(NodeId id, double v = 10500.0) {
  return {id, StationKind::PrimarySubstation, 0.0, v};
}
inline Station station(NodeId id, double load_kw, double v = 10500.0) {
  return {id, StationKind::DistributionStation, load_kw, v};
}
inline Cable cable(EdgeId id, NodeId u, NodeId v, double z = 1.0, double rating = 1000.0) {
  return {id, u, v, z, rating};
}

// OS(0) - 1 - 2 closed, 2 - 0 normally open.
inline Grid triangle(double load1 = 105.0, double load2 = 105.0, double rating = 1000.0) {
  return Grid({source(0), station(1, load1), station(2, load2)},
              {cable(0, 0, 1, 1.0, rating), cable(1, 1, 2, 1.0, rating), cable(2, 0, 2, 1.0, rating)}, {2});
}

// OS(0) - 1 - ... - n, no ties.
inline Grid path(int n, double load = 105.0, double z = 1.0) {
  std::vector<Station> nodes{source(0)};
  std::vector<Cable> edges;
  for (int i = 1; i <= n; ++i) {
    nodes.push_back(station(i, load));
    edges.push_back(cable(i - 1, i - 1, i, z));
  }
  return Grid(nodes, edges, {});
}

// Centre 0 is the source; leaves 1..4.
inline Grid star(int leaves = 4) {
  std::vector<Station> nodes{source(0)};
  std::vector<Cable> edges;
  for (int i = 1; i <= leaves; ++i) {
    nodes.push_back(station(i, 50.0));
    edges.push_back(cable(i - 1, 0, i));
  }
  return Grid(nodes, edges, {});
}

// Two feeders from one substation joined by a tie: 0-1-2 and 0-3-4, tie 2-4.
// Each feeder is rated for its own load only, so any reroute overloads.
inline Grid two_feeders_tight() {
  const double i_load = 105.0 * 1000.0 / 10500.0;  // 10 A per station
  return Grid({source(0), station(1, 105), station(2, 105), station(3, 105), station(4, 105)},
              {cable(0, 0, 1, 0.1, 2 * i_load + 1), cable(1, 1, 2, 0.1, i_load + 1),
               cable(2, 0, 3, 0.1, 2 * i_load + 1), cable(3, 3, 4, 0.1, i_load + 1),
               cable(4, 2, 4, 0.1, i_load + 1)},
              {4});
}

// The same ring with ample ratings.
inline Grid two_feeders_ample() {
  return Grid({source(0), station(1, 105), station(2, 105), station(3, 105), station(4, 105)},
              {cable(0, 0, 1, 0.1, 500), cable(1, 1, 2, 0.1, 500), cable(2, 0, 3, 0.1, 500),
               cable(3, 3, 4, 0.1, 500), cable(4, 2, 4, 0.1, 500)},
              {4});
}

/// Random valid grid with at most `max_edges` cables: a radial forest from
/// one or two substations plus normally-open ties.
inline Grid random_small_grid(std::uint64_t seed, int max_edges = 12) {
  Rng rng(seed);
  const int sources = uniform_int(rng, 1, 2);
  const int n = uniform_int(rng, sources + 2, std::min(9, max_edges - 1));
  std::vector<Station> nodes;
  for (int i = 0; i < n; ++i) {
    if (i < sources) {
      nodes.push_back(source(i));
    } else {
      const bool zero = uniform(rng, 0.0, 1.0) < 0.15;
      nodes.push_back(station(i, zero ? 0.0 : uniform(rng, 50.0, 400.0)));
    }
  }
  std::vector<Cable> edges;
  auto has = [&](NodeId a, NodeId b) {
    for (const auto& c : edges) {
      if ((c.u == a && c.v == b) || (c.u == b && c.v == a)) return true;
    }
    return false;
  };
  auto add = [&](NodeId a, NodeId b) {
    edges.push_back({static_cast<EdgeId>(edges.size()), a, b, uniform(rng, 0.5, 6.0),
                     static_cast<double>(uniform_int(rng, 1, 6)) * 20.0});
  };
  for (int i = sources; i < n; ++i) add(uniform_int(rng, 0, i - 1), i);
  std::vector<EdgeId> open;
  // Tie the second substation's tree to the first if needed, then extras.
  std::vector<int> root(n);
  for (int i = 0; i < n; ++i) root[i] = i < sources ? i : -1;
  for (const auto& c : edges) root[c.v] = root[c.u];
  const int extra = uniform_int(rng, sources == 2 ? 1 : 0, 3);
  for (int t = 0, tries = 0; t < extra && static_cast<int>(edges.size()) < max_edges && tries < 100; ++tries) {
    NodeId a = uniform_int(rng, 0, n - 1);
    NodeId b = uniform_int(rng, 0, n - 1);
    if (a == b || has(a, b)) continue;
    if (t == 0 && sources == 2 && root[a] == root[b]) continue;
    open.push_back(static_cast<EdgeId>(edges.size()));
    add(a, b);
    ++t;
  }
  return Grid(nodes, edges, open);
}

/// Independent n-1 oracle: tries every subset of surviving cables as the open
/// set, solves each resulting forest by its own traversal and applies the
/// limits. No pruning, no reuse of the library's search.
inline bool brute_force_survives(const Grid& g, EdgeId failed, double max_dev = 0.05) {
  const int m = static_cast<int>(g.edge_count());
  const int n = static_cast<int>(g.node_count());
  std::vector<EdgeId> live;
  for (EdgeId e = 0; e < m; ++e) {
    if (e != failed) live.push_back(e);
  }
  const std::uint32_t subsets = 1u << live.size();
  for (std::uint32_t mask = 0; mask < subsets; ++mask) {
    std::vector<std::vector<std::pair<int, EdgeId>>> adj(n);
    for (std::size_t k = 0; k < live.size(); ++k) {
      if (mask >> k & 1u) continue;
      const auto& c = g.edge(live[k]);
      adj[c.u].push_back({c.v, c.id});
      adj[c.v].push_back({c.u, c.id});
    }
    std::vector<int> parent(n, -2);
    std::vector<EdgeId> via(n, -1);
    std::vector<int> order;
    bool ok = true;
    for (int s = 0; s < n && ok; ++s) {
      if (!g.node(s).is_source()) continue;
      if (parent[s] != -2) {
        ok = false;  // two substations in one tree
        break;
      }
      parent[s] = -1;
      std::vector<int> stack{s};
      while (!stack.empty() && ok) {
        const int x = stack.back();
        stack.pop_back();
        order.push_back(x);
        for (auto [y, e] : adj[x]) {
          if (e == via[x]) continue;
          if (parent[y] != -2) {
            ok = false;  // cycle or second substation
            break;
          }
          parent[y] = x;
          via[y] = e;
          stack.push_back(y);
        }
      }
    }
    if (!ok) continue;
    for (int v = 0; v < n; ++v) {
      if (parent[v] == -2 && g.node(v).load_kw != 0.0) ok = false;
    }
    if (!ok) continue;
    std::vector<double> down(n, 0.0);
    for (int v = 0; v < n; ++v) down[v] = g.node(v).load_kw * 1000.0 / g.node(v).nominal_voltage_v;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if (parent[*it] >= 0) down[parent[*it]] += down[*it];
    }
    std::vector<double> volt(n, 0.0);
    for (int v : order) {
      if (parent[v] == -1) {
        volt[v] = g.node(v).nominal_voltage_v;
        continue;
      }
      const auto& c = g.edge(via[v]);
      if (down[v] > c.nominal_current_a) ok = false;
      volt[v] = volt[parent[v]] - down[v] * c.impedance_ohm;
      const double vn = g.node(v).nominal_voltage_v;
      if (std::abs(vn - volt[v]) / vn > max_dev) ok = false;
    }
    if (ok) return true;
  }
  return false;
}

inline int brute_force_label(const Grid& g, double max_dev = 0.05) {
  for (EdgeId e = 0; e < static_cast<EdgeId>(g.edge_count()); ++e) {
    if (!brute_force_survives(g, e, max_dev)) return 0;
  }
  return 1;
}

/// Relabels nodes by `perm` (new id of old node v is perm[v]) and edges by
/// `eperm`, keeping the grid isomorphic.
inline Grid permute(const Grid& g, const std::vector<int>& perm, const std::vector<int>& eperm) {
  std::vector<Station> nodes(g.node_count());
  for (const auto& s : g.nodes()) {
    Station t = s;
    t.id = perm[s.id];
    nodes[t.id] = t;
  }
  std::vector<Cable> edges(g.edge_count());
  for (const auto& c : g.edges()) {
    Cable d = c;
    d.id = eperm[c.id];
    d.u = perm[c.u];
    d.v = perm[c.v];
    edges[d.id] = d;
  }
  std::vector<EdgeId> open;
  for (EdgeId e : g.normally_open()) open.push_back(eperm[e]);
  return Grid(nodes, edges, open);
}

/// The post-contingency grid of a switching option: failed cable and
/// de-energised stations removed, ids renumbered, open set as normally-open.
/// Empty when the option de-energises a loaded station.
inline std::optional<Grid> witness_grid(const Grid& g, const SwitchOption& o) {
  std::vector<char> dead(g.node_count(), 0);
  for (NodeId v : o.deenergized) {
    if (g.node(v).load_kw != 0.0) return std::nullopt;
    dead[static_cast<std::size_t>(v)] = 1;
  }
  std::vector<NodeId> remap(g.node_count(), -1);
  std::vector<Station> kept;
  for (const auto& s : g.nodes()) {
    if (dead[static_cast<std::size_t>(s.id)]) continue;
    remap[static_cast<std::size_t>(s.id)] = static_cast<NodeId>(kept.size());
    Station t = s;
    t.id = static_cast<NodeId>(kept.size());
    kept.push_back(t);
  }
  std::vector<Cable> edges;
  std::vector<EdgeId> open;
  for (const auto& c : g.edges()) {
    if (c.id == o.failed_edge) continue;
    const NodeId u = remap[static_cast<std::size_t>(c.u)];
    const NodeId v = remap[static_cast<std::size_t>(c.v)];
    if (u < 0 || v < 0) continue;
    Cable d = c;
    d.id = static_cast<EdgeId>(edges.size());
    d.u = u;
    d.v = v;
    if (std::find(o.open_set.begin(), o.open_set.end(), c.id) != o.open_set.end()) open.push_back(d.id);
    edges.push_back(d);
  }
  return Grid(kept, edges, open);
}

inline std::vector<int> shuffled_ids(std::size_t n, std::uint64_t seed) {
  std::vector<int> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<int>(i);
  Rng rng(seed);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace testing
