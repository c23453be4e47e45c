#include "gridgin/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "gridgin/contingency.hpp"
#include "gridgin/rng.hpp"

namespace gridgin {

const char* to_string(AugmentAction a) noexcept {
  return a == AugmentAction::AddNodes ? "add_nodes" : "remove_nodes";
}

AugmentAction augment_action_from_string(const std::string& s) {
  if (s == "add_nodes") return AugmentAction::AddNodes;
  if (s == "remove_nodes") return AugmentAction::RemoveNodes;
  throw std::invalid_argument("unknown augmentation action '" + s + "'");
}

std::vector<NodeId> CandidateSet::nodes() const {
  std::vector<NodeId> out;
  for (const auto& s : sites) {
    if (s.kind != CandidateSite::Kind::SplitEdge) out.push_back(s.id);
  }
  return out;
}

std::vector<EdgeId> CandidateSet::edges() const {
  std::vector<EdgeId> out;
  for (const auto& s : sites) {
    if (s.kind == CandidateSite::Kind::SplitEdge) out.push_back(s.id);
  }
  return out;
}

namespace {

using Row = std::array<double, 4>;

// Mutable copy of a sample; `origin` maps current node ids to source ids
// (-1 for added stations).
struct Work {
  std::vector<Station> nodes;
  std::vector<Cable> edges;
  std::vector<char> open;
  std::vector<Row> nf;
  std::vector<Row> ef;
  std::vector<NodeId> origin;

  explicit Work(const LabeledSample& s)
      : nodes(s.grid.nodes()), edges(s.grid.edges()), open(s.grid.edge_count(), 0) {
    for (EdgeId e : s.grid.normally_open()) open[static_cast<std::size_t>(e)] = 1;
    for (std::size_t v = 0; v < nodes.size(); ++v) {
      Row r;
      for (std::size_t c = 0; c < 4; ++c) r[c] = s.features.node_features(v, c);
      nf.push_back(r);
      origin.push_back(static_cast<NodeId>(v));
    }
    for (std::size_t e = 0; e < edges.size(); ++e) {
      Row r;
      for (std::size_t c = 0; c < 4; ++c) r[c] = s.features.edge_features(e, c);
      ef.push_back(r);
    }
  }

  Grid grid() const {
    std::vector<EdgeId> o;
    for (std::size_t e = 0; e < open.size(); ++e) {
      if (open[e]) o.push_back(static_cast<EdgeId>(e));
    }
    return Grid(nodes, edges, std::move(o));
  }

  void remove_node(NodeId x) {
    std::vector<Cable> kept_edges;
    std::vector<char> kept_open;
    std::vector<Row> kept_ef;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      Cable c = edges[e];
      if (c.u == x || c.v == x) continue;
      if (c.u > x) --c.u;
      if (c.v > x) --c.v;
      c.id = static_cast<EdgeId>(kept_edges.size());
      kept_edges.push_back(c);
      kept_open.push_back(open[e]);
      kept_ef.push_back(ef[e]);
    }
    edges = std::move(kept_edges);
    open = std::move(kept_open);
    ef = std::move(kept_ef);
    const auto i = static_cast<std::size_t>(x);
    nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(i));
    nf.erase(nf.begin() + static_cast<std::ptrdiff_t>(i));
    origin.erase(origin.begin() + static_cast<std::ptrdiff_t>(i));
    for (std::size_t v = 0; v < nodes.size(); ++v) nodes[v].id = static_cast<NodeId>(v);
  }

  NodeId add_node(const Station& like) {
    Station s = like;
    s.id = static_cast<NodeId>(nodes.size());
    s.kind = StationKind::DistributionStation;
    s.load_kw = 0.0;
    nodes.push_back(s);
    nf.push_back(Row{});
    origin.push_back(-1);
    return s.id;
  }

  EdgeId add_edge(NodeId a, NodeId b, bool is_open) {
    Cable c;
    c.id = static_cast<EdgeId>(edges.size());
    c.u = a;
    c.v = b;
    edges.push_back(c);
    open.push_back(is_open ? 1 : 0);
    ef.push_back(Row{});
    return c.id;
  }
};

// Radial-state feeder of every node: the first station below its substation
// (-1 for substations and unserved nodes).
std::vector<NodeId> feeder_of(const Grid& g) {
  std::vector<NodeId> feeder(g.node_count(), -1);
  std::vector<char> seen(g.node_count(), 0);
  std::vector<NodeId> queue;
  for (NodeId s : g.sources()) {
    seen[static_cast<std::size_t>(s)] = 1;
    queue.push_back(s);
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const NodeId x = queue[head];
    for (const auto& inc : g.incident(x)) {
      if (g.is_normally_open(inc.edge)) continue;
      const auto y = static_cast<std::size_t>(inc.neighbor);
      if (seen[y]) continue;
      seen[y] = 1;
      feeder[y] = g.node(x).is_source() ? inc.neighbor : feeder[static_cast<std::size_t>(x)];
      queue.push_back(inc.neighbor);
    }
  }
  return feeder;
}

std::size_t radial_degree(const Grid& g, NodeId x) {
  std::size_t d = 0;
  for (const auto& inc : g.incident(x)) {
    if (!g.is_normally_open(inc.edge)) ++d;
  }
  return d;
}

bool connected_without(const Grid& g, NodeId x) {
  const std::size_t n = g.node_count();
  if (n <= 1) return false;
  std::vector<char> seen(n, 0);
  seen[static_cast<std::size_t>(x)] = 1;
  const NodeId start = x == 0 ? 1 : 0;
  std::vector<NodeId> stack{start};
  seen[static_cast<std::size_t>(start)] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const NodeId y = stack.back();
    stack.pop_back();
    for (const auto& inc : g.incident(y)) {
      auto& s = seen[static_cast<std::size_t>(inc.neighbor)];
      if (s) continue;
      s = 1;
      ++reached;
      stack.push_back(inc.neighbor);
    }
  }
  return reached == n - 1;
}

bool removable(const Grid& g, const std::vector<NodeId>& feeder, NodeId x) {
  const auto& s = g.node(x);
  if (s.is_source() || radial_degree(g, x) != 1) return false;
  const NodeId f = feeder[static_cast<std::size_t>(x)];
  if (f < 0) return false;
  const auto members = std::count(feeder.begin(), feeder.end(), f);
  if (members < 2) return false;
  return connected_without(g, x);
}

// Splits `a` into two parts that add back to `a` exactly; the first part is
// the share `f` moved away.
std::pair<double, double> split_exact(double a, double f) {
  const double small = a * std::min(f, 1.0 - f);
  const double big = a - small;
  const double rest = a - big;  // exact: big lies in [a/2, a]
  return f <= 0.5 ? std::pair{rest, big} : std::pair{big, rest};
}

Row mean_rows(const std::vector<Row>& rows, const std::vector<std::size_t>& ids) {
  Row r{};
  for (std::size_t i : ids) {
    for (std::size_t c = 0; c < 4; ++c) r[c] += rows[i][c];
  }
  for (double& x : r) x /= static_cast<double>(ids.size());
  return r;
}

// Fills features for the new station w and the new cables `fresh`, averaging
// over everything already present within two hops of w.
void average_two_hop(Work& w, NodeId station, const std::vector<EdgeId>& fresh, const Row& fallback_edge) {
  const Grid g = w.grid();
  const auto ball = k_hop_neighborhood(g, station, 2);
  std::vector<std::size_t> node_ids;
  for (NodeId v : ball.nodes) {
    if (v != station) node_ids.push_back(static_cast<std::size_t>(v));
  }
  std::vector<std::size_t> edge_ids;
  for (EdgeId e : ball.edges) {
    if (std::find(fresh.begin(), fresh.end(), e) == fresh.end()) {
      edge_ids.push_back(static_cast<std::size_t>(e));
    }
  }
  auto& row = w.nf[static_cast<std::size_t>(station)];
  const double power = row[kPowerConsumption];
  row = mean_rows(w.nf, node_ids);
  row[kPowerConsumption] = power;
  const Row edge_row = edge_ids.empty() ? fallback_edge : mean_rows(w.ef, edge_ids);
  for (EdgeId e : fresh) {
    const auto i = static_cast<std::size_t>(e);
    w.ef[i] = edge_row;
    w.edges[i].impedance_ohm = edge_row[kImpedance];
    w.edges[i].nominal_current_a = edge_row[kNominalCurrent];
  }
}

LabeledSample finish(Work& w, const LabeledSample& source) {
  LabeledSample out;
  out.grid = w.grid();
  out.features.node_features = Matrix(w.nodes.size(), kNodeFeatureCount);
  out.features.edge_features = Matrix(w.edges.size(), kEdgeFeatureCount);
  for (std::size_t v = 0; v < w.nodes.size(); ++v) {
    w.nf[v][kNodeDegree] = static_cast<double>(out.grid.degree(static_cast<NodeId>(v)));
    for (std::size_t c = 0; c < 4; ++c) out.features.node_features(v, c) = w.nf[v][c];
  }
  for (std::size_t e = 0; e < w.edges.size(); ++e) {
    for (std::size_t c = 0; c < 4; ++c) out.features.edge_features(e, c) = w.ef[e][c];
  }
  out.label = source.label;
  out.provenance = Provenance::Augmented;
  return out;
}

}  // namespace

CandidateSet select_candidates(const LabeledSample& sample) {
  const Grid& g = sample.grid;
  CandidateSet out;
  if (sample.label == 0) {
    out.action = AugmentAction::RemoveNodes;
    const auto feeder = feeder_of(g);
    for (const auto& s : g.nodes()) {
      if (removable(g, feeder, s.id)) out.sites.push_back({CandidateSite::Kind::RemoveLeaf, s.id});
    }
  } else {
    out.action = AugmentAction::AddNodes;
    for (const auto& c : g.edges()) out.sites.push_back({CandidateSite::Kind::SplitEdge, c.id});
    for (const auto& s : g.nodes()) {
      if (s.load_kw == 0.0) out.sites.push_back({CandidateSite::Kind::AttachLeaf, s.id});
    }
  }
  if (out.sites.empty()) throw AugmentError("no augmentation candidates");
  return out;
}

std::pair<LabeledSample, AugmentationRecord> augment(const LabeledSample& sample, std::uint64_t seed,
                                                     const std::string& source_id,
                                                     const AugmentOptions& options) {
  const CandidateSet cands = select_candidates(sample);
  Rng rng(seed);
  std::vector<CandidateSite> sites = cands.sites;
  std::shuffle(sites.begin(), sites.end(), rng);
  const int count = uniform_int(rng, 1, static_cast<int>(sites.size()));

  AugmentationRecord record;
  record.source_id = source_id;
  record.action = cands.action;
  Work w(sample);

  if (cands.action == AugmentAction::RemoveNodes) {
    int removed = 0;
    for (const auto& site : sites) {
      if (removed == count) break;
      const auto it = std::find(w.origin.begin(), w.origin.end(), site.id);
      const auto x = static_cast<NodeId>(it - w.origin.begin());
      const Grid g = w.grid();
      if (!removable(g, feeder_of(g), x)) continue;
      w.remove_node(x);
      record.affected.push_back(site.id);
      ++removed;
    }
    std::sort(record.affected.begin(), record.affected.end());
  } else {
    for (int i = 0; i < count; ++i) {
      const auto& site = sites[static_cast<std::size_t>(i)];
      const double f = uniform(rng, 0.0, 1.0);
      if (site.kind == CandidateSite::Kind::SplitEdge) {
        const auto e = static_cast<std::size_t>(site.id);
        const Cable old = w.edges[e];
        const Row old_row = w.ef[e];
        const bool was_open = w.open[e] != 0;
        NodeId donor = old.v;
        if (!was_open) {
          const auto depth = radial_depths(w.grid());
          donor = depth[static_cast<std::size_t>(old.u)] > depth[static_cast<std::size_t>(old.v)] ? old.u : old.v;
        }
        const NodeId x = w.add_node(w.nodes[static_cast<std::size_t>(donor)]);
        // The half towards u takes over the old id and is closed; an open
        // cable stays open on the half towards v.
        w.edges[e].v = x;
        w.edges[e].u = old.u;
        w.open[e] = 0;
        const EdgeId second = w.add_edge(x, old.v, was_open);
        const auto [moved, kept] = split_exact(w.nodes[static_cast<std::size_t>(donor)].load_kw, f);
        w.nodes[static_cast<std::size_t>(donor)].load_kw = kept;
        w.nf[static_cast<std::size_t>(donor)][kPowerConsumption] = kept;
        w.nodes[static_cast<std::size_t>(x)].load_kw = moved;
        w.nf[static_cast<std::size_t>(x)][kPowerConsumption] = moved;
        average_two_hop(w, x, {static_cast<EdgeId>(e), second}, old_row);
        record.affected.push_back(x);
      } else {
        const NodeId at = site.id;
        const NodeId x = w.add_node(w.nodes[static_cast<std::size_t>(at)]);
        const auto [moved, kept] = split_exact(w.nodes[static_cast<std::size_t>(at)].load_kw, f);
        w.nodes[static_cast<std::size_t>(at)].load_kw = kept;
        w.nf[static_cast<std::size_t>(at)][kPowerConsumption] = kept;
        w.nodes[static_cast<std::size_t>(x)].load_kw = moved;
        w.nf[static_cast<std::size_t>(x)][kPowerConsumption] = moved;
        const EdgeId link = w.add_edge(at, x, false);
        Row fallback{};
        const Grid current = w.grid();
        for (const auto& inc : current.incident(at)) {
          if (inc.edge != link) {
            fallback = w.ef[static_cast<std::size_t>(inc.edge)];
            break;
          }
        }
        average_two_hop(w, x, {link}, fallback);
        record.affected.push_back(x);
      }
    }
  }

  LabeledSample out = finish(w, sample);
  N1Options oracle;
  oracle.max_deviation = options.max_deviation;
  oracle.threads = options.threads;
  oracle.stop_at_first_failure = true;
  record.label_verified = label_n1(out.grid, oracle).label == sample.label;
  return {std::move(out), std::move(record)};
}

}  // namespace gridgin
