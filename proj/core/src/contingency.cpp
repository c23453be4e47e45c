#include "gridgin/contingency.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>

#include "detail/forest_flow.hpp"
#include "detail/union_find.hpp"
#include "gridgin/parallel.hpp"
#include "json.hpp"

namespace gridgin {

namespace {

class SwitchSearch {
 public:
  SwitchSearch(const Grid& grid, EdgeId failed, double max_deviation)
      : grid_(grid),
        failed_(failed),
        max_deviation_(max_deviation),
        alive_(grid.node_count(), 0),
        position_(grid.edge_count(), -1),
        closed_(grid.edge_count(), 0),
        uf_(grid.node_count()),
        load_(grid.node_count(), 0.0),
        viable_(grid.node_count(), 0),
        path_r_(grid.node_count(), 0.0),
        spare_(grid.node_count(), 0.0) {
    for (const auto& st : grid.nodes()) {
      if (st.load_kw < 0.0) monotone_ = false;
    }
  }

  std::optional<SwitchOption> run(SearchStats& stats) {
    SwitchOption option;
    option.failed_edge = failed_;
    if (!mark_alive(option.deenergized)) return std::nullopt;
    for (NodeId s : grid_.sources()) uf_.set_mark(static_cast<std::uint32_t>(s));
    stats_ = &stats;

    // Source voltages are fixed, so blocks that meet only at substations are
    // independent and are searched one after another.
    for (const auto& block : blocks()) {
      for (EdgeId e : candidates_) position_[static_cast<std::size_t>(e)] = -1;
      candidates_ = breadth_first(block.edges);
      for (std::size_t i = 0; i < candidates_.size(); ++i) {
        position_[static_cast<std::size_t>(candidates_[i])] = static_cast<int>(i);
      }
      block_stations_ = block.stations;
      target_open_ = block.edges.size() - block.stations.size();
      if (!descend(0, 0)) return std::nullopt;
      for (EdgeId e : candidates_) {
        if (!closed_[static_cast<std::size_t>(e)]) option.open_set.push_back(e);
      }
    }
    std::sort(option.open_set.begin(), option.open_set.end());
    return option;
  }

 private:
  struct Block {
    std::vector<EdgeId> edges;       // ascending ids
    std::vector<NodeId> stations;    // non-source stations
  };

  // Block cables in order of discovery by a breadth-first sweep from the
  // substations, ties broken by edge id.
  std::vector<EdgeId> breadth_first(const std::vector<EdgeId>& edges) {
    for (EdgeId e : edges) position_[static_cast<std::size_t>(e)] = 0;
    std::vector<EdgeId> order;
    order.reserve(edges.size());
    seen_.assign(grid_.node_count(), 0);
    bfs_.clear();
    for (NodeId s : grid_.sources()) {
      seen_[static_cast<std::size_t>(s)] = 1;
      bfs_.push_back(s);
    }
    for (std::size_t head = 0; head < bfs_.size(); ++head) {
      std::vector<Incidence> inc(grid_.incident(bfs_[head]).begin(), grid_.incident(bfs_[head]).end());
      std::sort(inc.begin(), inc.end(), [](const Incidence& a, const Incidence& b) { return a.edge < b.edge; });
      for (const auto& i : inc) {
        auto& p = position_[static_cast<std::size_t>(i.edge)];
        if (p != 0) continue;
        p = -1;
        order.push_back(i.edge);
        auto& sn = seen_[static_cast<std::size_t>(i.neighbor)];
        if (!sn) {
          sn = 1;
          bfs_.push_back(i.neighbor);
        }
      }
    }
    return order;
  }

  // Connected pieces of the live graph once every substation is split into
  // one copy per incident cable.
  std::vector<Block> blocks() const {
    const std::size_t n = grid_.node_count();
    std::vector<int> label(n, -1);
    std::vector<Block> out;
    std::vector<NodeId> stack;
    for (const auto& st : grid_.nodes()) {
      const auto v = static_cast<std::size_t>(st.id);
      if (st.is_source() || !alive_[v] || label[v] >= 0) continue;
      const int id = static_cast<int>(out.size());
      out.emplace_back();
      label[v] = id;
      stack.push_back(st.id);
      while (!stack.empty()) {
        const NodeId x = stack.back();
        stack.pop_back();
        out.back().stations.push_back(x);
        for (const auto& inc : grid_.incident(x)) {
          if (inc.edge == failed_) continue;
          const auto y = static_cast<std::size_t>(inc.neighbor);
          if (grid_.node(inc.neighbor).is_source() || label[y] >= 0) continue;
          label[y] = id;
          stack.push_back(inc.neighbor);
        }
      }
    }
    for (const auto& c : grid_.edges()) {
      if (c.id == failed_ || !alive_[static_cast<std::size_t>(c.u)]) continue;
      const int lu = label[static_cast<std::size_t>(c.u)];
      const int lv = label[static_cast<std::size_t>(c.v)];
      if (lu < 0 && lv < 0) {
        out.push_back(Block{{c.id}, {}});
      } else {
        out[static_cast<std::size_t>(lu >= 0 ? lu : lv)].edges.push_back(c.id);
      }
    }
    std::sort(out.begin(), out.end(),
              [](const Block& a, const Block& b) { return a.edges.front() < b.edges.front(); });
    return out;
  }

  // Marks nodes still reachable from a source once the failed cable is out.
  // Returns false if a loaded station is stranded.
  bool mark_alive(std::vector<NodeId>& deenergized) {
    std::deque<NodeId> queue;
    for (NodeId s : grid_.sources()) {
      alive_[static_cast<std::size_t>(s)] = 1;
      queue.push_back(s);
    }
    while (!queue.empty()) {
      const NodeId x = queue.front();
      queue.pop_front();
      for (const auto& inc : grid_.incident(x)) {
        if (inc.edge == failed_) continue;
        auto& a = alive_[static_cast<std::size_t>(inc.neighbor)];
        if (!a) {
          a = 1;
          queue.push_back(inc.neighbor);
        }
      }
    }
    for (const auto& s : grid_.nodes()) {
      if (alive_[static_cast<std::size_t>(s.id)]) continue;
      if (s.load_kw > 0.0) return false;
      deenergized.push_back(s.id);
    }
    return true;
  }

  bool usable(EdgeId e, std::size_t decided_upto) const {
    const int pos = position_[static_cast<std::size_t>(e)];
    if (pos < 0) return false;
    return closed_[static_cast<std::size_t>(e)] || static_cast<std::size_t>(pos) > decided_upto;
  }

  // With candidate `index` opened, can the closed and still-undecided cables
  // of the block connect each of its stations to a source?
  bool connectable_without(std::size_t index) {
    const std::size_t n = grid_.node_count();
    seen_.assign(n, 0);
    bfs_.clear();
    for (NodeId s : grid_.sources()) {
      seen_[static_cast<std::size_t>(s)] = 1;
      bfs_.push_back(s);
    }
    std::size_t reached = 0;
    for (std::size_t head = 0; head < bfs_.size(); ++head) {
      for (const auto& inc : grid_.incident(bfs_[head])) {
        if (!usable(inc.edge, index)) continue;
        auto& s = seen_[static_cast<std::size_t>(inc.neighbor)];
        if (s) continue;
        s = 1;
        ++reached;
        bfs_.push_back(inc.neighbor);
      }
    }
    return reached == block_stations_.size();
  }

  bool evaluate_leaf() {
    ++stats_->configurations;
    detail::forest_flow(grid_, closed_, current_, voltage_, scratch_);
    for (EdgeId e : candidates_) {
      const auto i = static_cast<std::size_t>(e);
      if (closed_[i] && std::abs(current_[i]) > grid_.edges()[i].nominal_current_a) return false;
    }
    for (const auto& s : grid_.nodes()) {
      const double v = voltage_[static_cast<std::size_t>(s.id)];
      if (std::isnan(v)) continue;
      if (std::abs(s.nominal_voltage_v - v) / s.nominal_voltage_v > max_deviation_) return false;
    }
    return true;
  }

  // Closing more cables only grows the source trees, so with non-negative
  // loads every current and voltage drop seen on a partial forest is a lower
  // bound for any completion. A source-free piece must later be fed through
  // one undecided cable on its boundary.
  bool partial_ok(std::size_t index) {
    detail::forest_flow(grid_, closed_, current_, voltage_, scratch_);
    for (std::size_t i = 0; i <= index; ++i) {
      const auto e = static_cast<std::size_t>(candidates_[i]);
      if (closed_[e] && std::abs(current_[e]) > grid_.edges()[e].nominal_current_a) return false;
    }
    for (NodeId x : block_stations_) {
      const auto& st = grid_.node(x);
      const double v = voltage_[static_cast<std::size_t>(x)];
      if (!std::isnan(v) && (st.nominal_voltage_v - v) / st.nominal_voltage_v > max_deviation_) {
        return false;
      }
    }
    // Path resistance and spare capacity from the source down to each node.
    for (NodeId x : scratch_.order) {
      const auto v = static_cast<std::size_t>(x);
      const NodeId parent = scratch_.parent[v];
      if (parent < 0) {
        path_r_[v] = 0.0;
        spare_[v] = std::numeric_limits<double>::infinity();
        continue;
      }
      const auto e = static_cast<std::size_t>(scratch_.parent_edge[v]);
      const auto& c = grid_.edges()[e];
      path_r_[v] = path_r_[static_cast<std::size_t>(parent)] + c.impedance_ohm;
      spare_[v] = std::min(spare_[static_cast<std::size_t>(parent)],
                           c.nominal_current_a - std::abs(current_[e]));
    }
    for (NodeId x : block_stations_) {
      const auto r = uf_.find(static_cast<std::uint32_t>(x));
      load_[r] = 0.0;
      viable_[r] = 0;
    }
    for (NodeId x : block_stations_) {
      if (!std::isnan(voltage_[static_cast<std::size_t>(x)])) continue;
      load_[uf_.find(static_cast<std::uint32_t>(x))] += load_current_a(grid_.node(x));
    }
    // A source-free piece enters its final tree through exactly one boundary
    // cable; entering at a fed node w adds the piece's load to the whole
    // source-to-w path.
    for (NodeId x : block_stations_) {
      if (!std::isnan(voltage_[static_cast<std::size_t>(x)])) continue;
      const auto r = uf_.find(static_cast<std::uint32_t>(x));
      if (viable_[r]) continue;
      const double load = load_[r];
      const auto& st = grid_.node(x);
      for (const auto& inc : grid_.incident(x)) {
        const int pos = position_[static_cast<std::size_t>(inc.edge)];
        if (pos < 0 || static_cast<std::size_t>(pos) <= index) continue;
        const auto& c = grid_.edge(inc.edge);
        if (c.nominal_current_a < load) continue;
        const auto w = static_cast<std::size_t>(inc.neighbor);
        if (std::isnan(voltage_[w])) {
          if (uf_.find(static_cast<std::uint32_t>(inc.neighbor)) == r) continue;
          viable_[r] = 1;
          break;
        }
        if (spare_[w] < load) continue;
        const double v_entry = voltage_[w] - load * (path_r_[w] + c.impedance_ohm);
        if ((st.nominal_voltage_v - v_entry) / st.nominal_voltage_v > max_deviation_) continue;
        viable_[r] = 1;
        break;
      }
    }
    for (NodeId x : block_stations_) {
      if (std::isnan(voltage_[static_cast<std::size_t>(x)]) && !viable_[uf_.find(static_cast<std::uint32_t>(x))]) {
        return false;
      }
    }
    return true;
  }

  // Every remaining candidate must close; no branching is left.
  bool close_rest(std::size_t index) {
    const auto mark = uf_.checkpoint();
    std::size_t i = index;
    bool ok = true;
    for (; i < candidates_.size(); ++i) {
      const auto& c = grid_.edges()[static_cast<std::size_t>(candidates_[i])];
      const auto u = static_cast<std::uint32_t>(c.u);
      const auto v = static_cast<std::uint32_t>(c.v);
      if (uf_.same(u, v) || (uf_.marked(u) && uf_.marked(v))) {
        ok = false;
        break;
      }
      uf_.unite(u, v);
      closed_[static_cast<std::size_t>(c.id)] = 1;
    }
    if (ok && evaluate_leaf()) return true;
    for (std::size_t k = index; k < i; ++k) closed_[static_cast<std::size_t>(candidates_[k])] = 0;
    uf_.rollback(mark);
    return false;
  }

  // Closed-first depth-first search over the candidate order: the first
  // leaf is the breadth-first spanning forest, and trees grow outward from
  // the substations so the partial bounds bite early.
  bool descend(std::size_t index, std::size_t opened) {
    ++stats_->nodes;
    if (index == candidates_.size()) return evaluate_leaf();
    if (opened == target_open_) return close_rest(index);
    const EdgeId e = candidates_[index];
    const std::size_t remaining = candidates_.size() - index - 1;

    if (opened + remaining >= target_open_) {
      const auto& c = grid_.edges()[static_cast<std::size_t>(e)];
      const auto u = static_cast<std::uint32_t>(c.u);
      const auto v = static_cast<std::uint32_t>(c.v);
      if (!uf_.same(u, v) && !(uf_.marked(u) && uf_.marked(v))) {
        const auto mark = uf_.checkpoint();
        uf_.unite(u, v);
        closed_[static_cast<std::size_t>(e)] = 1;
        if ((!monotone_ || partial_ok(index)) && descend(index + 1, opened)) return true;
        closed_[static_cast<std::size_t>(e)] = 0;
        uf_.rollback(mark);
      }
    }
    if (opened < target_open_ && connectable_without(index)) {
      if (descend(index + 1, opened + 1)) return true;
    }
    return false;
  }

  const Grid& grid_;
  EdgeId failed_;
  double max_deviation_;
  std::vector<char> alive_;
  std::vector<EdgeId> candidates_;
  std::vector<int> position_;
  std::vector<char> closed_;
  detail::UnionFind uf_;
  std::size_t target_open_ = 0;
  std::vector<NodeId> block_stations_;
  bool monotone_ = true;
  std::vector<double> load_;
  std::vector<char> viable_;
  std::vector<double> path_r_;
  std::vector<double> spare_;
  SearchStats* stats_ = nullptr;

  std::vector<char> seen_;
  std::vector<NodeId> bfs_;
  std::vector<double> current_;
  std::vector<double> voltage_;
  detail::ForestScratch scratch_;
};

}  // namespace

std::optional<SwitchOption> find_switch_option(const Grid& grid, EdgeId failed_edge,
                                               const SearchOptions& options, SearchStats* stats) {
  if (!grid.valid_edge(failed_edge)) {
    throw GridError("invalid edge id " + std::to_string(failed_edge));
  }
  SearchStats local;
  SwitchSearch search(grid, failed_edge, options.max_deviation);
  auto result = search.run(local);
  if (stats) {
    stats->configurations += local.configurations;
    stats->nodes += local.nodes;
  }
  return result;
}

N1Result label_n1(const Grid& grid, const N1Options& options) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t m = grid.edge_count();
  N1Result result;
  result.witness.assign(m, std::nullopt);
  result.evaluated.assign(m, 0);
  std::vector<SearchStats> stats(m);
  std::atomic<bool> failed{false};
  const SearchOptions search{options.max_deviation};

  parallel_for(m, options.threads, [&](std::size_t i) {
    if (options.stop_at_first_failure && failed.load()) return;
    result.witness[i] = find_switch_option(grid, static_cast<EdgeId>(i), search, &stats[i]);
    result.evaluated[i] = 1;
    if (!result.witness[i]) failed = true;
  });

  result.label = 1;
  for (std::size_t i = 0; i < m; ++i) {
    if (result.evaluated[i] && !result.witness[i]) result.label = 0;
    result.stats.configurations += stats[i].configurations;
    result.stats.nodes += stats[i].nodes;
  }
  if (failed.load()) result.label = 0;
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string n1_result_to_json(const N1Result& result, bool include_timing) {
  nlohmann::json j;
  j["label"] = result.label;
  if (include_timing) j["elapsed_s"] = result.elapsed_seconds;
  j["configurations"] = result.stats.configurations;
  nlohmann::json witness = nlohmann::json::array();
  for (std::size_t e = 0; e < result.witness.size(); ++e) {
    if (!result.evaluated[e]) continue;
    nlohmann::json entry{{"failed_edge", static_cast<EdgeId>(e)}};
    if (const auto& opt = result.witness[e]) {
      entry["option"] = {{"open_set", opt->open_set}, {"deenergized", opt->deenergized}};
    } else {
      entry["option"] = nullptr;
    }
    witness.push_back(std::move(entry));
  }
  j["witness"] = std::move(witness);
  return j.dump();
}

}  // namespace gridgin
