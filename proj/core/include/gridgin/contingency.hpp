#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridgin/flow.hpp"
#include "gridgin/grid.hpp"

namespace gridgin {

/// A restoring reconfiguration after the loss of one cable.
struct SwitchOption {
  EdgeId failed_edge = -1;
  /// Cables held open after reconfiguration, sorted. Excludes the failed
  /// cable and cables inside de-energised islands.
  std::vector<EdgeId> open_set;
  /// Zero-load stations that the failure cuts off from every source.
  std::vector<NodeId> deenergized;

  friend bool operator==(const SwitchOption&, const SwitchOption&) = default;
};

struct SearchOptions {
  double max_deviation = kDefaultMaxDeviation;
};

struct SearchStats {
  std::uint64_t configurations = 0;  // radial topologies whose flow was evaluated
  std::uint64_t nodes = 0;           // search-tree nodes visited
};

/// Exhaustive search for a switching option after `failed_edge` is lost.
///
/// The surviving network is split into blocks at the substations; each block
/// is searched on its own. Within a block, cables are ordered by a
/// breadth-first sweep from the substations and the depth-first search tries
/// "closed" before "open", so the first radial topology visited is the
/// breadth-first spanning forest. Pruning discards only branches that contain
/// no radial topology within limits, so the search is exhaustive: no option
/// is returned iff none exists. The result is deterministic for a given grid.
/// A failure that strands a loaded station has no option.
std::optional<SwitchOption> find_switch_option(const Grid& grid, EdgeId failed_edge,
                                               const SearchOptions& options = {},
                                               SearchStats* stats = nullptr);

struct N1Options {
  double max_deviation = kDefaultMaxDeviation;
  unsigned threads = 1;
  /// Skip the remaining contingencies after the first unrecoverable one.
  /// The label is unaffected; the witness is then partial.
  bool stop_at_first_failure = false;
};

struct N1Result {
  int label = 0;
  /// witness[e] is the option found for the loss of cable e (or none).
  std::vector<std::optional<SwitchOption>> witness;
  std::vector<char> evaluated;  // evaluated[e] == 0 only with stop_at_first_failure
  SearchStats stats;
  double elapsed_seconds = 0.0;
};

N1Result label_n1(const Grid& grid, const N1Options& options = {});

/// One-line JSON record: {"label":..,"elapsed_s":..,"witness":[...]}.
std::string n1_result_to_json(const N1Result& result, bool include_timing = true);

}  // namespace gridgin
