#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gridgin/grid.hpp"

namespace gridgin::detail {

struct ForestScratch {
  std::vector<NodeId> order;
  std::vector<EdgeId> parent_edge;
  std::vector<NodeId> parent;
  std::vector<double> subtree_current;
};

// Linear flow on the forest of `closed` cables, rooted at the sources.
// Nodes not reached from any source keep a NaN voltage and contribute no
// current. Returns the number of nodes reached.
std::size_t forest_flow(const Grid& grid, std::span<const char> closed,
                        std::vector<double>& edge_current, std::vector<double>& node_voltage,
                        ForestScratch& scratch);

}  // namespace gridgin::detail
