#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "gridgin/grid.hpp"

namespace gridgin {

/// Raised when a load flow cannot be solved for the given topology.
class FlowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FlowState { RadialInitial, Closed };

/// Linearised (active-power only, lossless) load-flow result. Currents are
/// signed along the canonical cable orientation u -> v.
struct FlowSolution {
  std::vector<double> edge_current;  // amperes
  std::vector<double> node_voltage;  // volts
  FlowState state = FlowState::RadialInitial;
};

struct LimitReport {
  std::vector<EdgeId> overloaded_edges;
  std::vector<NodeId> voltage_violations;
  bool feasible = true;
};

inline constexpr double kDefaultMaxDeviation = 0.05;

/// Constant-current load model: I = P / V_nominal.
inline double load_current_a(const Station& s) noexcept {
  return s.load_kw * 1000.0 / s.nominal_voltage_v;
}

/// Tree traversal of the radial topology obtained by opening `open_set`.
/// Throws FlowError if that topology is not radial.
FlowSolution radial_flow(const Grid& grid, std::span<const EdgeId> open_set);

/// Meshed solution with every cable closed: weighted-Laplacian system with
/// conductance 1/Z, load current injections and sources held at nominal
/// voltage. Throws FlowError when the system is singular.
FlowSolution closed_flow(const Grid& grid);

LimitReport check_limits(const FlowSolution& flow, const Grid& grid,
                         double max_deviation = kDefaultMaxDeviation);

/// Sum of current leaving the primary substations.
double source_injection_a(const FlowSolution& flow, const Grid& grid);
/// Sum of load currents over all stations.
double total_load_current_a(const Grid& grid);

/// Raw node/edge feature tables: load, radial and closed voltages, degree;
/// impedance, rating, radial and closed current magnitudes.
FeatureSet compute_features(const Grid& grid);

}  // namespace gridgin
