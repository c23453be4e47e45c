#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridgin/grid.hpp"

namespace gridgin {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
  bool valid() const noexcept { return lo <= hi; }
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
  bool valid() const noexcept { return lo <= hi; }
  friend bool operator==(const RealRange&, const RealRange&) = default;
};

/// One synthetic grid family ("location"). Feeders leave each primary
/// substation as a trunk with optional laterals; every radial leaf is tied
/// to another feeder through a normally-open cable, forming open rings.
struct LocationProfile {
  std::string name;
  IntRange sources{1, 1};
  IntRange feeders_per_source{2, 2};
  IntRange trunk_length{12, 20};
  double lateral_probability = 0.0;  // per trunk station past the second
  IntRange lateral_length{1, 3};
  bool leaf_ties = true;       // tie every radial leaf to another feeder
  IntRange extra_ties{0, 0};   // mid-feeder ties beyond the leaf ties
  int max_ties = 4;            // topologies with more ties are redrawn
  IntRange node_count{2, 1000};
  RealRange load_kw{60.0, 260.0};
  RealRange impedance_ohm{0.03, 0.12};
  std::vector<double> cable_ratings_a{180.0, 240.0, 300.0, 360.0};
  RealRange stress{0.3, 0.75};  // global load multiplier
  double nominal_voltage_v = 10500.0;
  double weight = 1.0;         // relative share of dataset samples

  friend bool operator==(const LocationProfile&, const LocationProfile&) = default;
};

/// Four families of increasing size and meshing, small to very large.
std::vector<LocationProfile> default_locations();

struct GeneratorConfig {
  std::size_t n_samples = 400;  // base (non-augmented) samples
  std::vector<LocationProfile> locations = default_locations();
  double balance = 0.5;  // fraction labelled n-1
  double test_fraction = 0.2;
  double validation_fraction = 0.1;
  double max_deviation = 0.05;
  int max_attempts = 400;
  int max_augment_attempts = 12;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  /// Empty when the config is usable.
  std::vector<std::string> problems() const;
};

/// Topology and electrical parameters only, no label.
Grid sample_grid(const LocationProfile& profile, std::uint64_t seed);

/// Draws grids from `profile` until one carries `target_label` (if given),
/// then attaches features and the oracle label. Fully determined by seed.
LabeledSample generate_grid(const LocationProfile& profile, std::uint64_t seed,
                            std::optional<int> target_label, double max_deviation = 0.05,
                            int max_attempts = 400);

}  // namespace gridgin
