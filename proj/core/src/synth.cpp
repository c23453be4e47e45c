#include "gridgin/synth.hpp"

#include <algorithm>
#include <set>

#include "gridgin/contingency.hpp"
#include "gridgin/flow.hpp"
#include "gridgin/rng.hpp"

namespace gridgin {

std::vector<LocationProfile> default_locations() {
  std::vector<LocationProfile> out;

  LocationProfile large;
  large.name = "large";
  large.feeders_per_source = {4, 4};
  large.trunk_length = {12, 19};
  large.lateral_probability = 0.04;
  large.extra_ties = {0, 1};
  large.node_count = {45, 90};
  large.weight = 10.0;
  out.push_back(large);

  LocationProfile small;
  small.name = "small";
  small.feeders_per_source = {2, 2};
  small.trunk_length = {11, 21};
  small.lateral_probability = 0.0;
  small.extra_ties = {0, 1};
  small.node_count = {20, 50};
  small.weight = 10.0;
  out.push_back(small);

  LocationProfile meshed;
  meshed.name = "meshed";
  meshed.feeders_per_source = {3, 3};
  meshed.trunk_length = {11, 19};
  meshed.lateral_probability = 0.05;
  meshed.extra_ties = {1, 1};
  meshed.node_count = {30, 70};
  meshed.weight = 10.0;
  out.push_back(meshed);

  LocationProfile very_large;
  very_large.name = "very_large";
  very_large.sources = {2, 2};
  very_large.feeders_per_source = {2, 3};
  very_large.trunk_length = {12, 19};
  very_large.lateral_probability = 0.03;
  very_large.extra_ties = {0, 1};
  very_large.node_count = {50, 130};
  very_large.weight = 2.0;
  out.push_back(very_large);

  return out;
}

std::vector<std::string> GeneratorConfig::problems() const {
  std::vector<std::string> out;
  if (n_samples == 0) out.push_back("n_samples must be positive");
  if (!(balance > 0.0 && balance < 1.0)) out.push_back("balance must lie in (0,1)");
  if (!(test_fraction >= 0.0 && validation_fraction >= 0.0 &&
        test_fraction + validation_fraction < 1.0)) {
    out.push_back("test and validation fractions must leave room for training");
  }
  if (locations.empty()) out.push_back("at least one location profile is required");
  for (const auto& p : locations) {
    const std::string where = "location '" + p.name + "': ";
    if (!p.sources.valid() || p.sources.lo < 1) out.push_back(where + "bad sources range");
    if (!p.feeders_per_source.valid() || p.feeders_per_source.lo < 1) {
      out.push_back(where + "bad feeders_per_source range");
    }
    if (!p.trunk_length.valid() || p.trunk_length.lo < 1) out.push_back(where + "bad trunk_length range");
    if (!p.lateral_length.valid() || p.lateral_length.lo < 1) out.push_back(where + "bad lateral_length range");
    if (!p.extra_ties.valid() || p.extra_ties.lo < 0) out.push_back(where + "bad extra_ties range");
    if (!p.node_count.valid()) out.push_back(where + "bad node_count range");
    if (!p.load_kw.valid() || p.load_kw.lo < 0.0) out.push_back(where + "bad load range");
    if (!p.impedance_ohm.valid() || p.impedance_ohm.lo <= 0.0) out.push_back(where + "bad impedance range");
    if (p.cable_ratings_a.empty()) out.push_back(where + "no cable ratings");
    if (!p.stress.valid() || p.stress.lo <= 0.0) out.push_back(where + "bad stress range");
    if (!(p.weight > 0.0)) out.push_back(where + "weight must be positive");
    if (p.max_ties < 0) out.push_back(where + "max_ties must be non-negative");
  }
  return out;
}

namespace {

struct Feeder {
  std::vector<NodeId> members;
  std::vector<NodeId> leaves;
  double rating = 0.0;
};

class GridBuilder {
 public:
  GridBuilder(const LocationProfile& p, Rng& rng) : p_(p), rng_(rng) {}

  NodeId add_node(StationKind kind) {
    Station s;
    s.id = static_cast<NodeId>(nodes_.size());
    s.kind = kind;
    s.nominal_voltage_v = p_.nominal_voltage_v;
    nodes_.push_back(s);
    return s.id;
  }

  bool add_cable(NodeId a, NodeId b, double rating, bool open) {
    if (a == b || !pairs_.insert({std::min(a, b), std::max(a, b)}).second) return false;
    Cable c;
    c.id = static_cast<EdgeId>(edges_.size());
    c.u = a;
    c.v = b;
    c.impedance_ohm = uniform(rng_, p_.impedance_ohm.lo, p_.impedance_ohm.hi);
    c.nominal_current_a = rating;
    edges_.push_back(c);
    if (open) open_.push_back(c.id);
    return true;
  }

  double pick_rating() {
    const auto& r = p_.cable_ratings_a;
    return r[static_cast<std::size_t>(uniform_int(rng_, 0, static_cast<int>(r.size()) - 1))];
  }

  std::vector<Station> nodes_;
  std::vector<Cable> edges_;
  std::vector<EdgeId> open_;
  std::set<std::pair<NodeId, NodeId>> pairs_;

 private:
  const LocationProfile& p_;
  Rng& rng_;
};

NodeId pick_member(Rng& rng, const Feeder& f) {
  return f.members[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(f.members.size()) - 1))];
}

}  // namespace

Grid sample_grid(const LocationProfile& p, std::uint64_t seed) {
  Rng rng(seed);
  for (int attempt = 0; attempt < 64; ++attempt) {
    GridBuilder b(p, rng);
    const int sources = uniform_int(rng, p.sources.lo, p.sources.hi);
    for (int s = 0; s < sources; ++s) b.add_node(StationKind::PrimarySubstation);

    std::vector<Feeder> feeders;
    for (int s = 0; s < sources; ++s) {
      const int count = uniform_int(rng, p.feeders_per_source.lo, p.feeders_per_source.hi);
      for (int f = 0; f < count; ++f) {
        Feeder feeder;
        feeder.rating = b.pick_rating();
        const int length = uniform_int(rng, p.trunk_length.lo, p.trunk_length.hi);
        NodeId prev = s;
        std::vector<NodeId> trunk;
        for (int i = 0; i < length; ++i) {
          const NodeId x = b.add_node(StationKind::DistributionStation);
          b.add_cable(prev, x, feeder.rating, false);
          trunk.push_back(x);
          prev = x;
        }
        feeder.members = trunk;
        feeder.leaves.push_back(trunk.back());
        for (std::size_t i = 1; i + 1 < trunk.size(); ++i) {
          if (uniform(rng, 0.0, 1.0) >= p.lateral_probability) continue;
          const int len = uniform_int(rng, p.lateral_length.lo, p.lateral_length.hi);
          NodeId at = trunk[i];
          for (int k = 0; k < len; ++k) {
            const NodeId x = b.add_node(StationKind::DistributionStation);
            b.add_cable(at, x, feeder.rating, false);
            feeder.members.push_back(x);
            at = x;
          }
          feeder.leaves.push_back(at);
        }
        feeders.push_back(std::move(feeder));
      }
    }

    const auto n = static_cast<int>(b.nodes_.size());
    if (n < p.node_count.lo || n > p.node_count.hi) continue;

    // Open rings: trunk ends are paired across feeders in a random order.
    std::vector<std::size_t> order(feeders.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const bool leaf_ties = p.leaf_ties && feeders.size() > 1;
    for (std::size_t i = 0; leaf_ties && i + 1 < order.size(); i += 2) {
      const Feeder& a = feeders[order[i]];
      const Feeder& c = feeders[order[i + 1]];
      b.add_cable(a.leaves.front(), c.leaves.front(),
                  std::min(a.rating, c.rating), true);
    }
    auto other_feeder = [&](std::size_t self) {
      std::size_t j = self;
      while (j == self) j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(feeders.size()) - 1));
      return j;
    };
    if (leaf_ties && order.size() % 2 == 1) {
      const std::size_t last = order.back();
      const Feeder& target = feeders[other_feeder(last)];
      b.add_cable(feeders[last].leaves.front(), pick_member(rng, target),
                  std::min(feeders[last].rating, target.rating), true);
    }
    // Lateral ends get their own tie to a station on another feeder.
    for (std::size_t f = 0; leaf_ties && f < feeders.size(); ++f) {
      for (std::size_t k = 1; k < feeders[f].leaves.size(); ++k) {
        for (int tries = 0; tries < 8; ++tries) {
          const Feeder& target = feeders[other_feeder(f)];
          if (b.add_cable(feeders[f].leaves[k], pick_member(rng, target),
                          std::min(feeders[f].rating, target.rating), true)) {
            break;
          }
        }
      }
    }
    const int extra = feeders.size() > 1 ? uniform_int(rng, p.extra_ties.lo, p.extra_ties.hi) : 0;
    for (int t = 0; t < extra; ++t) {
      for (int tries = 0; tries < 8; ++tries) {
        const std::size_t f = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(feeders.size()) - 1));
        const Feeder& target = feeders[other_feeder(f)];
        if (b.add_cable(pick_member(rng, feeders[f]), pick_member(rng, target),
                        std::min(feeders[f].rating, target.rating), true)) {
          break;
        }
      }
    }

    if (static_cast<int>(b.open_.size()) > p.max_ties) continue;

    // Loads: a grid-wide stress level times a per-feeder factor.
    const double stress = uniform(rng, p.stress.lo, p.stress.hi);
    for (const auto& f : feeders) {
      const double factor = uniform(rng, 0.7, 1.3);
      for (NodeId x : f.members) {
        b.nodes_[static_cast<std::size_t>(x)].load_kw =
            stress * factor * uniform(rng, p.load_kw.lo, p.load_kw.hi);
      }
    }
    Grid grid(std::move(b.nodes_), std::move(b.edges_), std::move(b.open_));
    // Reject disconnected closed graphs.
    if (!validate_grid(grid).ok()) continue;
    return grid;
  }
  throw GenerationError("location '" + p.name + "': cannot meet node_count, max_ties and connectivity");
}

LabeledSample generate_grid(const LocationProfile& profile, std::uint64_t seed,
                            std::optional<int> target_label, double max_deviation,
                            int max_attempts) {
  N1Options oracle;
  oracle.max_deviation = max_deviation;
  oracle.stop_at_first_failure = true;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Grid grid = sample_grid(profile, derive_seed(seed, {static_cast<std::uint64_t>(attempt)}));
    // Operating state must itself respect the limits.
    const auto initial = radial_flow(grid, grid.normally_open());
    if (!check_limits(initial, grid, max_deviation).feasible) continue;
    const int label = label_n1(grid, oracle).label;
    if (target_label && label != *target_label) continue;
    LabeledSample sample;
    sample.features = compute_features(grid);
    sample.grid = std::move(grid);
    sample.label = label;
    sample.provenance = Provenance::Generated;
    return sample;
  }
  throw GenerationError("location '" + profile.name + "': no grid with the requested label after " +
                        std::to_string(max_attempts) + " attempts");
}

}  // namespace gridgin
