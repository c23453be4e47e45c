#include "doctest.h"
#include "gridgin/contingency.hpp"
#include "gridgin/flow.hpp"
#include "gridgin/synth.hpp"
#include "support.hpp"

using namespace gridgin;
using namespace testing;

TEST_CASE("default locations are usable") {
  GeneratorConfig c;
  CHECK(c.problems().empty());
  CHECK(c.locations.size() == 4);
  c.balance = 1.5;
  CHECK_FALSE(c.problems().empty());
}

TEST_CASE("generate_grid is determined by its seed") {
  for (const auto& p : default_locations()) {
    const auto a = generate_grid(p, 11, std::nullopt);
    const auto b = generate_grid(p, 11, std::nullopt);
    CHECK(a.grid == b.grid);
    CHECK(a.features == b.features);
    CHECK(a.label == b.label);
  }
}

TEST_CASE("generated grids are valid and carry oracle labels") {
  for (const auto& p : default_locations()) {
    for (std::uint64_t s = 0; s < 3; ++s) {
      const auto sample = generate_grid(p, 100 + s, std::nullopt);
      CHECK(validate_grid(sample.grid).ok());
      CHECK(validate_features(sample.grid, sample.features).ok());
      CHECK(sample.features == compute_features(sample.grid));
      CHECK(sample.label == label_n1(sample.grid).label);
      CHECK(sample.grid.node_count() >= static_cast<std::size_t>(p.node_count.lo));
      CHECK(sample.grid.node_count() <= static_cast<std::size_t>(p.node_count.hi));
    }
  }
}

TEST_CASE("generate_grid hits a requested label") {
  const auto p = default_locations().front();
  CHECK(generate_grid(p, 3, 1).label == 1);
  CHECK(generate_grid(p, 3, 0).label == 0);
}

TEST_CASE("grids without ties never satisfy n-1") {
  LocationProfile p = default_locations()[1];
  p.leaf_ties = false;
  p.extra_ties = {0, 0};
  p.node_count = {2, 1000};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto sample = generate_grid(p, s, std::nullopt);
    CHECK(sample.grid.normally_open().empty());
    CHECK(sample.label == 0);
  }
  CHECK_THROWS_AS(generate_grid(p, 0, 1, 0.05, 5), GenerationError);
}

TEST_CASE("tied feeders with ample capacity satisfy n-1") {
  LocationProfile p = default_locations()[1];
  p.lateral_probability = 0.0;
  p.cable_ratings_a = {5000.0};
  p.impedance_ohm = {0.001, 0.002};
  p.node_count = {2, 1000};
  for (std::uint64_t s = 0; s < 5; ++s) {
    CHECK(generate_grid(p, s, std::nullopt).label == 1);
  }
}

TEST_CASE("average route length of the defaults is near sixteen hops") {
  std::vector<Grid> grids;
  for (const auto& p : default_locations()) {
    for (std::uint64_t s = 0; s < 10; ++s) grids.push_back(sample_grid(p, 500 + s));
  }
  const auto r = route_length_stats(grids);
  CHECK(r.avg > 13.0);
  CHECK(r.avg < 19.0);
}
