#include <algorithm>
#include <string>

#include "doctest.h"
#include "gridgin/errors.hpp"
#include "gridgin/flow.hpp"
#include "gridgin/grid.hpp"
#include "gridgin/grid_io.hpp"
#include "support.hpp"

using namespace gridgin;
using namespace testing;

namespace {

bool mentions(const ValidationReport& r, const std::string& what) {
  return std::any_of(r.issues.begin(), r.issues.end(),
                     [&](const std::string& s) { return s.find(what) != std::string::npos; });
}

}  // namespace

TEST_CASE("validate_grid reports missing substation") {
  const Grid g({station(0, 10), station(1, 10), station(2, 10)}, {cable(0, 0, 1), cable(1, 1, 2)}, {});
  CHECK(mentions(validate_grid(g), "no primary substation"));
}

TEST_CASE("validate_grid accepts a triangle with one open cable") {
  CHECK(validate_grid(triangle()).ok());
}

TEST_CASE("validate_grid reports duplicate edges") {
  const Grid g({source(0), station(1, 10)}, {cable(0, 0, 1), cable(1, 1, 0)}, {1});
  CHECK(mentions(validate_grid(g), "duplicate edge"));
}

TEST_CASE("validate_grid reports structural violations") {
  SUBCASE("self loop") {
    const Grid g({source(0), station(1, 10)}, {cable(0, 0, 1), cable(1, 1, 1)}, {});
    CHECK(mentions(validate_grid(g), "self-loop"));
  }
  SUBCASE("disconnected closed graph") {
    const Grid g({source(0), station(1, 10), source(2)}, {cable(0, 0, 1)}, {});
    CHECK(mentions(validate_grid(g), "not connected"));
  }
  SUBCASE("radial state with a cycle") {
    Grid g = triangle();
    g = Grid(g.nodes(), g.edges(), {});
    CHECK(mentions(validate_grid(g), "radial state"));
  }
  SUBCASE("bad electrical values") {
    const Grid g({source(0), station(1, -5)}, {cable(0, 0, 1, 0.0, -1.0)}, {});
    const auto r = validate_grid(g);
    CHECK(mentions(r, "negative"));
    CHECK(mentions(r, "impedance"));
    CHECK(mentions(r, "nominal current"));
  }
}

TEST_CASE("neighbors") {
  const Grid t({source(0), station(1, 1), station(2, 1)}, {cable(0, 0, 1), cable(1, 1, 2), cable(2, 0, 2)}, {2});
  CHECK(neighbors(t, 1) == std::vector<NodeId>{0, 2});
  CHECK(neighbors(path(2), 0) == std::vector<NodeId>{1});
  CHECK(neighbors(star(4), 0) == std::vector<NodeId>{1, 2, 3, 4});
  CHECK_THROWS_AS(neighbors(t, 7), GridError);
}

TEST_CASE("neighbors is symmetric and matches the degree column") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const Grid g = random_small_grid(s);
    if (!validate_grid(g).ok()) continue;
    const FeatureSet fs = compute_features(g);
    for (NodeId v = 0; v < static_cast<NodeId>(g.node_count()); ++v) {
      const auto nv = neighbors(g, v);
      CHECK(fs.node_features(static_cast<std::size_t>(v), kNodeDegree) == static_cast<double>(nv.size()));
      for (NodeId u : nv) {
        const auto nu = neighbors(g, u);
        CHECK(std::find(nu.begin(), nu.end(), v) != nu.end());
      }
    }
  }
}

TEST_CASE("k_hop_neighborhood") {
  CHECK(k_hop_neighborhood(path(3), 0, 2).nodes == std::vector<NodeId>{0, 1, 2});
  const auto tri = k_hop_neighborhood(triangle(), 0, 1);
  CHECK(tri.nodes == std::vector<NodeId>{0, 1, 2});
  CHECK(tri.edges == std::vector<EdgeId>{0, 1, 2});
  const Grid p = path(6);
  CHECK(k_hop_neighborhood(p, 3, 6).nodes.size() == p.node_count());
  CHECK_THROWS(k_hop_neighborhood(p, 0, 0));
  CHECK_THROWS_AS(k_hop_neighborhood(p, 42, 1), GridError);
}

TEST_CASE("k_hop_neighborhood grows monotonically with k") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Grid g = random_small_grid(s);
    for (NodeId v = 0; v < static_cast<NodeId>(g.node_count()); ++v) {
      std::size_t prev = 0;
      for (int k = 1; k <= static_cast<int>(g.node_count()); ++k) {
        const auto nb = k_hop_neighborhood(g, v, k);
        CHECK(nb.nodes.size() >= prev);
        prev = nb.nodes.size();
      }
      CHECK(prev == g.node_count());
    }
  }
}

TEST_CASE("route_length_stats") {
  SUBCASE("single feeder of three stations") {
    const auto r = route_length_stats(path(3));
    CHECK(r.min == 3);
    CHECK(r.avg == doctest::Approx(3.0));
    CHECK(r.max == 3);
    CHECK(r.suggested_depth() == 3);
  }
  SUBCASE("feeders of length 2 and 4") {
    const Grid g({source(0), station(1, 1), station(2, 1), station(3, 1), station(4, 1), station(5, 1),
                  station(6, 1)},
                 {cable(0, 0, 1), cable(1, 1, 2), cable(2, 0, 3), cable(3, 3, 4), cable(4, 4, 5),
                  cable(5, 5, 6), cable(6, 2, 6)},
                 {6});
    const auto r = route_length_stats(g);
    CHECK(r.min == 2);
    CHECK(r.avg == doctest::Approx(3.0));
    CHECK(r.max == 4);
  }
  SUBCASE("grid without leaf stations") {
    const Grid g({source(0), source(1)}, {cable(0, 0, 1)}, {0});
    CHECK_THROWS(route_length_stats(g));
  }
}

TEST_CASE("is_radial") {
  const Grid t = triangle();
  CHECK(is_radial(t, std::vector<EdgeId>{2}));
  CHECK_FALSE(is_radial(t, std::vector<EdgeId>{}));
  CHECK_FALSE(is_radial(path(3), std::vector<EdgeId>{1}));
}

TEST_CASE("every generated-style grid is radial in its normal state") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Grid g = random_small_grid(s);
    if (validate_grid(g).ok()) CHECK(is_radial(g, g.normally_open()));
  }
}

TEST_CASE("grid JSON round trip and strict parsing") {
  const Grid g = two_feeders_tight();
  CHECK(grid_from_json(grid_to_json(g)) == g);
  CHECK_THROWS_AS(grid_from_json("{\"nodes\": ["), ParseError);
  try {
    grid_from_json("{\n \"nodes\": [],\n \"edges\": [],\n \"normally_open\": [],\n \"extra\": 1\n}");
    FAIL("unknown field accepted");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("extra") != std::string::npos);
  }
  try {
    grid_from_json("{\n \"nodes\": [\n  {\"id\": 0,,}\n ]}");
    FAIL("malformed JSON accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("feature JSON round trip") {
  const FeatureSet fs = compute_features(two_feeders_ample());
  CHECK(features_from_json(features_to_json(fs)) == fs);
}
