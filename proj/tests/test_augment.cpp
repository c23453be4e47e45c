#include <algorithm>
#include <set>

#include "doctest.h"
#include "gridgin/augment.hpp"
#include "gridgin/contingency.hpp"
#include "gridgin/flow.hpp"
#include "gridgin/synth.hpp"
#include "support.hpp"

using namespace gridgin;
using namespace testing;

namespace {

LabeledSample labeled(const Grid& g) {
  return {g, compute_features(g), label_n1(g).label, Provenance::Generated};
}

double total_load(const Grid& g) {
  double s = 0.0;
  for (const auto& n : g.nodes()) s += n.load_kw;
  return s;
}

}  // namespace

TEST_CASE("removal candidates of a short feeder") {
  const auto s = labeled(path(2));
  REQUIRE(s.label == 0);
  const auto c = select_candidates(s);
  CHECK(c.action == AugmentAction::RemoveNodes);
  CHECK(c.nodes() == std::vector<NodeId>{2});
}

TEST_CASE("every cable of a substation triangle can be split") {
  const Grid g({source(0), source(1), source(2)}, {cable(0, 0, 1), cable(1, 1, 2), cable(2, 0, 2)}, {0, 1, 2});
  REQUIRE(validate_grid(g).ok());
  const LabeledSample s{g, compute_features(g), 1, Provenance::Generated};
  const auto c = select_candidates(s);
  CHECK(c.action == AugmentAction::AddNodes);
  CHECK(c.edges() == std::vector<EdgeId>{0, 1, 2});
}

TEST_CASE("feeders of a single station offer no removal candidate") {
  const auto s = labeled(star(4));
  REQUIRE(s.label == 0);
  CHECK_THROWS_AS(select_candidates(s), AugmentError);
}

TEST_CASE("removal keeps surviving rows except degree") {
  const auto s = generate_grid(default_locations()[0], 21, 0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [out, rec] = augment(s, seed, "src");
    CHECK(rec.action == AugmentAction::RemoveNodes);
    CHECK(rec.source_id == "src");
    REQUIRE(!rec.affected.empty());
    CHECK(out.provenance == Provenance::Augmented);
    CHECK(out.grid.node_count() == s.grid.node_count() - rec.affected.size());
    CHECK(validate_grid(out.grid).ok());
    CHECK(validate_features(out.grid, out.features).ok());
    // Surviving stations keep their order.
    std::vector<std::size_t> kept;
    for (std::size_t v = 0; v < s.grid.node_count(); ++v) {
      if (!std::binary_search(rec.affected.begin(), rec.affected.end(), static_cast<NodeId>(v))) kept.push_back(v);
    }
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t c = 0; c < kNodeFeatureCount; ++c) {
        if (c == kNodeDegree) continue;
        CHECK(out.features.node_features(i, c) == s.features.node_features(kept[i], c));
      }
    }
    for (std::size_t e = 0, i = 0; e < s.grid.edge_count(); ++e) {
      const auto& c = s.grid.edge(static_cast<EdgeId>(e));
      if (std::binary_search(rec.affected.begin(), rec.affected.end(), c.u) ||
          std::binary_search(rec.affected.begin(), rec.affected.end(), c.v)) {
        continue;
      }
      for (std::size_t col = 0; col < kEdgeFeatureCount; ++col) {
        CHECK(out.features.edge_features(i, col) == s.features.edge_features(e, col));
      }
      ++i;
    }
  }
}

TEST_CASE("adding stations conserves load and recomputes degree") {
  const auto s = generate_grid(default_locations()[2], 33, 1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto [out, rec] = augment(s, seed);
    CHECK(rec.action == AugmentAction::AddNodes);
    CHECK(out.grid.node_count() == s.grid.node_count() + rec.affected.size());
    CHECK(total_load(out.grid) == doctest::Approx(total_load(s.grid)).epsilon(1e-12));
    CHECK(validate_grid(out.grid).ok());
    CHECK(validate_features(out.grid, out.features).ok());
    CHECK(out.label == 1);
  }
}

TEST_CASE("averaged features stay within the two-hop range") {
  const auto s = generate_grid(default_locations()[1], 8, 1);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto [out, rec] = augment(s, seed);
    const std::set<NodeId> added(rec.affected.begin(), rec.affected.end());
    // Single additions only: later additions may average over earlier ones.
    if (rec.affected.size() != 1) continue;
    const NodeId x = rec.affected.front();
    const auto ball = k_hop_neighborhood(out.grid, x, 2);
    for (std::size_t c : {kVoltageRadial, kVoltageClosed}) {
      double lo = 1e300;
      double hi = -1e300;
      for (NodeId v : ball.nodes) {
        if (v == x) continue;
        lo = std::min(lo, out.features.node_features(static_cast<std::size_t>(v), c));
        hi = std::max(hi, out.features.node_features(static_cast<std::size_t>(v), c));
      }
      const double got = out.features.node_features(static_cast<std::size_t>(x), c);
      CHECK(got >= lo - 1e-9);
      CHECK(got <= hi + 1e-9);
    }
  }
}

TEST_CASE("split cables inherit a uniform neighbourhood impedance") {
  std::vector<Cable> edges = two_feeders_ample().edges();
  for (auto& c : edges) c.impedance_ohm = 0.5;
  const Grid g(two_feeders_ample().nodes(), edges, {4});
  const auto s = labeled(g);
  REQUIRE(s.label == 1);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto [out, rec] = augment(s, seed);
    for (const auto& c : out.grid.edges()) {
      CHECK(c.impedance_ohm == doctest::Approx(0.5));
      CHECK(out.features.edge_features(static_cast<std::size_t>(c.id), kImpedance) == doctest::Approx(0.5));
    }
  }
}

TEST_CASE("augmenting a well-rated triangle keeps the n-1 label") {
  const auto s = labeled(triangle());
  REQUIRE(s.label == 1);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto [out, rec] = augment(s, seed);
    CHECK(rec.label_verified);
    CHECK(label_n1(out.grid).label == 1);
  }
}

TEST_CASE("augment is determined by its seed") {
  const auto s = generate_grid(default_locations()[0], 4, 1);
  const auto a = augment(s, 99);
  const auto b = augment(s, 99);
  CHECK(a.first.grid == b.first.grid);
  CHECK(a.first.features == b.first.features);
  CHECK(a.second.affected == b.second.affected);
}
