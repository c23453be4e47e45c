#include <algorithm>

#include "doctest.h"
#include "gridgin/dataset.hpp"
#include "gridgin/errors.hpp"
#include "gridgin/grid_io.hpp"
#include "temp_dir.hpp"

using namespace gridgin;
using namespace testing;

namespace {

GeneratorConfig small_config(std::size_t n, std::uint64_t seed) {
  GeneratorConfig c;
  c.n_samples = n;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("build_dataset writes one augmented child per base sample") {
  TempDir dir("ds");
  const auto m = build_dataset(small_config(20, 3), dir.path());
  REQUIRE(m.samples.size() == 40);
  std::size_t augmented = 0;
  std::size_t ones = 0;
  for (const auto& s : m.samples) {
    if (s.provenance == Provenance::Augmented) {
      ++augmented;
      CHECK(!s.source.empty());
      REQUIRE(s.action.has_value());
      CHECK((*s.action == AugmentAction::AddNodes) == (s.label == 1));
      CHECK(m.find(s.source).label == s.label);
    } else {
      ones += static_cast<std::size_t>(s.label);
    }
    if (s.split == Split::Test) CHECK(s.provenance == Provenance::Generated);
    CHECK(std::filesystem::exists(dir / ("grids/" + s.id + ".json")));
    CHECK(std::filesystem::exists(dir / ("features/" + s.id + ".json")));
  }
  CHECK(augmented == 20);
  CHECK(ones == 10);
  CHECK(std::filesystem::exists(dir / "labels.csv"));

  const Dataset d = load_dataset(dir.path());
  CHECK(d.manifest.samples == m.samples);
  CHECK(d.samples.size() == 40);
  CHECK(!d.indices(Split::Test).empty());
  const auto rows = summarize(d);
  CHECK(rows.back().location == "all");
  CHECK(rows.back().samples == 40);
  CHECK(rows.back().n1_fraction == doctest::Approx(0.5));
}

TEST_CASE("build_dataset output depends only on the config") {
  TempDir a("ds-a");
  TempDir b("ds-b");
  auto c = small_config(10, 9);
  build_dataset(c, a.path());
  c.threads = 3;
  build_dataset(c, b.path());
  CHECK(snapshot(a.path()) == snapshot(b.path()));
}

TEST_CASE("generator config JSON") {
  GeneratorConfig c = small_config(33, 4);
  c.balance = 0.4;
  const auto back = generator_config_from_json(generator_config_to_json(c));
  CHECK(back.n_samples == 33);
  CHECK(back.seed == 4);
  CHECK(back.balance == 0.4);
  CHECK(back.locations == c.locations);
  CHECK(generator_config_from_json("{\"n_samples\": 5}").n_samples == 5);
  CHECK_THROWS_AS(generator_config_from_json("{\"samples\": 5}"), ParseError);
  CHECK_THROWS_AS(generator_config_from_json("{\"n_samples\": "), ParseError);
}

TEST_CASE("load_dataset rejects inconsistent features") {
  TempDir dir("ds-bad");
  const auto m = build_dataset(small_config(4, 2), dir.path());
  const auto path = dir / ("features/" + m.samples.front().id + ".json");
  FeatureSet fs = read_features(path);
  fs.node_features(0, kNodeDegree) += 1.0;
  write_features(path, fs);
  CHECK_THROWS(load_dataset(dir.path()));
}
