#include <cmath>
#include <vector>

#include "doctest.h"
#include "gridgin/metrics.hpp"
#include "gridgin/rng.hpp"

using namespace gridgin;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

double counted_accuracy(const std::vector<double>& s, const std::vector<int>& y) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < s.size(); ++i) hit += ((s[i] >= 0.5 ? 1 : 0) == y[i]) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(s.size());
}

}  // namespace

TEST_CASE("metric examples") {
  const std::vector<double> perfect{0.1, 0.4, 0.6, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(auc(perfect, y) == 1.0);
  CHECK(accuracy(perfect, y) == 1.0);
  const std::vector<double> reversed{0.9, 0.6, 0.4, 0.1};
  CHECK(auc(reversed, y) == 0.0);
  CHECK(accuracy(reversed, y) == 0.0);
  const std::vector<double> flat(4, 0.5);
  CHECK(auc(flat, y) == 0.5);
  const std::vector<double> hard{1.0, 0.0, 1.0, 1.0};
  CHECK(accuracy(hard, y) == 0.75);
}

TEST_CASE("metric errors") {
  const std::vector<double> s{0.2, 0.8};
  const std::vector<int> one_class{1, 1};
  CHECK_THROWS_AS(auc(s, one_class), MetricError);
  CHECK(!has_both_classes(one_class));
  CHECK(accuracy(s, one_class) == 0.5);
  const std::vector<int> short_labels{1};
  CHECK_THROWS_AS(accuracy(s, short_labels), MetricError);
  CHECK_THROWS_AS(auc(s, short_labels), MetricError);
  const std::vector<double> none;
  const std::vector<int> no_labels;
  CHECK_THROWS_AS(accuracy(none, no_labels), MetricError);
  const std::vector<int> bad{0, 2};
  CHECK_THROWS_AS(accuracy(s, bad), MetricError);
}

TEST_CASE("metrics agree with brute force on random inputs") {
  Rng rng(2024);
  int checked = 0;
  while (checked < 1000) {
    const int n = uniform_int(rng, 1, 200);
    // Coarse scores produce many ties.
    const int levels = uniform_int(rng, 2, 50);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(uniform_int(rng, 0, levels)) / levels;
      y[i] = uniform_int(rng, 0, 1);
    }
    CHECK(accuracy(s, y) == counted_accuracy(s, y));
    if (!has_both_classes(y)) continue;
    CHECK(auc(s, y) == pairwise_auc(s, y));
    ++checked;
  }
}
