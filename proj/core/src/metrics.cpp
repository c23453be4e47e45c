#include "gridgin/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace gridgin {

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw MetricError("metric on empty input");
  if (scores.size() != labels.size()) throw MetricError("scores and labels differ in length");
  for (int y : labels) {
    if (y != 0 && y != 1) throw MetricError("labels must be 0 or 1");
  }
}

}  // namespace

double accuracy(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if ((scores[i] >= 0.5 ? 1 : 0) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

bool has_both_classes(std::span<const int> labels) noexcept {
  bool zero = false;
  bool one = false;
  for (int y : labels) {
    zero |= y == 0;
    one |= y == 1;
  }
  return zero && one;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  if (!has_both_classes(labels)) throw MetricError("AUC needs both classes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Average ranks (1-based) over tie groups, then the rank-sum formula.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(scores.size() - positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

}  // namespace gridgin
