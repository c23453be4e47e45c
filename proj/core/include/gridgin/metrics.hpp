#pragma once

#include <span>
#include <stdexcept>

namespace gridgin {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fraction of predictions that match the labels. Scores are thresholded at
/// 0.5 (score >= 0.5 is class 1), so binary predictions pass through as is.
double accuracy(std::span<const double> scores, std::span<const int> labels);

/// Area under the ROC curve as the Mann-Whitney statistic; tied scores count
/// one half. Both classes must be present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// True when both classes occur, i.e. auc() is defined.
bool has_both_classes(std::span<const int> labels) noexcept;

}  // namespace gridgin
