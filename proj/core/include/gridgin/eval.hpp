#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridgin/dataset.hpp"
#include "gridgin/gin.hpp"

namespace gridgin {

/// One raw input column of the model.
struct FeatureRef {
  enum class Kind { Node, Edge };
  Kind kind = Kind::Node;
  std::size_t column = 0;

  std::string name() const;  // "node.power_consumption", ...
  friend bool operator==(const FeatureRef&, const FeatureRef&) = default;
};

/// The four node and four edge feature columns.
std::vector<FeatureRef> all_features();

struct PfiEntry {
  FeatureRef feature;
  double importance = 0.0;  // baseline AUC minus mean permuted AUC
  double normalized = 0.0;  // min-max scaled over the report, in [0, 1]
};

struct PfiReport {
  double baseline_auc = 0.0;
  std::size_t repeats = 0;
  std::uint64_t seed = 0;
  std::vector<PfiEntry> entries;
};

/// AUC drop when `feature` is shuffled across every row of the pooled
/// evaluation set (all nodes or edges of all graphs), averaged over repeats.
double feature_importance(const GinModel& model, std::span<const LabeledSample> samples,
                          std::span<const std::size_t> idx, const FeatureRef& feature,
                          std::size_t repeats, std::uint64_t seed);

PfiReport permutation_feature_importance(const GinModel& model, std::span<const LabeledSample> samples,
                                         std::span<const std::size_t> idx,
                                         std::span<const FeatureRef> features,
                                         std::size_t repeats = 10, std::uint64_t seed = 1);

/// Sets normalized = (raw - min) / (max - min), or 0 for all when max == min.
void normalize(PfiReport& report);

std::string pfi_to_csv(const PfiReport& report);

enum class PlanKind { SingleLocation, AllLocations, LeaveOneOut };
const char* to_string(PlanKind k) noexcept;
PlanKind plan_kind_from_string(const std::string& s);

struct ExperimentPlan {
  PlanKind kind = PlanKind::AllLocations;
  /// Locations to evaluate (single-location and leave-one-out rounds); empty
  /// means every location of the dataset.
  std::vector<std::string> locations;
  std::vector<bool> augmentation{true};
  std::vector<int> layers{5, 10, 15, 20};
  std::vector<Pooling> pooling{Pooling::Sum};
  std::vector<std::uint64_t> seeds{1};
  /// lr, epochs and batch size for every cell; layers, pooling and seed are
  /// taken from the sweep.
  GinConfig training;
  bool pfi = false;
  std::size_t pfi_repeats = 10;
  unsigned threads = 1;

  std::vector<std::string> problems() const;
};

std::string plan_to_json(const ExperimentPlan& plan);
ExperimentPlan plan_from_json(const std::string& text);

/// Sample indices of one train/test round.
struct RoundSplit {
  std::string round;  // location name, or "all"
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Train/validation/test indices of every round of `plan`. Leave-one-out
/// rounds test on all generated samples of the held-out location and train on
/// the training splits of the others. Without augmentation, augmented
/// samples are dropped from training and validation. Test sets never hold
/// augmented samples.
std::vector<RoundSplit> plan_rounds(const ExperimentPlan& plan, const Dataset& dataset, bool augmentation);

struct CellResult {
  std::string round;
  int layers = 0;
  Pooling pooling = Pooling::Sum;
  bool augmentation = true;
  std::uint64_t seed = 0;
  std::size_t train_samples = 0;
  std::size_t validation_samples = 0;
  std::size_t test_samples = 0;
  int best_epoch = 0;
  double test_auc = 0.0;  // NaN when the test set holds one class
  double test_accuracy = 0.0;
  std::vector<EpochRecord> history;
  std::optional<PfiReport> pfi;
};

struct ExperimentReport {
  ExperimentPlan plan;
  std::vector<CellResult> cells;
};

using ExperimentProgress = std::function<void(const CellResult&)>;

/// Trains and evaluates every (round, augmentation, layers, pooling, seed)
/// cell. Cells are independent, so the report does not depend on `threads`.
ExperimentReport run_experiment(const ExperimentPlan& plan, const Dataset& dataset,
                                const ExperimentProgress& progress = {});

/// One row per cell.
std::string cells_to_csv(const ExperimentReport& report);
/// Rows (model, augmentation, pooling) by columns (rounds), each the mean of
/// `metric` ("auc" or "accuracy") over seeds.
std::string metric_table_csv(const ExperimentReport& report, const std::string& metric);
/// Per-epoch train and validation curves of every cell.
std::string curves_to_csv(const ExperimentReport& report);
/// Importance per feature averaged over the cells that ran PFI.
std::string pfi_summary_csv(const ExperimentReport& report);
std::string report_to_json(const ExperimentReport& report);

struct BaselineRow {
  std::string id;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  int label = 0;
  double gin_probability = 0.0;
  double oracle_seconds = 0.0;
  double gin_seconds = 0.0;  // feature computation plus forward pass
};

struct BaselineReport {
  std::vector<BaselineRow> rows;
  double oracle_accuracy = 1.0;
  double gin_accuracy = 0.0;
  double mean_oracle_seconds = 0.0;
  double mean_gin_seconds = 0.0;
  double speedup = 0.0;  // mean_oracle_seconds / mean_gin_seconds
};

struct CompareOptions {
  std::size_t min_nodes = 0;
  /// Each GIN prediction is timed as the mean of this many runs.
  std::size_t gin_repeats = 3;
};

/// Wall-clock comparison of label_n1 and the model on `idx`, restricted to
/// grids with at least `min_nodes` stations. Both run single-threaded.
BaselineReport compare_baseline(const GinModel& model, const Dataset& dataset,
                                std::span<const std::size_t> idx, const CompareOptions& options = {});
std::string baseline_to_csv(const BaselineReport& report);

}  // namespace gridgin
