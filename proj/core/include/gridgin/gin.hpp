#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridgin/grid.hpp"
#include "gridgin/nn.hpp"

namespace gridgin {

using nn::Pooling;

struct GinConfig {
  int layers = 15;  // K, message-passing layers after the input embedding
  std::size_t dim = 16;
  Pooling pooling = Pooling::Sum;
  double lr = 1e-4;
  int epochs = 60;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;

  std::vector<std::string> problems() const;
  friend bool operator==(const GinConfig&, const GinConfig&) = default;
};

/// JSON object with the GinConfig fields. Missing keys keep defaults; unknown
/// keys raise ParseError.
std::string gin_config_to_json(const GinConfig& config);
GinConfig gin_config_from_json(const std::string& text);

/// Per-column standardisation of raw features, fitted on training data.
struct FeatureScaler {
  std::array<double, kNodeFeatureCount> node_mean{};
  std::array<double, kNodeFeatureCount> node_scale{1.0, 1.0, 1.0, 1.0};
  std::array<double, kEdgeFeatureCount> edge_mean{};
  std::array<double, kEdgeFeatureCount> edge_scale{1.0, 1.0, 1.0, 1.0};

  /// Mean and population standard deviation over all rows; constant columns
  /// get scale 1.
  static FeatureScaler fit(std::span<const FeatureSet* const> features);
  FeatureSet apply(const FeatureSet& fs) const;

  friend bool operator==(const FeatureScaler&, const FeatureScaler&) = default;
};

/// Model input for one graph or a disjoint union of graphs.
struct GraphBatch {
  Matrix node_x;  // scaled node features
  Matrix edge_x;  // scaled edge features
  nn::Adjacency adj;
  std::vector<std::size_t> node_offset{0};  // graph i owns nodes [node_offset[i], node_offset[i+1])
  std::vector<std::size_t> edge_offset{0};

  std::size_t graphs() const noexcept { return node_offset.size() - 1; }
};

/// Single-graph batch; features must already be scaled.
GraphBatch make_graph(const Grid& grid, const FeatureSet& scaled);
GraphBatch concat(std::span<const GraphBatch* const> parts);

/// Node and edge embeddings after the input layer (index 0) and each of the
/// K layers.
struct EmbeddingState {
  std::vector<Matrix> h;  // K+1 entries of |V| x dim
  std::vector<Matrix> g;  // K+1 entries of |E| x dim
};

struct GinLayer {
  nn::Mlp edge_mlp;  // MLP_3
  nn::Mlp node_mlp;  // MLP_4
  nn::Param eps_edge;
  nn::Param eps_node;
};

class GinModel {
 public:
  /// Builds the architecture and initialises weights from config.seed.
  explicit GinModel(const GinConfig& config);

  const GinConfig& config() const noexcept { return config_; }
  std::size_t readout_dim() const noexcept;

  FeatureScaler scaler;
  nn::Mlp node_embed;  // MLP_1
  nn::Mlp edge_embed;  // MLP_2
  std::vector<GinLayer> layers;
  nn::Mlp head;

  std::vector<nn::Param*> parameters();
  std::vector<nn::BatchNorm1d*> batch_norms();

  /// Differentiable forward pass; returns a graphs x 1 node of probabilities.
  /// In Train mode batch norm uses minibatch statistics over all node (edge,
  /// graph) rows of the batch and updates running statistics.
  nn::Var forward(nn::Tape& tape, const GraphBatch& batch, nn::Mode mode,
                  EmbeddingState* state = nullptr);

  /// Eval-mode inference without a tape.
  std::vector<double> predict(const GraphBatch& batch) const;
  /// Scales the raw features with `scaler` and predicts one graph.
  double predict(const Grid& grid, const FeatureSet& raw) const;

 private:
  GinConfig config_;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  std::string split;  // "train" or "validation"
  double loss = 0.0;
  double accuracy = 0.0;
  double auc = 0.0;  // NaN when the split holds a single class

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainOptions {
  /// Refit model.scaler on the training samples before training.
  bool fit_scaler = true;
  /// Restore the parameters of the epoch with the best validation AUC.
  bool keep_best = true;
  /// Called with sample indices of every minibatch, in training order.
  std::function<void(int epoch, std::span<const std::size_t> batch)> on_batch;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  nn::AdamState adam;
};

/// Mini-batch Adam on the BCE loss. `train_idx` and `val_idx` index into
/// `samples` and must be disjoint. Metrics for the training split are those
/// of the training-mode predictions made during the epoch.
TrainResult train(GinModel& model, std::span<const LabeledSample> samples,
                  std::span<const std::size_t> train_idx, std::span<const std::size_t> val_idx,
                  const TrainOptions& options = {});

std::string history_to_csv(std::span<const EpochRecord> history);

/// Predictions for `idx` in order, batched by config().batch_size.
std::vector<double> predict_samples(const GinModel& model, std::span<const LabeledSample> samples,
                                    std::span<const std::size_t> idx);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  GinModel model;
  std::optional<nn::AdamState> adam;
};

std::string checkpoint_to_json(const GinModel& model, const nn::AdamState* adam = nullptr);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const GinModel& model, const std::filesystem::path& path,
                     const nn::AdamState* adam = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Loads parameters into an existing model; the stored architecture must
/// match the model's.
void load_checkpoint_into(GinModel& model, const std::filesystem::path& path);

}  // namespace gridgin
