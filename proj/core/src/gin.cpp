#include "gridgin/gin.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "detail/json_util.hpp"
#include "gridgin/metrics.hpp"
#include "gridgin/rng.hpp"

namespace gridgin {

using detail::json;
using nn::Mode;
using nn::Tape;
using nn::Var;

std::vector<std::string> GinConfig::problems() const {
  std::vector<std::string> out;
  if (layers < 1) out.push_back("layers must be >= 1");
  if (dim < 1) out.push_back("dim must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) out.push_back("lr must be positive");
  if (epochs < 0) out.push_back("epochs must be >= 0");
  if (batch_size < 1) out.push_back("batch_size must be >= 1");
  return out;
}

namespace {

json config_json(const GinConfig& c) {
  return {{"layers", c.layers}, {"dim", c.dim},     {"pooling", nn::to_string(c.pooling)},
          {"lr", c.lr},         {"epochs", c.epochs}, {"batch_size", c.batch_size},
          {"seed", c.seed}};
}

GinConfig config_from(const json& j) {
  const std::string where = "gin config";
  detail::check_keys(j, where, {"layers", "dim", "pooling", "lr", "epochs", "batch_size", "seed"},
                     false);
  GinConfig c;
  detail::get_optional(j, "layers", where, c.layers);
  detail::get_optional(j, "dim", where, c.dim);
  if (j.contains("pooling")) {
    try {
      c.pooling = nn::pooling_from_string(detail::get_field<std::string>(j, "pooling", where));
    } catch (const std::invalid_argument& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  detail::get_optional(j, "lr", where, c.lr);
  detail::get_optional(j, "epochs", where, c.epochs);
  detail::get_optional(j, "batch_size", where, c.batch_size);
  detail::get_optional(j, "seed", where, c.seed);
  return c;
}

}  // namespace

std::string gin_config_to_json(const GinConfig& config) { return config_json(config).dump(2); }

GinConfig gin_config_from_json(const std::string& text) {
  return config_from(detail::parse_json(text));
}

FeatureScaler FeatureScaler::fit(std::span<const FeatureSet* const> features) {
  FeatureScaler s;
  auto fit_table = [&](auto pick, auto& mean, auto& scale) {
    const std::size_t cols = mean.size();
    std::vector<double> sum(cols, 0.0);
    std::size_t rows = 0;
    for (const FeatureSet* fs : features) {
      const Matrix& m = pick(*fs);
      for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) sum[c] += m(r, c);
      }
      rows += m.rows();
    }
    if (rows == 0) return;
    for (std::size_t c = 0; c < cols; ++c) mean[c] = sum[c] / static_cast<double>(rows);
    std::vector<double> sq(cols, 0.0);
    for (const FeatureSet* fs : features) {
      const Matrix& m = pick(*fs);
      for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double z = m(r, c) - mean[c];
          sq[c] += z * z;
        }
      }
    }
    for (std::size_t c = 0; c < cols; ++c) {
      const double sd = std::sqrt(sq[c] / static_cast<double>(rows));
      scale[c] = sd > 1e-12 * std::max(1.0, std::abs(mean[c])) ? sd : 1.0;
    }
  };
  fit_table([](const FeatureSet& f) -> const Matrix& { return f.node_features; }, s.node_mean,
            s.node_scale);
  fit_table([](const FeatureSet& f) -> const Matrix& { return f.edge_features; }, s.edge_mean,
            s.edge_scale);
  return s;
}

FeatureSet FeatureScaler::apply(const FeatureSet& fs) const {
  FeatureSet out = fs;
  auto scale_table = [](Matrix& m, const auto& mean, const auto& scale) {
    if (m.cols() != mean.size()) throw nn::ShapeError("feature table has wrong column count");
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = (m(r, c) - mean[c]) / scale[c];
    }
  };
  scale_table(out.node_features, node_mean, node_scale);
  scale_table(out.edge_features, edge_mean, edge_scale);
  return out;
}

GraphBatch make_graph(const Grid& grid, const FeatureSet& scaled) {
  if (scaled.node_features.rows() != grid.node_count() ||
      scaled.edge_features.rows() != grid.edge_count()) {
    throw nn::ShapeError("feature rows do not match the grid");
  }
  GraphBatch b;
  b.node_x = scaled.node_features;
  b.edge_x = scaled.edge_features;
  b.adj.offset.assign(1, 0);
  for (std::size_t v = 0; v < grid.node_count(); ++v) {
    for (const Incidence& inc : grid.incident(static_cast<NodeId>(v))) {
      b.adj.neighbor.push_back(inc.neighbor);
      b.adj.edge.push_back(inc.edge);
    }
    b.adj.offset.push_back(static_cast<std::int32_t>(b.adj.neighbor.size()));
  }
  b.node_offset = {0, grid.node_count()};
  b.edge_offset = {0, grid.edge_count()};
  return b;
}

GraphBatch concat(std::span<const GraphBatch* const> parts) {
  GraphBatch b;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  for (const GraphBatch* p : parts) {
    nodes += p->node_x.rows();
    edges += p->edge_x.rows();
  }
  b.node_x = Matrix(nodes, kNodeFeatureCount);
  b.edge_x = Matrix(edges, kEdgeFeatureCount);
  std::size_t node_at = 0;
  std::size_t edge_at = 0;
  for (const GraphBatch* p : parts) {
    if (p->node_x.cols() != kNodeFeatureCount || p->edge_x.cols() != kEdgeFeatureCount) {
      throw nn::ShapeError("concat: wrong feature width");
    }
    std::copy(p->node_x.values().begin(), p->node_x.values().end(),
              b.node_x.values().begin() + static_cast<std::ptrdiff_t>(node_at * kNodeFeatureCount));
    std::copy(p->edge_x.values().begin(), p->edge_x.values().end(),
              b.edge_x.values().begin() + static_cast<std::ptrdiff_t>(edge_at * kEdgeFeatureCount));
    const auto base = static_cast<std::int32_t>(b.adj.neighbor.size());
    for (std::size_t v = 0; v < p->adj.nodes(); ++v) {
      b.adj.offset.push_back(base + p->adj.offset[v + 1]);
    }
    for (std::size_t k = 0; k < p->adj.neighbor.size(); ++k) {
      b.adj.neighbor.push_back(p->adj.neighbor[k] + static_cast<std::int32_t>(node_at));
      b.adj.edge.push_back(p->adj.edge[k] + static_cast<std::int32_t>(edge_at));
    }
    for (std::size_t i = 1; i < p->node_offset.size(); ++i) {
      b.node_offset.push_back(node_at + p->node_offset[i]);
      b.edge_offset.push_back(edge_at + p->edge_offset[i]);
    }
    node_at += p->node_x.rows();
    edge_at += p->edge_x.rows();
  }
  return b;
}

GinModel::GinModel(const GinConfig& config) : config_(config) {
  if (auto p = config.problems(); !p.empty()) throw ValidationError(p);
  const std::size_t d = config.dim;
  node_embed = nn::Mlp("node_embed", {kNodeFeatureCount, d, d});
  edge_embed = nn::Mlp("edge_embed", {kEdgeFeatureCount, d, d});
  for (int k = 1; k <= config.layers; ++k) {
    const std::string name = "layer" + std::to_string(k);
    GinLayer l;
    l.edge_mlp = nn::Mlp(name + ".edge", {d, d, d});
    l.node_mlp = nn::Mlp(name + ".node", {d, d, d});
    l.eps_edge = nn::Param(name + ".eps_edge", 1, 1);
    l.eps_node = nn::Param(name + ".eps_node", 1, 1);
    layers.push_back(std::move(l));
  }
  head = nn::Mlp("head", {readout_dim(), d, 1}, true);

  Rng rng(derive_seed(config.seed, SeedStream::ModelInit));
  node_embed.init(rng);
  edge_embed.init(rng);
  for (auto& l : layers) {
    l.edge_mlp.init(rng);
    l.node_mlp.init(rng);
  }
  head.init(rng);
}

std::size_t GinModel::readout_dim() const noexcept {
  return static_cast<std::size_t>(config_.layers + 1) * config_.dim;
}

std::vector<nn::Param*> GinModel::parameters() {
  std::vector<nn::Param*> out = node_embed.parameters();
  auto append = [&](std::vector<nn::Param*> more) { out.insert(out.end(), more.begin(), more.end()); };
  append(edge_embed.parameters());
  for (auto& l : layers) {
    append(l.edge_mlp.parameters());
    append(l.node_mlp.parameters());
    out.push_back(&l.eps_edge);
    out.push_back(&l.eps_node);
  }
  append(head.parameters());
  return out;
}

std::vector<nn::BatchNorm1d*> GinModel::batch_norms() {
  std::vector<nn::BatchNorm1d*> out = node_embed.batch_norms();
  auto append = [&](std::vector<nn::BatchNorm1d*> more) {
    out.insert(out.end(), more.begin(), more.end());
  };
  append(edge_embed.batch_norms());
  for (auto& l : layers) {
    append(l.edge_mlp.batch_norms());
    append(l.node_mlp.batch_norms());
  }
  append(head.batch_norms());
  return out;
}

Var GinModel::forward(Tape& t, const GraphBatch& b, Mode mode, EmbeddingState* state) {
  if (b.node_x.rows() != b.adj.nodes()) throw nn::ShapeError("batch: node rows and adjacency differ");
  Var h = nn::neighbor_sum(t, node_embed.forward(t, t.constant(b.node_x), mode), b.adj);
  Var g = edge_embed.forward(t, t.constant(b.edge_x), mode);
  std::vector<Var> hs{h};
  std::vector<Var> gs{g};
  for (auto& l : layers) {
    const Var g_next = l.edge_mlp.forward(t, nn::scale_one_plus(t, g, l.eps_edge), mode);
    const Var a = nn::relu_message_sum(t, h, g, b.adj);
    h = l.node_mlp.forward(t, nn::add(t, nn::scale_one_plus(t, h, l.eps_node), a), mode);
    g = g_next;
    hs.push_back(h);
    gs.push_back(g);
  }
  if (state) {
    state->h.clear();
    state->g.clear();
    for (Var v : hs) state->h.push_back(t.value(v));
    for (Var v : gs) state->g.push_back(t.value(v));
  }
  std::vector<Var> pooled;
  for (Var v : hs) pooled.push_back(nn::pool_rows(t, v, b.node_offset, config_.pooling));
  return nn::sigmoid(t, head.forward(t, nn::concat_cols(t, pooled), mode));
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;

MapC view(const Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

// Mlp::forward in Eval mode, with each batch norm applied as one affine map.
RowMat eval_mlp(const nn::Mlp& mlp, const RowMat& input) {
  RowMat x = input;
  RowMat y;
  for (const auto& l : mlp.layers) {
    y.noalias() = x * view(l.dense.weight.value).transpose();
    y.rowwise() += view(l.dense.bias.value).row(0);
    if (l.batch_norm) {
      const auto& bn = l.bn;
      const Eigen::Index cols = y.cols();
      Eigen::RowVectorXd scale(cols);
      Eigen::RowVectorXd shift(cols);
      for (Eigen::Index c = 0; c < cols; ++c) {
        const auto cc = static_cast<std::size_t>(c);
        scale(c) = bn.gamma.value(0, cc) / std::sqrt(bn.running_var(0, cc) + bn.epsilon);
        shift(c) = bn.beta.value(0, cc) - bn.running_mean(0, cc) * scale(c);
      }
      y.array().rowwise() *= scale.array();
      y.rowwise() += shift;
    }
    if (l.activation == nn::Activation::ReLU) y = y.cwiseMax(0.0);
    x.swap(y);
  }
  return x;
}

}  // namespace

std::vector<double> GinModel::predict(const GraphBatch& b) const {
  if (b.node_x.rows() != b.adj.nodes()) throw nn::ShapeError("batch: node rows and adjacency differ");
  const auto& adj = b.adj;
  const std::size_t n = adj.nodes();
  const auto d = static_cast<Eigen::Index>(config_.dim);
  const RowMat m1 = eval_mlp(node_embed, view(b.node_x));
  RowMat h = RowMat::Zero(static_cast<Eigen::Index>(n), d);
  for (std::size_t v = 0; v < n; ++v) {
    for (auto k = adj.offset[v]; k < adj.offset[v + 1]; ++k) {
      h.row(static_cast<Eigen::Index>(v)) += m1.row(adj.neighbor[static_cast<std::size_t>(k)]);
    }
  }
  RowMat g = eval_mlp(edge_embed, view(b.edge_x));

  const std::size_t graphs = b.graphs();
  RowMat readout(static_cast<Eigen::Index>(graphs), static_cast<Eigen::Index>(readout_dim()));
  auto pool_into = [&](const RowMat& x, std::size_t slot) {
    const Eigen::Index col = static_cast<Eigen::Index>(slot) * d;
    for (std::size_t i = 0; i < graphs; ++i) {
      const auto lo = static_cast<Eigen::Index>(b.node_offset[i]);
      const auto len = static_cast<Eigen::Index>(b.node_offset[i + 1]) - lo;
      auto out = readout.block(static_cast<Eigen::Index>(i), col, 1, d);
      if (len == 0) {
        out.setZero();
        continue;
      }
      for (Eigen::Index c = 0; c < d; ++c) {
        double acc = config_.pooling == Pooling::Max ? x(lo, c) : 0.0;
        for (Eigen::Index r = lo; r < lo + len; ++r) {
          if (config_.pooling == Pooling::Max) {
            if (x(r, c) > acc) acc = x(r, c);
          } else {
            acc += x(r, c);
          }
        }
        out(0, c) = config_.pooling == Pooling::Mean ? acc / static_cast<double>(len) : acc;
      }
    }
  };
  pool_into(h, 0);

  RowMat a(static_cast<Eigen::Index>(n), d);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    RowMat g_next = eval_mlp(l.edge_mlp, (1.0 + l.eps_edge.value(0, 0)) * g);
    a.setZero();
    for (std::size_t v = 0; v < n; ++v) {
      for (auto q = adj.offset[v]; q < adj.offset[v + 1]; ++q) {
        const auto qq = static_cast<std::size_t>(q);
        a.row(static_cast<Eigen::Index>(v)) +=
            (h.row(adj.neighbor[qq]) + g.row(adj.edge[qq])).cwiseMax(0.0);
      }
    }
    h = eval_mlp(l.node_mlp, (1.0 + l.eps_node.value(0, 0)) * h + a);
    g = std::move(g_next);
    pool_into(h, k + 1);
  }
  const RowMat logits = eval_mlp(head, readout);
  std::vector<double> out(graphs);
  for (std::size_t i = 0; i < graphs; ++i) {
    const double v = logits(static_cast<Eigen::Index>(i), 0);
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return out;
}

double GinModel::predict(const Grid& grid, const FeatureSet& raw) const {
  return predict(make_graph(grid, scaler.apply(raw))).front();
}

namespace {

struct Snapshot {
  std::vector<Matrix> values;
  std::vector<Matrix> running_mean;
  std::vector<Matrix> running_var;

  static Snapshot take(GinModel& m) {
    Snapshot s;
    for (auto* p : m.parameters()) s.values.push_back(p->value);
    for (auto* bn : m.batch_norms()) {
      s.running_mean.push_back(bn->running_mean);
      s.running_var.push_back(bn->running_var);
    }
    return s;
  }
  void restore(GinModel& m) const {
    auto params = m.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
    auto bns = m.batch_norms();
    for (std::size_t i = 0; i < bns.size(); ++i) {
      bns[i]->running_mean = running_mean[i];
      bns[i]->running_var = running_var[i];
    }
  }
};

EpochRecord score(int epoch, const char* split, std::span<const double> p, std::span<const int> y) {
  EpochRecord r;
  r.epoch = epoch;
  r.split = split;
  if (p.empty()) {
    r.loss = r.accuracy = r.auc = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  std::vector<double> yd(y.begin(), y.end());
  r.loss = nn::bce(p, yd);
  r.accuracy = accuracy(p, y);
  r.auc = has_both_classes(y) ? auc(p, y) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

std::vector<GraphBatch> prepare(const GinModel& model, std::span<const LabeledSample> samples,
                                std::span<const std::size_t> idx) {
  std::vector<GraphBatch> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    const auto& s = samples[i];
    out.push_back(make_graph(s.grid, model.scaler.apply(s.features)));
  }
  return out;
}

std::vector<double> predict_prepared(const GinModel& model, const std::vector<GraphBatch>& graphs) {
  std::vector<double> out;
  out.reserve(graphs.size());
  const std::size_t step = model.config().batch_size;
  for (std::size_t lo = 0; lo < graphs.size(); lo += step) {
    std::vector<const GraphBatch*> parts;
    for (std::size_t i = lo; i < std::min(graphs.size(), lo + step); ++i) parts.push_back(&graphs[i]);
    const auto p = model.predict(concat(parts));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace

std::vector<double> predict_samples(const GinModel& model, std::span<const LabeledSample> samples,
                                    std::span<const std::size_t> idx) {
  return predict_prepared(model, prepare(model, samples, idx));
}

TrainResult train(GinModel& model, std::span<const LabeledSample> samples,
                  std::span<const std::size_t> train_idx, std::span<const std::size_t> val_idx,
                  const TrainOptions& options) {
  if (train_idx.empty()) throw TrainingError("no training samples");
  {
    std::vector<std::size_t> a(train_idx.begin(), train_idx.end());
    std::vector<std::size_t> b(val_idx.begin(), val_idx.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::size_t> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (!both.empty()) throw TrainingError("training and validation samples overlap");
    if (a.back() >= samples.size() || (!b.empty() && b.back() >= samples.size())) {
      throw TrainingError("sample index out of range");
    }
  }
  const GinConfig& cfg = model.config();
  if (options.fit_scaler) {
    std::vector<const FeatureSet*> fs;
    for (std::size_t i : train_idx) fs.push_back(&samples[i].features);
    model.scaler = FeatureScaler::fit(fs);
  }
  const auto train_graphs = prepare(model, samples, train_idx);
  const auto val_graphs = prepare(model, samples, val_idx);
  std::vector<int> val_labels;
  for (std::size_t i : val_idx) val_labels.push_back(samples[i].label);

  auto params = model.parameters();
  TrainResult result;
  result.adam = nn::make_adam(params, nn::AdamOptions{.lr = cfg.lr});
  Snapshot best = Snapshot::take(model);
  double best_score = -std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_idx.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.seed, SeedStream::Shuffle, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> seen_p;
    std::vector<int> seen_y;
    for (std::size_t lo = 0; lo < order.size();) {
      std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      // A lone trailing graph would give the readout batch norm zero variance.
      if (order.size() - hi == 1) ++hi;
      std::vector<const GraphBatch*> parts;
      std::vector<std::size_t> batch_ids;
      std::vector<double> targets;
      for (std::size_t k = lo; k < hi; ++k) {
        parts.push_back(&train_graphs[order[k]]);
        batch_ids.push_back(train_idx[order[k]]);
        targets.push_back(samples[train_idx[order[k]]].label);
      }
      if (options.on_batch) options.on_batch(epoch, batch_ids);
      const GraphBatch batch = concat(parts);
      Tape tape;
      const Var p = model.forward(tape, batch, Mode::Train);
      const Var loss = nn::bce_loss(tape, p, targets);
      const double lv = tape.value(loss)(0, 0);
      if (!std::isfinite(lv)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(lo));
      }
      for (auto* prm : params) prm->zero_grad();
      tape.backward(loss);
      nn::adam_step(params, result.adam);
      const auto& pv = tape.value(p).values();
      seen_p.insert(seen_p.end(), pv.begin(), pv.end());
      for (double y : targets) seen_y.push_back(static_cast<int>(y));
      lo = hi;
    }
    result.history.push_back(score(epoch, "train", seen_p, seen_y));
    if (options.on_epoch) options.on_epoch(result.history.back());

    double selection = 0.0;
    if (!val_graphs.empty()) {
      const auto vp = predict_prepared(model, val_graphs);
      result.history.push_back(score(epoch, "validation", vp, val_labels));
      if (options.on_epoch) options.on_epoch(result.history.back());
      const auto& r = result.history.back();
      selection = std::isnan(r.auc) ? r.accuracy : r.auc;
    } else {
      const auto& r = result.history[result.history.size() - 1];
      selection = std::isnan(r.auc) ? r.accuracy : r.auc;
    }
    if (selection > best_score) {
      best_score = selection;
      result.best_epoch = epoch;
      best = Snapshot::take(model);
    }
  }
  if (options.keep_best && result.best_epoch > 0) best.restore(model);
  return result;
}

std::string history_to_csv(std::span<const EpochRecord> history) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,split,loss,accuracy,auc\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.accuracy << ',';
    if (std::isnan(r.auc)) {
      os << "nan";
    } else {
      os << r.auc;
    }
    os << '\n';
  }
  return os.str();
}

namespace {

constexpr const char* kFormat = "gridgin-checkpoint";
constexpr int kVersion = 1;

json matrix_json(const Matrix& m) { return std::vector<double>(m.values().begin(), m.values().end()); }

Matrix matrix_from(const json& j, std::size_t rows, std::size_t cols, const std::string& what) {
  auto v = j.get<std::vector<double>>();
  if (v.size() != rows * cols) throw CheckpointError(what + ": expected " + std::to_string(rows * cols) + " values");
  Matrix m(rows, cols);
  std::copy(v.begin(), v.end(), m.values().begin());
  return m;
}

void read_weights(GinModel& model, const json& j) {
  const auto params = model.parameters();
  const auto& jp = j.at("parameters");
  if (jp.size() != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(jp.size()) + " parameters, model expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = jp[i];
    auto* p = params[i];
    if (e.at("name").get<std::string>() != p->name || e.at("rows").get<std::size_t>() != p->value.rows() ||
        e.at("cols").get<std::size_t>() != p->value.cols()) {
      throw CheckpointError("parameter " + std::to_string(i) + " does not match '" + p->name + "'");
    }
    p->value = matrix_from(e.at("values"), p->value.rows(), p->value.cols(), p->name);
    p->grad = Matrix(p->value.rows(), p->value.cols());
  }
  const auto bns = model.batch_norms();
  const auto& jb = j.at("batch_norm");
  if (jb.size() != bns.size()) throw CheckpointError("batch norm layer count mismatch");
  for (std::size_t i = 0; i < bns.size(); ++i) {
    auto* bn = bns[i];
    const std::size_t d = bn->dim();
    bn->running_mean = matrix_from(jb[i].at("running_mean"), 1, d, "running_mean");
    bn->running_var = matrix_from(jb[i].at("running_var"), 1, d, "running_var");
    bn->epsilon = jb[i].at("epsilon").get<double>();
    bn->momentum = jb[i].at("momentum").get<double>();
  }
  const auto& s = j.at("scaler");
  model.scaler.node_mean = s.at("node_mean").get<decltype(model.scaler.node_mean)>();
  model.scaler.node_scale = s.at("node_scale").get<decltype(model.scaler.node_scale)>();
  model.scaler.edge_mean = s.at("edge_mean").get<decltype(model.scaler.edge_mean)>();
  model.scaler.edge_scale = s.at("edge_scale").get<decltype(model.scaler.edge_scale)>();
}

void check_header(const json& j) {
  if (!j.is_object() || j.value("format", "") != kFormat) throw CheckpointError("not a checkpoint file");
  const int version = j.at("version").get<int>();
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
}

template <typename Fn>
auto guarded(const std::string& text, Fn&& fn) {
  try {
    const json j = detail::parse_json(text);
    check_header(j);
    return fn(j);
  } catch (const ParseError& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

std::string checkpoint_to_json(const GinModel& model, const nn::AdamState* adam) {
  auto& m = const_cast<GinModel&>(model);  // accessors below only read
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["config"] = config_json(model.config());
  j["scaler"] = {{"node_mean", model.scaler.node_mean},
                 {"node_scale", model.scaler.node_scale},
                 {"edge_mean", model.scaler.edge_mean},
                 {"edge_scale", model.scaler.edge_scale}};
  json params = json::array();
  for (const auto* p : m.parameters()) {
    params.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"values", matrix_json(p->value)}});
  }
  j["parameters"] = std::move(params);
  json bns = json::array();
  for (const auto* bn : m.batch_norms()) {
    bns.push_back({{"running_mean", matrix_json(bn->running_mean)},
                   {"running_var", matrix_json(bn->running_var)},
                   {"epsilon", bn->epsilon},
                   {"momentum", bn->momentum}});
  }
  j["batch_norm"] = std::move(bns);
  if (adam) {
    json ms = json::array();
    json vs = json::array();
    for (const auto& x : adam->m) ms.push_back(matrix_json(x));
    for (const auto& x : adam->v) vs.push_back(matrix_json(x));
    j["adam"] = {{"lr", adam->options.lr},     {"beta1", adam->options.beta1},
                 {"beta2", adam->options.beta2}, {"eps", adam->options.eps},
                 {"step", adam->step},           {"m", std::move(ms)},
                 {"v", std::move(vs)}};
  }
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  return guarded(text, [](const json& j) {
    GinConfig cfg;
    try {
      cfg = config_from(j.at("config"));
    } catch (const ValidationError& e) {
      throw CheckpointError(e.what());
    }
    if (auto p = cfg.problems(); !p.empty()) throw CheckpointError("invalid config in checkpoint");
    Checkpoint c{GinModel(cfg), std::nullopt};
    read_weights(c.model, j);
    if (j.contains("adam")) {
      const auto& a = j.at("adam");
      const auto params = c.model.parameters();
      nn::AdamState s = nn::make_adam(params, nn::AdamOptions{a.at("lr").get<double>(), a.at("beta1").get<double>(),
                                                              a.at("beta2").get<double>(), a.at("eps").get<double>()});
      s.step = a.at("step").get<std::uint64_t>();
      if (a.at("m").size() != params.size() || a.at("v").size() != params.size()) {
        throw CheckpointError("adam state does not match parameters");
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        s.m[i] = matrix_from(a.at("m")[i], params[i]->value.rows(), params[i]->value.cols(), "adam.m");
        s.v[i] = matrix_from(a.at("v")[i], params[i]->value.rows(), params[i]->value.cols(), "adam.v");
      }
      c.adam = std::move(s);
    }
    return c;
  });
}

void save_checkpoint(const GinModel& model, const std::filesystem::path& path, const nn::AdamState* adam) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << checkpoint_to_json(model, adam);
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_text(path)); }

void load_checkpoint_into(GinModel& model, const std::filesystem::path& path) {
  guarded(read_text(path), [&](const json& j) {
    const GinConfig stored = config_from(j.at("config"));
    const GinConfig& want = model.config();
    if (stored.layers != want.layers || stored.dim != want.dim || stored.pooling != want.pooling) {
      throw CheckpointError("checkpoint architecture (layers " + std::to_string(stored.layers) + ", dim " +
                            std::to_string(stored.dim) + ", pooling " + nn::to_string(stored.pooling) +
                            ") does not match the model (layers " + std::to_string(want.layers) + ", dim " +
                            std::to_string(want.dim) + ", pooling " + nn::to_string(want.pooling) + ")");
    }
    read_weights(model, j);
    return 0;
  });
}

}  // namespace gridgin
