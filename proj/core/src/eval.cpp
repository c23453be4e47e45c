#include "gridgin/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "detail/json_util.hpp"
#include "gridgin/contingency.hpp"
#include "gridgin/flow.hpp"
#include "gridgin/metrics.hpp"
#include "gridgin/parallel.hpp"
#include "gridgin/rng.hpp"

namespace gridgin {

using detail::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json num(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

}  // namespace

std::string FeatureRef::name() const {
  return kind == Kind::Node ? std::string("node.") + node_feature_name(column)
                            : std::string("edge.") + edge_feature_name(column);
}

std::vector<FeatureRef> all_features() {
  std::vector<FeatureRef> out;
  for (std::size_t c = 0; c < kNodeFeatureCount; ++c) out.push_back({FeatureRef::Kind::Node, c});
  for (std::size_t c = 0; c < kEdgeFeatureCount; ++c) out.push_back({FeatureRef::Kind::Edge, c});
  return out;
}

namespace {

struct Pooled {
  GraphBatch batch;
  std::vector<int> labels;
};

Pooled pool(const GinModel& model, std::span<const LabeledSample> samples, std::span<const std::size_t> idx) {
  std::vector<GraphBatch> graphs;
  graphs.reserve(idx.size());
  Pooled p;
  for (std::size_t i : idx) {
    graphs.push_back(make_graph(samples[i].grid, model.scaler.apply(samples[i].features)));
    p.labels.push_back(samples[i].label);
  }
  std::vector<const GraphBatch*> parts;
  for (const auto& g : graphs) parts.push_back(&g);
  p.batch = concat(parts);
  if (!has_both_classes(p.labels)) throw MetricError("permutation importance needs both classes");
  return p;
}

double importance_on(const GinModel& model, const Pooled& p, double baseline, const FeatureRef& f,
                     std::size_t repeats, std::uint64_t seed) {
  const std::size_t width = f.kind == FeatureRef::Kind::Node ? kNodeFeatureCount : kEdgeFeatureCount;
  if (f.column >= width) throw std::out_of_range("feature column " + std::to_string(f.column));
  if (repeats == 0) throw std::invalid_argument("repeats must be >= 1");
  double drop = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    GraphBatch b = p.batch;
    Matrix& m = f.kind == FeatureRef::Kind::Node ? b.node_x : b.edge_x;
    std::vector<double> column(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) column[i] = m(i, f.column);
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(SeedStream::Permutation),
                               static_cast<std::uint64_t>(f.kind), f.column, r}));
    std::shuffle(column.begin(), column.end(), rng);
    for (std::size_t i = 0; i < m.rows(); ++i) m(i, f.column) = column[i];
    drop += baseline - auc(model.predict(b), p.labels);
  }
  return drop / static_cast<double>(repeats);
}

}  // namespace

double feature_importance(const GinModel& model, std::span<const LabeledSample> samples,
                          std::span<const std::size_t> idx, const FeatureRef& feature, std::size_t repeats,
                          std::uint64_t seed) {
  const Pooled p = pool(model, samples, idx);
  return importance_on(model, p, auc(model.predict(p.batch), p.labels), feature, repeats, seed);
}

PfiReport permutation_feature_importance(const GinModel& model, std::span<const LabeledSample> samples,
                                         std::span<const std::size_t> idx, std::span<const FeatureRef> features,
                                         std::size_t repeats, std::uint64_t seed) {
  const Pooled p = pool(model, samples, idx);
  PfiReport r;
  r.baseline_auc = auc(model.predict(p.batch), p.labels);
  r.repeats = repeats;
  r.seed = seed;
  for (const auto& f : features) {
    r.entries.push_back({f, importance_on(model, p, r.baseline_auc, f, repeats, seed), 0.0});
  }
  normalize(r);
  return r;
}

void normalize(PfiReport& report) {
  if (report.entries.empty()) return;
  double lo = report.entries.front().importance;
  double hi = lo;
  for (const auto& e : report.entries) {
    lo = std::min(lo, e.importance);
    hi = std::max(hi, e.importance);
  }
  for (auto& e : report.entries) e.normalized = hi > lo ? (e.importance - lo) / (hi - lo) : 0.0;
}

std::string pfi_to_csv(const PfiReport& report) {
  std::string out = "feature,importance,normalized\n";
  for (const auto& e : report.entries) {
    out += e.feature.name() + "," + fmt(e.importance) + "," + fmt(e.normalized) + "\n";
  }
  return out;
}

const char* to_string(PlanKind k) noexcept {
  switch (k) {
    case PlanKind::SingleLocation: return "single";
    case PlanKind::AllLocations: return "all";
    case PlanKind::LeaveOneOut: return "loo";
  }
  return "?";
}

PlanKind plan_kind_from_string(const std::string& s) {
  if (s == "single") return PlanKind::SingleLocation;
  if (s == "all") return PlanKind::AllLocations;
  if (s == "loo") return PlanKind::LeaveOneOut;
  throw std::invalid_argument("unknown plan '" + s + "' (expected single, all or loo)");
}

std::vector<std::string> ExperimentPlan::problems() const {
  std::vector<std::string> out = training.problems();
  if (augmentation.empty()) out.push_back("augmentation sweep is empty");
  if (layers.empty()) out.push_back("layer sweep is empty");
  for (int k : layers) {
    if (k < 1) out.push_back("layer counts must be >= 1");
  }
  if (pooling.empty()) out.push_back("pooling sweep is empty");
  if (seeds.empty()) out.push_back("seed list is empty");
  if (pfi && pfi_repeats == 0) out.push_back("pfi_repeats must be >= 1");
  return out;
}

std::string plan_to_json(const ExperimentPlan& plan) {
  json pooling = json::array();
  for (auto p : plan.pooling) pooling.push_back(nn::to_string(p));
  json j = {{"kind", to_string(plan.kind)},
            {"locations", plan.locations},
            {"augmentation", plan.augmentation},
            {"layers", plan.layers},
            {"pooling", pooling},
            {"seeds", plan.seeds},
            {"training", json::parse(gin_config_to_json(plan.training))},
            {"pfi", plan.pfi},
            {"pfi_repeats", plan.pfi_repeats}};
  return j.dump(2);
}

ExperimentPlan plan_from_json(const std::string& text) {
  const json j = detail::parse_json(text);
  const std::string where = "experiment plan";
  detail::check_keys(j, where,
                     {"kind", "locations", "augmentation", "layers", "pooling", "seeds", "training", "pfi",
                      "pfi_repeats", "threads"},
                     false);
  ExperimentPlan p;
  try {
    if (j.contains("kind")) p.kind = plan_kind_from_string(detail::get_field<std::string>(j, "kind", where));
    if (j.contains("pooling")) {
      p.pooling.clear();
      for (const auto& s : detail::get_field<std::vector<std::string>>(j, "pooling", where)) {
        p.pooling.push_back(nn::pooling_from_string(s));
      }
    }
  } catch (const std::invalid_argument& e) {
    throw ParseError(where + ": " + e.what());
  }
  detail::get_optional(j, "locations", where, p.locations);
  detail::get_optional(j, "augmentation", where, p.augmentation);
  detail::get_optional(j, "layers", where, p.layers);
  detail::get_optional(j, "seeds", where, p.seeds);
  if (j.contains("training")) p.training = gin_config_from_json(j.at("training").dump());
  detail::get_optional(j, "pfi", where, p.pfi);
  detail::get_optional(j, "pfi_repeats", where, p.pfi_repeats);
  detail::get_optional(j, "threads", where, p.threads);
  return p;
}

std::vector<RoundSplit> plan_rounds(const ExperimentPlan& plan, const Dataset& dataset, bool augmentation) {
  const auto known = dataset.locations();
  std::vector<std::string> locations = plan.locations.empty() ? known : plan.locations;
  for (const auto& l : locations) {
    if (std::find(known.begin(), known.end(), l) == known.end()) {
      throw ValidationError({"plan names location '" + l + "' which the dataset does not contain"});
    }
  }
  const auto& entries = dataset.manifest.samples;
  auto keep_fit = [&](const SampleEntry& e) { return augmentation || e.provenance == Provenance::Generated; };
  auto build = [&](const std::string& name, auto in_train, auto in_test) {
    RoundSplit r;
    r.round = name;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (in_test(e)) {
        r.test.push_back(i);
      } else if (in_train(e) && keep_fit(e)) {
        (e.split == Split::Train ? r.train : r.validation).push_back(i);
      }
    }
    return r;
  };
  std::vector<RoundSplit> out;
  switch (plan.kind) {
    case PlanKind::AllLocations:
      out.push_back(build(
          "all",
          [](const SampleEntry& e) { return e.split == Split::Train || e.split == Split::Validation; },
          [](const SampleEntry& e) { return e.split == Split::Test; }));
      break;
    case PlanKind::SingleLocation:
      for (const auto& l : locations) {
        out.push_back(build(
            l,
            [&](const SampleEntry& e) {
              return e.location == l && (e.split == Split::Train || e.split == Split::Validation);
            },
            [&](const SampleEntry& e) { return e.location == l && e.split == Split::Test; }));
      }
      break;
    case PlanKind::LeaveOneOut:
      if (known.size() < 2) throw ValidationError({"leave-one-out needs at least two locations"});
      for (const auto& l : locations) {
        out.push_back(build(
            l,
            [&](const SampleEntry& e) {
              return e.location != l && (e.split == Split::Train || e.split == Split::Validation);
            },
            [&](const SampleEntry& e) { return e.location == l && e.provenance == Provenance::Generated; }));
      }
      break;
  }
  for (const auto& r : out) {
    if (r.train.empty()) throw ValidationError({"round '" + r.round + "' has no training samples"});
    if (r.test.empty()) throw ValidationError({"round '" + r.round + "' has no test samples"});
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentPlan& plan, const Dataset& dataset,
                                const ExperimentProgress& progress) {
  if (auto p = plan.problems(); !p.empty()) throw ValidationError(p);
  struct Cell {
    const RoundSplit* split;
    bool augmentation;
    int layers;
    Pooling pooling;
    std::uint64_t seed;
  };
  std::vector<std::vector<RoundSplit>> rounds;
  for (bool aug : plan.augmentation) rounds.push_back(plan_rounds(plan, dataset, aug));
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < rounds.front().size(); ++r) {
    for (std::size_t a = 0; a < plan.augmentation.size(); ++a) {
      for (int k : plan.layers) {
        for (Pooling p : plan.pooling) {
          for (auto seed : plan.seeds) cells.push_back({&rounds[a][r], plan.augmentation[a], k, p, seed});
        }
      }
    }
  }

  ExperimentReport report;
  report.plan = plan;
  report.cells.resize(cells.size());
  std::mutex progress_mutex;
  parallel_for(cells.size(), plan.threads, [&](std::size_t i) {
    const Cell& c = cells[i];
    GinConfig cfg = plan.training;
    cfg.layers = c.layers;
    cfg.pooling = c.pooling;
    cfg.seed = c.seed;
    GinModel model(cfg);
    const std::set<std::size_t> held_out(c.split->test.begin(), c.split->test.end());
    TrainOptions options;
    options.on_batch = [&](int, std::span<const std::size_t> batch) {
      for (std::size_t s : batch) {
        if (held_out.count(s)) throw std::logic_error("test sample in a training batch");
      }
    };
    const TrainResult tr = train(model, dataset.samples, c.split->train, c.split->validation, options);

    CellResult& out = report.cells[i];
    out.round = c.split->round;
    out.layers = c.layers;
    out.pooling = c.pooling;
    out.augmentation = c.augmentation;
    out.seed = c.seed;
    out.train_samples = c.split->train.size();
    out.validation_samples = c.split->validation.size();
    out.test_samples = c.split->test.size();
    out.best_epoch = tr.best_epoch;
    out.history = tr.history;
    const auto p = predict_samples(model, dataset.samples, c.split->test);
    std::vector<int> y;
    for (std::size_t s : c.split->test) y.push_back(dataset.samples[s].label);
    out.test_accuracy = accuracy(p, y);
    out.test_auc = has_both_classes(y) ? auc(p, y) : kNaN;
    if (plan.pfi && has_both_classes(y)) {
      out.pfi = permutation_feature_importance(model, dataset.samples, c.split->test, all_features(),
                                               plan.pfi_repeats, derive_seed(c.seed, SeedStream::Permutation));
    }
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(out);
    }
  });
  return report;
}

std::string cells_to_csv(const ExperimentReport& report) {
  std::string out =
      "round,model,pooling,augmentation,seed,train_samples,validation_samples,test_samples,best_epoch,"
      "test_auc,test_accuracy\n";
  for (const auto& c : report.cells) {
    out += c.round + ",GIN-" + std::to_string(c.layers) + "," + nn::to_string(c.pooling) + "," +
           (c.augmentation ? "true" : "false") + "," + std::to_string(c.seed) + "," +
           std::to_string(c.train_samples) + "," + std::to_string(c.validation_samples) + "," +
           std::to_string(c.test_samples) + "," + std::to_string(c.best_epoch) + "," + fmt(c.test_auc) + "," +
           fmt(c.test_accuracy) + "\n";
  }
  return out;
}

std::string metric_table_csv(const ExperimentReport& report, const std::string& metric) {
  if (metric != "auc" && metric != "accuracy") throw std::invalid_argument("metric must be auc or accuracy");
  std::vector<std::string> rounds;
  using Key = std::tuple<int, bool, int>;
  std::vector<Key> rows;
  std::map<std::pair<Key, std::string>, std::pair<double, int>> acc;
  for (const auto& c : report.cells) {
    if (std::find(rounds.begin(), rounds.end(), c.round) == rounds.end()) rounds.push_back(c.round);
    const Key k{c.layers, c.augmentation, static_cast<int>(c.pooling)};
    if (std::find(rows.begin(), rows.end(), k) == rows.end()) rows.push_back(k);
    auto& [sum, n] = acc[{k, c.round}];
    sum += metric == "auc" ? c.test_auc : c.test_accuracy;
    ++n;
  }
  std::string out = "model,pooling,augmentation";
  for (const auto& r : rounds) out += "," + r;
  out += "\n";
  for (const auto& k : rows) {
    const auto& [layers, aug, pooling] = k;
    out += "GIN-" + std::to_string(layers) + "," + nn::to_string(static_cast<Pooling>(pooling)) + "," +
           (aug ? "true" : "false");
    for (const auto& r : rounds) {
      const auto it = acc.find({k, r});
      out += "," + (it == acc.end() ? std::string("") : fmt(it->second.first / it->second.second));
    }
    out += "\n";
  }
  return out;
}

std::string curves_to_csv(const ExperimentReport& report) {
  std::string out = "round,model,pooling,augmentation,seed,epoch,split,loss,accuracy,auc\n";
  for (const auto& c : report.cells) {
    const std::string key = c.round + ",GIN-" + std::to_string(c.layers) + "," + nn::to_string(c.pooling) + "," +
                            (c.augmentation ? "true" : "false") + "," + std::to_string(c.seed) + ",";
    for (const auto& h : c.history) {
      out += key + std::to_string(h.epoch) + "," + h.split + "," + fmt(h.loss) + "," + fmt(h.accuracy) + "," +
             fmt(h.auc) + "\n";
    }
  }
  return out;
}

std::string pfi_summary_csv(const ExperimentReport& report) {
  PfiReport mean;
  std::size_t n = 0;
  for (const auto& c : report.cells) {
    if (!c.pfi) continue;
    if (mean.entries.empty()) {
      mean = *c.pfi;
      for (auto& e : mean.entries) e.importance = 0.0;
    }
    for (std::size_t i = 0; i < mean.entries.size(); ++i) mean.entries[i].importance += c.pfi->entries[i].importance;
    ++n;
  }
  for (auto& e : mean.entries) e.importance /= static_cast<double>(std::max<std::size_t>(n, 1));
  normalize(mean);
  return pfi_to_csv(mean);
}

std::string report_to_json(const ExperimentReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json j = {{"round", c.round},
              {"layers", c.layers},
              {"pooling", nn::to_string(c.pooling)},
              {"augmentation", c.augmentation},
              {"seed", c.seed},
              {"train_samples", c.train_samples},
              {"validation_samples", c.validation_samples},
              {"test_samples", c.test_samples},
              {"best_epoch", c.best_epoch},
              {"test_auc", num(c.test_auc)},
              {"test_accuracy", num(c.test_accuracy)}};
    if (c.pfi) {
      json entries = json::array();
      for (const auto& e : c.pfi->entries) {
        entries.push_back({{"feature", e.feature.name()}, {"importance", e.importance}, {"normalized", e.normalized}});
      }
      j["pfi"] = {{"baseline_auc", c.pfi->baseline_auc},
                  {"repeats", c.pfi->repeats},
                  {"seed", c.pfi->seed},
                  {"entries", entries}};
    }
    cells.push_back(std::move(j));
  }
  return json{{"plan", json::parse(plan_to_json(report.plan))}, {"cells", cells}}.dump(2) + "\n";
}

BaselineReport compare_baseline(const GinModel& model, const Dataset& dataset, std::span<const std::size_t> idx,
                                const CompareOptions& options) {
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
  BaselineReport r;
  std::size_t oracle_hits = 0;
  std::size_t gin_hits = 0;
  const std::size_t repeats = std::max<std::size_t>(1, options.gin_repeats);
  for (std::size_t i : idx) {
    const auto& s = dataset.samples.at(i);
    if (s.grid.node_count() < options.min_nodes) continue;
    BaselineRow row;
    row.id = dataset.manifest.samples.at(i).id;
    row.nodes = s.grid.node_count();
    row.edges = s.grid.edge_count();
    row.label = s.label;

    N1Options n1;
    n1.threads = 1;
    n1.stop_at_first_failure = true;
    auto t0 = clock::now();
    const int oracle = label_n1(s.grid, n1).label;
    row.oracle_seconds = seconds(t0, clock::now());

    t0 = clock::now();
    for (std::size_t k = 0; k < repeats; ++k) row.gin_probability = model.predict(s.grid, compute_features(s.grid));
    row.gin_seconds = seconds(t0, clock::now()) / static_cast<double>(repeats);

    oracle_hits += oracle == s.label;
    gin_hits += (row.gin_probability >= 0.5 ? 1 : 0) == s.label;
    r.mean_oracle_seconds += row.oracle_seconds;
    r.mean_gin_seconds += row.gin_seconds;
    r.rows.push_back(std::move(row));
  }
  if (r.rows.empty()) return r;
  const auto n = static_cast<double>(r.rows.size());
  r.oracle_accuracy = static_cast<double>(oracle_hits) / n;
  r.gin_accuracy = static_cast<double>(gin_hits) / n;
  r.mean_oracle_seconds /= n;
  r.mean_gin_seconds /= n;
  r.speedup = r.mean_gin_seconds > 0.0 ? r.mean_oracle_seconds / r.mean_gin_seconds : 0.0;
  return r;
}

std::string baseline_to_csv(const BaselineReport& report) {
  std::ostringstream os;
  os << "id,nodes,edges,label,gin_probability,oracle_seconds,gin_seconds\n";
  char buf[64];
  for (const auto& r : report.rows) {
    os << r.id << ',' << r.nodes << ',' << r.edges << ',' << r.label << ',' << fmt(r.gin_probability) << ',';
    std::snprintf(buf, sizeof buf, "%.9f,%.9f", r.oracle_seconds, r.gin_seconds);
    os << buf << '\n';
  }
  return os.str();
}

}  // namespace gridgin
