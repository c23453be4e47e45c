#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gridgin/augment.hpp"
#include "gridgin/contingency.hpp"
#include "gridgin/dataset.hpp"
#include "gridgin/errors.hpp"
#include "gridgin/eval.hpp"
#include "gridgin/flow.hpp"
#include "gridgin/gin.hpp"
#include "gridgin/grid_io.hpp"
#include "gridgin/metrics.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gridgin;

namespace {

enum ExitCode { kOk = 0, kParse = 2, kValidation = 3, kRuntime = 4 };

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
  c.out = default_out;
  cmd->add_option("--config", c.config, "JSON file with settings; flags take precedence")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--threads", c.threads, "worker threads")->check(CLI::Range(1u, 256u));
  cmd->add_option("--out", c.out, "output directory");
}

bool given(const CLI::App* cmd, const std::string& name) { return cmd->count(name) > 0; }

void log_config(const std::string& command, const json& resolved) {
  std::cerr << "gridgin " << command << ": resolved config " << resolved.dump() << "\n";
}

void write_config(const fs::path& out, const json& resolved) {
  fs::create_directories(out);
  write_text_file(out / "config.json", resolved.dump(2) + "\n");
}

std::optional<std::string> config_text(const Common& c) {
  if (c.config.empty()) return std::nullopt;
  return read_text_file(c.config);
}

Checkpoint open_checkpoint(const std::string& path) {
  if (!fs::is_regular_file(path)) throw std::runtime_error("checkpoint not found: " + path);
  return load_checkpoint(path);
}

std::vector<std::size_t> split_indices(const Dataset& d, const std::string& split,
                                       const std::vector<std::string>& locations) {
  std::vector<std::size_t> out;
  const Split s = split_from_string(split);
  for (std::size_t i : d.indices(s)) {
    const auto& loc = d.manifest.samples[i].location;
    if (locations.empty() || std::find(locations.begin(), locations.end(), loc) != locations.end()) {
      out.push_back(i);
    }
  }
  return out;
}

// generate ----------------------------------------------------------------

struct GenerateArgs {
  Common common;
  std::size_t samples = 0;
  double balance = 0.0;
  double test_fraction = 0.0;
  double validation_fraction = 0.0;
  double max_deviation = 0.0;
};

void print_summary(const Dataset& d) {
  const auto rows = summarize(d);
  std::printf("%-12s %9s %9s %13s %11s %11s %16s %8s\n", "location", "#samples", "augmented", "#nodes",
              "mean nodes", "mean edges", "route min/avg/max", "n-1");
  for (const auto& r : rows) {
    char nodes[32];
    char route[32];
    std::snprintf(nodes, sizeof nodes, "%zu-%zu", r.min_nodes, r.max_nodes);
    std::snprintf(route, sizeof route, "%d/%.1f/%d", r.route_length.min, r.route_length.avg, r.route_length.max);
    std::printf("%-12s %9zu %9zu %13s %11.1f %11.1f %16s %7.1f%%\n", r.location.c_str(), r.samples, r.augmented,
                nodes, r.mean_nodes, r.mean_edges, route, 100.0 * r.n1_fraction);
  }
  std::size_t ones = 0;
  for (const auto& s : d.samples) ones += static_cast<std::size_t>(s.label);
  const double n = static_cast<double>(d.samples.size());
  std::printf("\nlabel histogram\n  0 (not n-1): %zu (%.1f%%)\n  1 (n-1):     %zu (%.1f%%)\n",
              d.samples.size() - ones, 100.0 * static_cast<double>(d.samples.size() - ones) / n, ones,
              100.0 * static_cast<double>(ones) / n);
}

int run_generate(const CLI::App* cmd, const GenerateArgs& a) {
  GeneratorConfig c;
  if (auto text = config_text(a.common)) c = generator_config_from_json(*text);
  if (given(cmd, "--samples")) c.n_samples = a.samples;
  if (given(cmd, "--balance")) c.balance = a.balance;
  if (given(cmd, "--test-fraction")) c.test_fraction = a.test_fraction;
  if (given(cmd, "--validation-fraction")) c.validation_fraction = a.validation_fraction;
  if (given(cmd, "--max-deviation")) c.max_deviation = a.max_deviation;
  if (given(cmd, "--seed")) c.seed = a.common.seed;
  if (given(cmd, "--threads")) c.threads = a.common.threads;
  const json resolved = json::parse(generator_config_to_json(c));
  log_config("generate", resolved);
  build_dataset(c, a.common.out);
  const Dataset d = load_dataset(a.common.out);
  write_text_file(fs::path(a.common.out) / "summary.csv", summary_to_csv(summarize(d)));
  print_summary(d);
  return kOk;
}

// label -------------------------------------------------------------------

struct LabelArgs {
  Common common;
  std::string grid;
  double max_deviation = 0.05;
  bool first_failure = false;
};

int run_label(const LabelArgs& a) {
  const Grid g = read_grid(a.grid);
  if (auto v = validate_grid(g); !v.ok()) throw ValidationError(v.issues);
  N1Options o;
  o.max_deviation = a.max_deviation;
  o.threads = a.common.threads;
  o.stop_at_first_failure = a.first_failure;
  log_config("label", {{"grid", a.grid},
                       {"max_deviation", o.max_deviation},
                       {"threads", o.threads},
                       {"stop_at_first_failure", o.stop_at_first_failure}});
  const auto r = label_n1(g, o);
  const std::string text = n1_result_to_json(r);
  std::cout << text << "\n";
  if (!a.common.out.empty()) {
    fs::create_directories(a.common.out);
    write_text_file(fs::path(a.common.out) / "label.json", text + "\n");
  }
  return kOk;
}

// augment -----------------------------------------------------------------

struct AugmentArgs {
  Common common;
  std::string grid;
  double max_deviation = 0.05;
};

int run_augment(const AugmentArgs& a) {
  const Grid g = read_grid(a.grid);
  if (auto v = validate_grid(g); !v.ok()) throw ValidationError(v.issues);
  N1Options o;
  o.max_deviation = a.max_deviation;
  o.threads = a.common.threads;
  const json resolved{{"grid", a.grid}, {"seed", a.common.seed}, {"max_deviation", a.max_deviation}};
  log_config("augment", resolved);
  LabeledSample s{g, compute_features(g), label_n1(g, o).label, Provenance::Generated};
  AugmentOptions ao;
  ao.max_deviation = a.max_deviation;
  ao.threads = a.common.threads;
  const auto [out, rec] = augment(s, a.common.seed, fs::path(a.grid).stem().string(), ao);
  const fs::path dir = a.common.out;
  write_config(dir, resolved);
  write_grid(dir / "grid.json", out.grid);
  write_features(dir / "features.json", out.features);
  const json record{{"action", to_string(rec.action)},
                    {"affected", rec.affected},
                    {"label", out.label},
                    {"label_verified", rec.label_verified},
                    {"nodes", out.grid.node_count()},
                    {"edges", out.grid.edge_count()}};
  write_text_file(dir / "augmentation.json", record.dump(2) + "\n");
  std::cout << record.dump() << "\n";
  return rec.label_verified ? kOk : kRuntime;
}

// train -------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string dataset;
  int layers = 15;
  std::size_t dim = 16;
  std::string pooling = "sum";
  double lr = 1e-4;
  int epochs = 60;
  std::size_t batch_size = 32;
  std::vector<std::string> locations;
  bool augmentation = true;
};

GinConfig resolve_gin(const CLI::App* cmd, const TrainArgs& a) {
  GinConfig c;
  if (auto text = config_text(a.common)) c = gin_config_from_json(*text);
  if (given(cmd, "--layers")) c.layers = a.layers;
  if (given(cmd, "--dim")) c.dim = a.dim;
  if (given(cmd, "--pooling")) c.pooling = nn::pooling_from_string(a.pooling);
  if (given(cmd, "--lr")) c.lr = a.lr;
  if (given(cmd, "--epochs")) c.epochs = a.epochs;
  if (given(cmd, "--batch-size")) c.batch_size = a.batch_size;
  if (given(cmd, "--seed")) c.seed = a.common.seed;
  if (auto p = c.problems(); !p.empty()) throw ValidationError(p);
  return c;
}

int run_train(const CLI::App* cmd, const TrainArgs& a) {
  const GinConfig c = resolve_gin(cmd, a);
  json resolved = json::parse(gin_config_to_json(c));
  resolved["dataset"] = a.dataset;
  resolved["locations"] = a.locations;
  resolved["augmentation"] = a.augmentation;
  log_config("train", resolved);

  const Dataset d = load_dataset(a.dataset);
  auto fit = [&](const std::string& split) {
    std::vector<std::size_t> out;
    for (std::size_t i : split_indices(d, split, a.locations)) {
      if (a.augmentation || d.samples[i].provenance == Provenance::Generated) out.push_back(i);
    }
    return out;
  };
  const auto tr = fit("train");
  const auto va = fit("validation");
  const auto te = split_indices(d, "test", a.locations);
  if (tr.empty()) throw ValidationError({"no training samples selected"});

  GinModel model(c);
  TrainOptions opt;
  opt.on_epoch = [](const EpochRecord& e) {
    std::fprintf(stderr, "epoch %3d %-10s loss %.4f acc %.4f auc %.4f\n", e.epoch, e.split.c_str(), e.loss,
                 e.accuracy, e.auc);
  };
  const auto result = train(model, d.samples, tr, va, opt);

  const fs::path out = a.common.out;
  write_config(out, resolved);
  save_checkpoint(model, out / "checkpoint.json", &result.adam);
  write_text_file(out / "history.csv", history_to_csv(result.history));
  json metrics{{"best_epoch", result.best_epoch}, {"train_samples", tr.size()}, {"validation_samples", va.size()},
               {"test_samples", te.size()}};
  if (!te.empty()) {
    const auto p = predict_samples(model, d.samples, te);
    std::vector<int> y;
    for (std::size_t i : te) y.push_back(d.samples[i].label);
    metrics["test_accuracy"] = accuracy(p, y);
    if (has_both_classes(y)) metrics["test_auc"] = auc(p, y);
  }
  write_text_file(out / "metrics.json", metrics.dump(2) + "\n");
  std::cout << metrics.dump() << "\n";
  return kOk;
}

// eval --------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string dataset;
  std::string checkpoint;
  std::string split = "test";
  std::string plan = "all";
  std::vector<std::string> locations;
  std::vector<int> layers;
  std::vector<std::string> pooling;
  std::vector<bool> augmentation;
  std::vector<std::uint64_t> seeds;
  int epochs = 0;
  double lr = 0.0;
  bool pfi = false;
  std::size_t pfi_repeats = 10;
};

int eval_checkpoint(const EvalArgs& a) {
  const json resolved{{"dataset", a.dataset}, {"checkpoint", a.checkpoint}, {"split", a.split},
                      {"locations", a.locations}};
  log_config("eval", resolved);
  const Dataset d = load_dataset(a.dataset);
  const Checkpoint ck = open_checkpoint(a.checkpoint);
  const auto idx = split_indices(d, a.split, a.locations);
  if (idx.empty()) throw ValidationError({"no samples selected"});
  const auto p = predict_samples(ck.model, d.samples, idx);
  std::vector<int> y;
  std::string csv = "id,label,probability\n";
  for (std::size_t k = 0; k < idx.size(); ++k) {
    y.push_back(d.samples[idx[k]].label);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", p[k]);
    csv += d.manifest.samples[idx[k]].id + "," + std::to_string(y.back()) + "," + buf + "\n";
  }
  json metrics{{"samples", idx.size()}, {"accuracy", accuracy(p, y)}};
  if (has_both_classes(y)) metrics["auc"] = auc(p, y);
  const fs::path out = a.common.out;
  write_config(out, resolved);
  write_text_file(out / "predictions.csv", csv);
  write_text_file(out / "metrics.json", metrics.dump(2) + "\n");
  std::cout << metrics.dump() << "\n";
  return kOk;
}

int run_eval(const CLI::App* cmd, const EvalArgs& a) {
  if (!a.checkpoint.empty()) return eval_checkpoint(a);
  ExperimentPlan plan;
  if (auto text = config_text(a.common)) plan = plan_from_json(*text);
  if (given(cmd, "--plan")) plan.kind = plan_kind_from_string(a.plan);
  if (given(cmd, "--locations")) plan.locations = a.locations;
  if (given(cmd, "--layers")) plan.layers = a.layers;
  if (given(cmd, "--pooling")) {
    plan.pooling.clear();
    for (const auto& p : a.pooling) plan.pooling.push_back(nn::pooling_from_string(p));
  }
  if (given(cmd, "--augmentation")) plan.augmentation = a.augmentation;
  if (given(cmd, "--seeds")) plan.seeds = a.seeds;
  if (given(cmd, "--seed")) plan.seeds = {a.common.seed};
  if (given(cmd, "--epochs")) plan.training.epochs = a.epochs;
  if (given(cmd, "--lr")) plan.training.lr = a.lr;
  if (given(cmd, "--pfi")) plan.pfi = a.pfi;
  if (given(cmd, "--pfi-repeats")) plan.pfi_repeats = a.pfi_repeats;
  plan.threads = a.common.threads;
  if (auto p = plan.problems(); !p.empty()) throw ValidationError(p);
  json resolved = json::parse(plan_to_json(plan));
  resolved["dataset"] = a.dataset;
  log_config("eval", resolved);

  const Dataset d = load_dataset(a.dataset);
  const auto report = run_experiment(plan, d, [](const CellResult& c) {
    std::fprintf(stderr, "cell %s GIN-%d %s aug=%d seed=%llu auc %.4f acc %.4f\n", c.round.c_str(), c.layers,
                 nn::to_string(c.pooling), c.augmentation ? 1 : 0, static_cast<unsigned long long>(c.seed),
                 c.test_auc, c.test_accuracy);
  });
  const fs::path out = a.common.out;
  write_config(out, resolved);
  const std::string auc_table = metric_table_csv(report, "auc");
  write_text_file(out / "cells.csv", cells_to_csv(report));
  write_text_file(out / "auc_table.csv", auc_table);
  write_text_file(out / "accuracy_table.csv", metric_table_csv(report, "accuracy"));
  write_text_file(out / "curves.csv", curves_to_csv(report));
  write_text_file(out / "report.json", report_to_json(report));
  if (plan.pfi) write_text_file(out / "pfi_summary.csv", pfi_summary_csv(report));
  std::cout << auc_table;
  return kOk;
}

// pfi ---------------------------------------------------------------------

struct PfiArgs {
  Common common;
  std::string dataset;
  std::string checkpoint;
  std::string split = "test";
  std::vector<std::string> locations;
  std::size_t repeats = 10;
};

int run_pfi(const PfiArgs& a) {
  const json resolved{{"dataset", a.dataset}, {"checkpoint", a.checkpoint}, {"split", a.split},
                      {"locations", a.locations}, {"repeats", a.repeats}, {"seed", a.common.seed}};
  log_config("pfi", resolved);
  if (a.repeats == 0) throw ValidationError({"repeats must be >= 1"});
  const Dataset d = load_dataset(a.dataset);
  const Checkpoint ck = open_checkpoint(a.checkpoint);
  const auto idx = split_indices(d, a.split, a.locations);
  const auto features = all_features();
  const auto r = permutation_feature_importance(ck.model, d.samples, idx, features, a.repeats, a.common.seed);
  const fs::path out = a.common.out;
  write_config(out, resolved);
  const std::string csv = pfi_to_csv(r);
  write_text_file(out / "pfi.csv", csv);
  std::printf("baseline auc %.4f\n%s", r.baseline_auc, csv.c_str());
  return kOk;
}

// compare -----------------------------------------------------------------

struct CompareArgs {
  Common common;
  std::string dataset;
  std::string checkpoint;
  std::string split = "test";
  std::size_t min_nodes = 40;
  std::size_t repeats = 3;
};

int run_compare(const CompareArgs& a) {
  const json resolved{{"dataset", a.dataset}, {"checkpoint", a.checkpoint}, {"split", a.split},
                      {"min_nodes", a.min_nodes}, {"gin_repeats", a.repeats}};
  log_config("compare", resolved);
  const Dataset d = load_dataset(a.dataset);
  const Checkpoint ck = open_checkpoint(a.checkpoint);
  const auto idx = split_indices(d, a.split, {});
  const auto r = compare_baseline(ck.model, d, idx, {.min_nodes = a.min_nodes, .gin_repeats = a.repeats});
  if (r.rows.empty()) throw ValidationError({"no grids with at least " + std::to_string(a.min_nodes) + " nodes"});
  const fs::path out = a.common.out;
  write_config(out, resolved);
  write_text_file(out / "baseline.csv", baseline_to_csv(r));
  std::printf("grids            %zu\n", r.rows.size());
  std::printf("oracle accuracy  %.4f\n", r.oracle_accuracy);
  std::printf("gin accuracy     %.4f\n", r.gin_accuracy);
  std::printf("oracle s/sample  %.6f\n", r.mean_oracle_seconds);
  std::printf("gin s/sample     %.6f\n", r.mean_gin_seconds);
  std::printf("speedup          %.1fx\n", r.speedup);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"n-1 reliability assessment of MV grids with an exact oracle and a GIN"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "generate a labelled, augmented dataset");
  add_common(generate, gen.common, "dataset");
  generate->add_option("--samples", gen.samples, "base samples before augmentation");
  generate->add_option("--balance", gen.balance, "fraction of n-1 samples");
  generate->add_option("--test-fraction", gen.test_fraction);
  generate->add_option("--validation-fraction", gen.validation_fraction);
  generate->add_option("--max-deviation", gen.max_deviation, "allowed relative voltage deviation");

  LabelArgs lab;
  auto* label = app.add_subcommand("label", "decide the n-1 property of one grid");
  add_common(label, lab.common, "");
  label->add_option("grid", lab.grid, "grid JSON file")->required();
  label->add_option("--max-deviation", lab.max_deviation);
  label->add_flag("--first-failure", lab.first_failure, "stop at the first failing contingency");

  AugmentArgs aug;
  auto* augment_cmd = app.add_subcommand("augment", "apply one label-preserving augmentation to a grid");
  add_common(augment_cmd, aug.common, "augmented");
  augment_cmd->add_option("grid", aug.grid, "grid JSON file")->required();
  augment_cmd->add_option("--max-deviation", aug.max_deviation);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a GIN on the dataset's training split");
  add_common(train_cmd, tr.common, "model");
  train_cmd->add_option("--dataset", tr.dataset)->required();
  train_cmd->add_option("--layers,-k,--k", tr.layers, "message-passing layers");
  train_cmd->add_option("--dim", tr.dim, "embedding width");
  train_cmd->add_option("--pooling", tr.pooling)->check(CLI::IsMember({"sum", "mean", "max"}));
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--locations", tr.locations)->delimiter(',');
  train_cmd->add_option("--augmentation", tr.augmentation, "use augmented training samples");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint, or run an experiment plan");
  add_common(eval_cmd, ev.common, "report");
  eval_cmd->add_option("--dataset", ev.dataset)->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "evaluate this model instead of running a plan");
  eval_cmd->add_option("--split", ev.split)->check(CLI::IsMember({"train", "validation", "test"}));
  eval_cmd->add_option("--plan", ev.plan)->check(CLI::IsMember({"single", "all", "loo"}));
  eval_cmd->add_option("--locations", ev.locations)->delimiter(',');
  eval_cmd->add_option("--layers", ev.layers)->delimiter(',');
  eval_cmd->add_option("--pooling", ev.pooling)->delimiter(',')->check(CLI::IsMember({"sum", "mean", "max"}));
  eval_cmd->add_option("--augmentation", ev.augmentation)->delimiter(',');
  eval_cmd->add_option("--seeds", ev.seeds)->delimiter(',');
  eval_cmd->add_option("--epochs", ev.epochs);
  eval_cmd->add_option("--lr", ev.lr);
  eval_cmd->add_option("--pfi", ev.pfi, "run permutation importance per cell");
  eval_cmd->add_option("--pfi-repeats", ev.pfi_repeats);

  PfiArgs pf;
  auto* pfi_cmd = app.add_subcommand("pfi", "permutation feature importance of a checkpoint");
  add_common(pfi_cmd, pf.common, "pfi");
  pfi_cmd->add_option("--dataset", pf.dataset)->required();
  pfi_cmd->add_option("--checkpoint", pf.checkpoint)->required();
  pfi_cmd->add_option("--split", pf.split)->check(CLI::IsMember({"train", "validation", "test"}));
  pfi_cmd->add_option("--locations", pf.locations)->delimiter(',');
  pfi_cmd->add_option("--repeats", pf.repeats);

  CompareArgs cmp;
  auto* compare_cmd = app.add_subcommand("compare", "time the oracle against GIN inference");
  add_common(compare_cmd, cmp.common, "compare");
  compare_cmd->add_option("--dataset", cmp.dataset)->required();
  compare_cmd->add_option("--checkpoint", cmp.checkpoint)->required();
  compare_cmd->add_option("--split", cmp.split)->check(CLI::IsMember({"train", "validation", "test"}));
  compare_cmd->add_option("--min-nodes", cmp.min_nodes);
  compare_cmd->add_option("--repeats", cmp.repeats, "timed GIN runs per grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kParse;
  }

  try {
    if (generate->parsed()) return run_generate(generate, gen);
    if (label->parsed()) return run_label(lab);
    if (augment_cmd->parsed()) return run_augment(aug);
    if (train_cmd->parsed()) return run_train(train_cmd, tr);
    if (eval_cmd->parsed()) return run_eval(eval_cmd, ev);
    if (pfi_cmd->parsed()) return run_pfi(pf);
    if (compare_cmd->parsed()) return run_compare(cmp);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kParse;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
