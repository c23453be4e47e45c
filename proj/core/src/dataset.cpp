#include "gridgin/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "detail/json_util.hpp"
#include "gridgin/grid_io.hpp"
#include "gridgin/parallel.hpp"
#include "gridgin/rng.hpp"

namespace gridgin {

using detail::json;

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    case Split::Unused: return "unused";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  if (s == "unused") return Split::Unused;
  throw std::invalid_argument("unknown split '" + s + "'");
}

const SampleEntry& DatasetManifest::find(const std::string& id) const {
  for (const auto& s : samples) {
    if (s.id == id) return s;
  }
  throw std::out_of_range("no sample '" + id + "' in manifest");
}

namespace {

template <typename R>
json range_to_json(const R& r) {
  return json::array({r.lo, r.hi});
}

IntRange int_range(const json& j, const char* field, const std::string& where) {
  const auto v = detail::get_field<std::vector<int>>(j, field, where);
  if (v.size() != 2) throw ParseError(where + ": '" + field + "' must be [lo, hi]");
  return {v[0], v[1]};
}

RealRange real_range(const json& j, const char* field, const std::string& where) {
  const auto v = detail::get_field<std::vector<double>>(j, field, where);
  if (v.size() != 2) throw ParseError(where + ": '" + field + "' must be [lo, hi]");
  return {v[0], v[1]};
}

json profile_to_json(const LocationProfile& p) {
  return {{"name", p.name},
          {"sources", range_to_json(p.sources)},
          {"feeders_per_source", range_to_json(p.feeders_per_source)},
          {"trunk_length", range_to_json(p.trunk_length)},
          {"lateral_probability", p.lateral_probability},
          {"lateral_length", range_to_json(p.lateral_length)},
          {"leaf_ties", p.leaf_ties},
          {"extra_ties", range_to_json(p.extra_ties)},
          {"max_ties", p.max_ties},
          {"node_count", range_to_json(p.node_count)},
          {"load_kw", range_to_json(p.load_kw)},
          {"impedance_ohm", range_to_json(p.impedance_ohm)},
          {"cable_ratings_a", p.cable_ratings_a},
          {"stress", range_to_json(p.stress)},
          {"nominal_voltage_v", p.nominal_voltage_v},
          {"weight", p.weight}};
}

LocationProfile profile_from_json(const json& j, const std::string& where) {
  detail::check_keys(j, where,
                     {"name", "sources", "feeders_per_source", "trunk_length", "lateral_probability",
                      "lateral_length", "leaf_ties", "extra_ties", "max_ties", "node_count", "load_kw",
                      "impedance_ohm", "cable_ratings_a", "stress", "nominal_voltage_v", "weight"},
                     false);
  LocationProfile p;
  p.name = detail::get_field<std::string>(j, "name", where);
  if (j.contains("sources")) p.sources = int_range(j, "sources", where);
  if (j.contains("feeders_per_source")) p.feeders_per_source = int_range(j, "feeders_per_source", where);
  if (j.contains("trunk_length")) p.trunk_length = int_range(j, "trunk_length", where);
  detail::get_optional(j, "lateral_probability", where, p.lateral_probability);
  if (j.contains("lateral_length")) p.lateral_length = int_range(j, "lateral_length", where);
  detail::get_optional(j, "leaf_ties", where, p.leaf_ties);
  if (j.contains("extra_ties")) p.extra_ties = int_range(j, "extra_ties", where);
  detail::get_optional(j, "max_ties", where, p.max_ties);
  if (j.contains("node_count")) p.node_count = int_range(j, "node_count", where);
  if (j.contains("load_kw")) p.load_kw = real_range(j, "load_kw", where);
  if (j.contains("impedance_ohm")) p.impedance_ohm = real_range(j, "impedance_ohm", where);
  detail::get_optional(j, "cable_ratings_a", where, p.cable_ratings_a);
  if (j.contains("stress")) p.stress = real_range(j, "stress", where);
  detail::get_optional(j, "nominal_voltage_v", where, p.nominal_voltage_v);
  detail::get_optional(j, "weight", where, p.weight);
  return p;
}

json config_json(const GeneratorConfig& c) {
  json locations = json::array();
  for (const auto& p : c.locations) locations.push_back(profile_to_json(p));
  return {{"n_samples", c.n_samples},
          {"locations", std::move(locations)},
          {"balance", c.balance},
          {"test_fraction", c.test_fraction},
          {"validation_fraction", c.validation_fraction},
          {"max_deviation", c.max_deviation},
          {"max_attempts", c.max_attempts},
          {"max_augment_attempts", c.max_augment_attempts},
          {"seed", c.seed}};
}

GeneratorConfig config_from(const json& j) {
  const std::string where = "generator config";
  detail::check_keys(j, where,
                     {"n_samples", "locations", "balance", "test_fraction", "validation_fraction",
                      "max_deviation", "max_attempts", "max_augment_attempts", "seed", "threads"},
                     false);
  GeneratorConfig c;
  detail::get_optional(j, "n_samples", where, c.n_samples);
  if (j.contains("locations")) {
    if (!j["locations"].is_array()) throw ParseError(where + ": 'locations' must be an array");
    c.locations.clear();
    for (std::size_t i = 0; i < j["locations"].size(); ++i) {
      c.locations.push_back(profile_from_json(j["locations"][i], "locations[" + std::to_string(i) + "]"));
    }
  }
  detail::get_optional(j, "balance", where, c.balance);
  detail::get_optional(j, "test_fraction", where, c.test_fraction);
  detail::get_optional(j, "validation_fraction", where, c.validation_fraction);
  detail::get_optional(j, "max_deviation", where, c.max_deviation);
  detail::get_optional(j, "max_attempts", where, c.max_attempts);
  detail::get_optional(j, "max_augment_attempts", where, c.max_augment_attempts);
  detail::get_optional(j, "seed", where, c.seed);
  detail::get_optional(j, "threads", where, c.threads);
  return c;
}

json route_json(const RouteLengthStats& r) {
  return {{"min", r.min}, {"avg", r.avg}, {"max", r.max}, {"routes", r.routes},
          {"suggested_depth", r.suggested_depth()}};
}

// Largest-remainder apportionment of `total` by `weights`; ties go to the
// earlier entry.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rest;
  std::size_t given = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::size_t>(std::floor(exact));
    given += out[i];
    rest.push_back({exact - std::floor(exact), i});
  }
  std::stable_sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < total; ++k, ++given) ++out[rest[k % rest.size()].second];
  return out;
}

std::string sample_id(std::size_t i, bool augmented) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "g%05zu%s", i, augmented ? "a" : "");
  return buf;
}

struct Built {
  LabeledSample base;
  LabeledSample child;
  AugmentationRecord record;
  std::uint64_t base_seed = 0;
  std::uint64_t child_seed = 0;
};

Built build_pair(const GeneratorConfig& c, const LocationProfile& p, std::size_t index, int target,
                 const std::string& id) {
  constexpr int kReplacements = 16;
  for (int r = 0; r < kReplacements; ++r) {
    Built b;
    b.base_seed = derive_seed(c.seed, {static_cast<std::uint64_t>(SeedStream::Generate), index,
                                       static_cast<std::uint64_t>(r)});
    b.base = generate_grid(p, b.base_seed, target, c.max_deviation, c.max_attempts);
    for (int a = 0; a < c.max_augment_attempts; ++a) {
      b.child_seed = derive_seed(c.seed, {static_cast<std::uint64_t>(SeedStream::Augment), index,
                                          static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(a)});
      try {
        auto [child, record] = augment(b.base, b.child_seed, id, {c.max_deviation, 1});
        if (!record.label_verified) continue;
        b.child = std::move(child);
        b.record = std::move(record);
        return b;
      } catch (const AugmentError&) {
        break;  // no candidates: this base sample cannot be augmented
      }
    }
  }
  throw GenerationError("sample " + id + ": no label-preserving augmentation after " +
                        std::to_string(kReplacements) + " base samples");
}

}  // namespace

std::string generator_config_to_json(const GeneratorConfig& config) {
  return config_json(config).dump(2) + "\n";
}

GeneratorConfig generator_config_from_json(const std::string& text) {
  return config_from(detail::parse_json(text));
}

std::string manifest_to_json(const DatasetManifest& m) {
  json samples = json::array();
  for (const auto& s : m.samples) {
    json e = {{"id", s.id},
              {"location", s.location},
              {"label", s.label},
              {"provenance", to_string(s.provenance)},
              {"split", to_string(s.split)},
              {"seed", s.seed},
              {"nodes", s.nodes},
              {"edges", s.edges}};
    if (!s.source.empty()) e["source"] = s.source;
    if (s.action) {
      e["action"] = to_string(*s.action);
      e["affected"] = s.affected;
    }
    samples.push_back(std::move(e));
  }
  json j = {{"version", m.version},
            {"config", config_json(m.config)},
            {"route_length", route_json(m.route_length)},
            {"samples", std::move(samples)}};
  return j.dump(1) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  const json j = detail::parse_json(text);
  detail::check_keys(j, "manifest", {"version", "config", "route_length", "samples"}, true);
  DatasetManifest m;
  m.version = detail::get_field<int>(j, "version", "manifest");
  if (m.version != 1) throw ParseError("manifest: unsupported version " + std::to_string(m.version));
  m.config = config_from(j["config"]);
  const auto& r = j["route_length"];
  detail::check_keys(r, "route_length", {"min", "avg", "max", "routes", "suggested_depth"}, true);
  m.route_length.min = detail::get_field<int>(r, "min", "route_length");
  m.route_length.avg = detail::get_field<double>(r, "avg", "route_length");
  m.route_length.max = detail::get_field<int>(r, "max", "route_length");
  m.route_length.routes = detail::get_field<std::size_t>(r, "routes", "route_length");
  if (!j["samples"].is_array()) throw ParseError("manifest: 'samples' must be an array");
  for (std::size_t i = 0; i < j["samples"].size(); ++i) {
    const auto& e = j["samples"][i];
    const std::string where = "samples[" + std::to_string(i) + "]";
    detail::check_keys(e, where,
                       {"id", "location", "label", "provenance", "split", "seed", "nodes", "edges",
                        "source", "action", "affected"},
                       false);
    SampleEntry s;
    s.id = detail::get_field<std::string>(e, "id", where);
    s.location = detail::get_field<std::string>(e, "location", where);
    s.label = detail::get_field<int>(e, "label", where);
    try {
      s.provenance = provenance_from_string(detail::get_field<std::string>(e, "provenance", where));
      s.split = split_from_string(detail::get_field<std::string>(e, "split", where));
      if (e.contains("action")) {
        s.action = augment_action_from_string(detail::get_field<std::string>(e, "action", where));
      }
    } catch (const std::invalid_argument& ex) {
      throw ParseError(where + ": " + ex.what());
    }
    s.seed = detail::get_field<std::uint64_t>(e, "seed", where);
    s.nodes = detail::get_field<std::size_t>(e, "nodes", where);
    s.edges = detail::get_field<std::size_t>(e, "edges", where);
    detail::get_optional(e, "source", where, s.source);
    detail::get_optional(e, "affected", where, s.affected);
    m.samples.push_back(std::move(s));
  }
  return m;
}

DatasetManifest build_dataset(const GeneratorConfig& config, const std::filesystem::path& dir) {
  if (const auto problems = config.problems(); !problems.empty()) throw ValidationError(problems);

  std::vector<double> weights;
  for (const auto& p : config.locations) weights.push_back(p.weight);
  const auto per_location = apportion(config.n_samples, weights);
  const auto ones_total = static_cast<std::size_t>(std::llround(static_cast<double>(config.n_samples) * config.balance));
  std::vector<double> counts(per_location.begin(), per_location.end());
  auto ones = apportion(ones_total, counts);

  struct Plan {
    std::size_t location;
    int label;
  };
  std::vector<Plan> plan;
  for (std::size_t l = 0; l < config.locations.size(); ++l) {
    ones[l] = std::min(ones[l], per_location[l]);
    std::vector<int> labels(per_location[l], 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(ones[l]), 1);
    Rng rng(derive_seed(config.seed, SeedStream::LabelPlan, l));
    std::shuffle(labels.begin(), labels.end(), rng);
    for (int y : labels) plan.push_back({l, y});
  }

  std::vector<Built> built(plan.size());
  parallel_for(plan.size(), config.threads, [&](std::size_t i) {
    built[i] = build_pair(config, config.locations[plan[i].location], i, plan[i].label, sample_id(i, false));
  });

  // Splits are drawn per location and label from base samples only.
  std::vector<Split> split(plan.size(), Split::Train);
  for (std::size_t l = 0; l < config.locations.size(); ++l) {
    for (int y = 0; y <= 1; ++y) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < plan.size(); ++i) {
        if (plan[i].location == l && plan[i].label == y) members.push_back(i);
      }
      Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(SeedStream::Split), l,
                                        static_cast<std::uint64_t>(y)}));
      std::shuffle(members.begin(), members.end(), rng);
      const auto n = static_cast<double>(members.size());
      const auto n_test = static_cast<std::size_t>(std::llround(n * config.test_fraction));
      const auto n_val = static_cast<std::size_t>(std::llround(n * config.validation_fraction));
      for (std::size_t k = 0; k < members.size(); ++k) {
        split[members[k]] = k < n_test ? Split::Test : k < n_test + n_val ? Split::Validation : Split::Train;
      }
    }
  }

  DatasetManifest m;
  m.config = config;
  std::vector<Grid> grids;
  std::string labels_csv = "id,label,provenance\n";
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Built& b = built[i];
    const std::string& location = config.locations[plan[i].location].name;

    SampleEntry base;
    base.id = sample_id(i, false);
    base.location = location;
    base.label = b.base.label;
    base.provenance = Provenance::Generated;
    base.split = split[i];
    base.seed = b.base_seed;
    base.nodes = b.base.grid.node_count();
    base.edges = b.base.grid.edge_count();

    SampleEntry child;
    child.id = sample_id(i, true);
    child.location = location;
    child.label = b.child.label;
    child.provenance = Provenance::Augmented;
    child.split = split[i] == Split::Test ? Split::Unused : split[i];
    child.seed = b.child_seed;
    child.source = base.id;
    child.action = b.record.action;
    child.affected = b.record.affected;
    child.nodes = b.child.grid.node_count();
    child.edges = b.child.grid.edge_count();

    for (const auto* pair : {&base, &child}) {
      const LabeledSample& s = pair == &base ? b.base : b.child;
      write_grid(dir / "grids" / (pair->id + ".json"), s.grid);
      write_features(dir / "features" / (pair->id + ".json"), s.features);
      labels_csv += pair->id + "," + std::to_string(s.label) + "," + to_string(s.provenance) + "\n";
      grids.push_back(s.grid);
    }
    m.samples.push_back(std::move(base));
    m.samples.push_back(std::move(child));
  }
  m.route_length = route_length_stats(grids);
  write_text_file(dir / "labels.csv", labels_csv);
  write_text_file(dir / "manifest.json", manifest_to_json(m));
  return m;
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    if (manifest.samples[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::string> Dataset::locations() const {
  std::vector<std::string> out;
  for (const auto& s : manifest.samples) {
    if (std::find(out.begin(), out.end(), s.location) == out.end()) out.push_back(s.location);
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.manifest = manifest_from_json(read_text_file(dir / "manifest.json"));
  d.samples.resize(d.manifest.samples.size());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& e = d.manifest.samples[i];
    auto& s = d.samples[i];
    s.grid = read_grid(dir / "grids" / (e.id + ".json"));
    s.features = read_features(dir / "features" / (e.id + ".json"));
    s.label = e.label;
    s.provenance = e.provenance;
    auto report = validate_features(s.grid, s.features);
    if (!report.ok()) {
      for (auto& issue : report.issues) issue = e.id + ": " + issue;
      throw ValidationError(report.issues);
    }
  }
  return d;
}

std::vector<LocationSummary> summarize(const Dataset& dataset) {
  auto locations = dataset.locations();
  locations.push_back("all");
  std::vector<LocationSummary> out;
  for (const auto& name : locations) {
    LocationSummary row;
    row.location = name;
    std::vector<Grid> grids;
    std::size_t positives = 0;
    double nodes = 0.0;
    double edges = 0.0;
    row.min_nodes = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
      const auto& e = dataset.manifest.samples[i];
      if (name != "all" && e.location != name) continue;
      const auto& g = dataset.samples[i].grid;
      ++row.samples;
      if (e.provenance == Provenance::Augmented) ++row.augmented;
      positives += static_cast<std::size_t>(e.label == 1);
      row.min_nodes = std::min(row.min_nodes, g.node_count());
      row.max_nodes = std::max(row.max_nodes, g.node_count());
      nodes += static_cast<double>(g.node_count());
      edges += static_cast<double>(g.edge_count());
      grids.push_back(g);
    }
    if (row.samples == 0) continue;
    const auto n = static_cast<double>(row.samples);
    row.mean_nodes = nodes / n;
    row.mean_edges = edges / n;
    row.n1_fraction = static_cast<double>(positives) / n;
    row.route_length = route_length_stats(grids);
    out.push_back(std::move(row));
  }
  return out;
}

std::string summary_to_csv(const std::vector<LocationSummary>& rows) {
  std::ostringstream os;
  os << "location,samples,augmented,min_nodes,max_nodes,mean_nodes,mean_edges,"
        "route_min,route_avg,route_max,n1_fraction\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%zu,%.2f,%.2f,%d,%.2f,%d,%.4f\n", r.location.c_str(),
                  r.samples, r.augmented, r.min_nodes, r.max_nodes, r.mean_nodes, r.mean_edges,
                  r.route_length.min, r.route_length.avg, r.route_length.max, r.n1_fraction);
    os << buf;
  }
  return os.str();
}

}  // namespace gridgin
