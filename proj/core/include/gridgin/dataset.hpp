#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gridgin/augment.hpp"
#include "gridgin/grid.hpp"
#include "gridgin/synth.hpp"

namespace gridgin {

enum class Split { Train, Validation, Test, Unused };

const char* to_string(Split s) noexcept;
Split split_from_string(const std::string& s);

struct SampleEntry {
  std::string id;
  std::string location;
  int label = 0;
  Provenance provenance = Provenance::Generated;
  Split split = Split::Train;
  std::uint64_t seed = 0;  // generation or augmentation seed
  std::string source;      // augmented samples: id of the base sample
  std::optional<AugmentAction> action;
  std::vector<NodeId> affected;
  std::size_t nodes = 0;
  std::size_t edges = 0;

  friend bool operator==(const SampleEntry&, const SampleEntry&) = default;
};

struct DatasetManifest {
  int version = 1;
  GeneratorConfig config;
  RouteLengthStats route_length;
  std::vector<SampleEntry> samples;

  const SampleEntry& find(const std::string& id) const;
};

/// Generator config as JSON. Missing keys keep their defaults; unknown keys
/// raise ParseError.
std::string generator_config_to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const std::string& text);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

/// Generates `config.n_samples` balanced base samples, augments each once
/// (redrawing the base sample when no label-preserving augmentation is found)
/// and writes manifest.json, labels.csv, grids/ and features/ under `dir`.
/// Test samples are drawn from base samples only; their augmented children
/// are marked unused.
DatasetManifest build_dataset(const GeneratorConfig& config, const std::filesystem::path& dir);

struct Dataset {
  DatasetManifest manifest;
  std::vector<LabeledSample> samples;  // same order as manifest.samples

  std::vector<std::size_t> indices(Split split) const;
  std::vector<std::string> locations() const;
};

Dataset load_dataset(const std::filesystem::path& dir);

/// One row per location plus an "all" row: sample counts, size ranges, route
/// lengths and n-1 share.
struct LocationSummary {
  std::string location;
  std::size_t samples = 0;
  std::size_t augmented = 0;
  std::size_t min_nodes = 0;
  std::size_t max_nodes = 0;
  double mean_nodes = 0.0;
  double mean_edges = 0.0;
  RouteLengthStats route_length;
  double n1_fraction = 0.0;
};

std::vector<LocationSummary> summarize(const Dataset& dataset);
std::string summary_to_csv(const std::vector<LocationSummary>& rows);

}  // namespace gridgin
