#pragma once

#include <filesystem>
#include <string>

#include "gridgin/grid.hpp"

namespace gridgin {

// Grid files: {"nodes":[{"id","kind","load_kw","nominal_voltage_v"}],
//              "edges":[{"id","u","v","impedance_ohm","nominal_current_a"}],
//              "normally_open":[edge ids]}
// Field names are exact; unknown fields are rejected with ParseError.

Grid grid_from_json(const std::string& text);
std::string grid_to_json(const Grid& grid);

Grid read_grid(const std::filesystem::path& path);
void write_grid(const std::filesystem::path& path, const Grid& grid);

// Feature files: {"node_columns":[...],"edge_columns":[...],
//                 "node_features":[[...]],"edge_features":[[...]]}
FeatureSet features_from_json(const std::string& text);
std::string features_to_json(const FeatureSet& fs);

FeatureSet read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const FeatureSet& fs);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gridgin
