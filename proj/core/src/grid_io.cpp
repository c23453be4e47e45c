#include "gridgin/grid_io.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "detail/json_util.hpp"
#include "gridgin/errors.hpp"

namespace gridgin {

using nlohmann::json;

namespace {

using detail::get_field;

json parse(const std::string& text) { return detail::parse_json(text); }

void require_object(const json& j, const std::string& where,
                    std::initializer_list<const char*> fields) {
  detail::check_keys(j, where, fields, true);
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (double x : m.row(r)) row.push_back(x);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, std::size_t cols, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of rows");
  Matrix m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != cols) {
      throw ParseError(where + ": row " + std::to_string(r) + " must have " +
                       std::to_string(cols) + " columns");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw ParseError(where + ": non-numeric entry");
      m(r, c) = row[c].get<double>();
    }
  }
  return m;
}

}  // namespace

Grid grid_from_json(const std::string& text) {
  const json j = parse(text);
  require_object(j, "grid", {"nodes", "edges", "normally_open"});
  if (!j["nodes"].is_array() || !j["edges"].is_array() || !j["normally_open"].is_array()) {
    throw ParseError("grid: nodes, edges and normally_open must be arrays");
  }
  std::vector<Station> nodes;
  for (std::size_t i = 0; i < j["nodes"].size(); ++i) {
    const auto& n = j["nodes"][i];
    const std::string where = "nodes[" + std::to_string(i) + "]";
    require_object(n, where, {"id", "kind", "load_kw", "nominal_voltage_v"});
    Station s;
    s.id = get_field<NodeId>(n, "id", where);
    try {
      s.kind = station_kind_from_string(get_field<std::string>(n, "kind", where));
    } catch (const std::invalid_argument& e) {
      throw ParseError(where + ": " + e.what());
    }
    s.load_kw = get_field<double>(n, "load_kw", where);
    s.nominal_voltage_v = get_field<double>(n, "nominal_voltage_v", where);
    nodes.push_back(s);
  }
  std::vector<Cable> edges;
  for (std::size_t i = 0; i < j["edges"].size(); ++i) {
    const auto& e = j["edges"][i];
    const std::string where = "edges[" + std::to_string(i) + "]";
    require_object(e, where, {"id", "u", "v", "impedance_ohm", "nominal_current_a"});
    Cable c;
    c.id = get_field<EdgeId>(e, "id", where);
    c.u = get_field<NodeId>(e, "u", where);
    c.v = get_field<NodeId>(e, "v", where);
    c.impedance_ohm = get_field<double>(e, "impedance_ohm", where);
    c.nominal_current_a = get_field<double>(e, "nominal_current_a", where);
    edges.push_back(c);
  }
  std::vector<EdgeId> open;
  for (const auto& e : j["normally_open"]) {
    if (!e.is_number_integer()) throw ParseError("normally_open: expected integer edge ids");
    open.push_back(e.get<EdgeId>());
  }
  return Grid(std::move(nodes), std::move(edges), std::move(open));
}

std::string grid_to_json(const Grid& grid) {
  json j;
  j["nodes"] = json::array();
  for (const auto& s : grid.nodes()) {
    j["nodes"].push_back({{"id", s.id},
                          {"kind", to_string(s.kind)},
                          {"load_kw", s.load_kw},
                          {"nominal_voltage_v", s.nominal_voltage_v}});
  }
  j["edges"] = json::array();
  for (const auto& c : grid.edges()) {
    j["edges"].push_back({{"id", c.id},
                          {"u", c.u},
                          {"v", c.v},
                          {"impedance_ohm", c.impedance_ohm},
                          {"nominal_current_a", c.nominal_current_a}});
  }
  j["normally_open"] = grid.normally_open();
  return j.dump() + "\n";
}

FeatureSet features_from_json(const std::string& text) {
  const json j = parse(text);
  require_object(j, "features", {"node_columns", "edge_columns", "node_features", "edge_features"});
  FeatureSet fs;
  fs.node_features = matrix_from_json(j["node_features"], kNodeFeatureCount, "node_features");
  fs.edge_features = matrix_from_json(j["edge_features"], kEdgeFeatureCount, "edge_features");
  return fs;
}

std::string features_to_json(const FeatureSet& fs) {
  json j;
  j["node_columns"] = json::array();
  for (std::size_t c = 0; c < kNodeFeatureCount; ++c) j["node_columns"].push_back(node_feature_name(c));
  j["edge_columns"] = json::array();
  for (std::size_t c = 0; c < kEdgeFeatureCount; ++c) j["edge_columns"].push_back(edge_feature_name(c));
  j["node_features"] = matrix_to_json(fs.node_features);
  j["edge_features"] = matrix_to_json(fs.edge_features);
  return j.dump() + "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Grid read_grid(const std::filesystem::path& path) { return grid_from_json(read_text_file(path)); }

void write_grid(const std::filesystem::path& path, const Grid& grid) {
  write_text_file(path, grid_to_json(grid));
}

FeatureSet read_features(const std::filesystem::path& path) {
  return features_from_json(read_text_file(path));
}

void write_features(const std::filesystem::path& path, const FeatureSet& fs) {
  write_text_file(path, features_to_json(fs));
}

}  // namespace gridgin
