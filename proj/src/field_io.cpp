#include "cle/field_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cle/errors.hpp"

namespace cle {

using nlohmann::json;

std::vector<std::string> axis_names(std::size_t dimension, const std::string& prefix) {
  std::vector<std::string> names;
  for (std::size_t a = 0; a < dimension; ++a) names.push_back(prefix + std::to_string(a + 1));
  return names;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw ConfigError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::filesystem::path> write_field(const std::filesystem::path& stem,
                                               const FieldTable& table,
                                               const std::string& axis_prefix) {
  if (table.names.size() != table.columns.size()) {
    throw ConfigError("field table: names and columns differ in length");
  }
  for (const auto& c : table.columns) {
    if (c.size() != table.grid.size()) throw ConfigError("field table: column size mismatch");
  }
  const std::size_t dim = table.grid.dimension();
  const auto axes = axis_names(dim, axis_prefix);

  std::string csv;
  csv.reserve(table.grid.size() * (dim + table.columns.size()) * 24);
  for (std::size_t a = 0; a < dim; ++a) csv += (a ? "," : "") + axes[a];
  for (const auto& n : table.names) csv += "," + n;
  csv += '\n';
  double x[3];
  for (std::size_t p = 0; p < table.grid.size(); ++p) {
    table.grid.point(p, x);
    for (std::size_t a = 0; a < dim; ++a) {
      if (a) csv += ',';
      csv += format_double(x[a]);
    }
    for (const auto& c : table.columns) {
      csv += ',';
      csv += format_double(c[p]);
    }
    csv += '\n';
  }

  json side;
  side["dimension"] = dim;
  side["centering"] = to_string(table.grid.centering());
  side["axis_prefix"] = axis_prefix;
  json axes_json = json::array();
  for (const auto& ax : table.grid.axes()) {
    axes_json.push_back({{"lower", ax.lower}, {"upper", ax.upper}, {"count", ax.count}});
  }
  side["axes"] = axes_json;
  side["columns"] = table.names;

  auto csv_path = stem;
  csv_path += ".csv";
  auto side_path = stem;
  side_path += ".grid.json";
  write_file_atomic(csv_path, csv);
  write_file_atomic(side_path, side.dump(2) + "\n");
  return {csv_path, side_path};
}

FieldTable read_field(const std::filesystem::path& stem) {
  auto csv_path = stem;
  csv_path += ".csv";
  auto side_path = stem;
  side_path += ".grid.json";
  std::ifstream side_in(side_path);
  if (!side_in) throw ConfigError("missing grid sidecar " + side_path.string());
  json side;
  try {
    side = json::parse(side_in);
  } catch (const json::exception& e) {
    throw ConfigError("bad grid sidecar " + side_path.string() + ": " + e.what());
  }

  FieldTable t;
  std::vector<Axis> axes;
  for (const auto& a : side.at("axes")) {
    axes.push_back({a.at("lower").get<double>(), a.at("upper").get<double>(),
                    a.at("count").get<std::size_t>()});
  }
  t.grid = GridSpec(axes, centering_from_string(side.at("centering").get<std::string>()), 1);
  t.names = side.at("columns").get<std::vector<std::string>>();
  t.columns.assign(t.names.size(), std::vector<double>(t.grid.size()));

  std::ifstream in(csv_path);
  if (!in) throw ConfigError("missing field file " + csv_path.string());
  std::string line;
  std::getline(in, line);
  const std::size_t dim = t.grid.dimension();
  const std::size_t ncol = dim + t.names.size();
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row >= t.grid.size()) throw ConfigError("field file has more rows than grid points");
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= ncol) throw ConfigError("field file row has too many columns");
      if (col >= dim) t.columns[col - dim][row] = std::stod(cell);
      ++col;
    }
    if (col != ncol) throw ConfigError("field file row has too few columns");
    ++row;
  }
  if (row != t.grid.size()) throw ConfigError("field file has fewer rows than grid points");
  return t;
}

FieldTable to_table(const ScalarFieldGrid& f, const std::string& name) {
  return {f.grid, {name}, {f.values}};
}

FieldTable to_table(const VectorFieldGrid& f, const std::string& prefix) {
  FieldTable t{f.grid, {}, f.components};
  for (std::size_t c = 0; c < f.dimension(); ++c) t.names.push_back(prefix + std::to_string(c + 1));
  return t;
}

}  // namespace cle
