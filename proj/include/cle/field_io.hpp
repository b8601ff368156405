#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cle/grid.hpp"

namespace cle {

/// A table of named columns sampled on a grid. This is the shared on-disk
/// format for every field the toolkit writes: `<stem>.csv` holds a header row
/// (axis names, then column names) and one grid point per row in row-major
/// order; `<stem>.grid.json` is the sidecar recording the GridSpec.
struct FieldTable {
  GridSpec grid;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
};

/// Axis column names used in the header: q1, q2, ... (or p1, p2, ... for
/// momentum grids).
std::vector<std::string> axis_names(std::size_t dimension, const std::string& prefix = "q");

/// Writes `<stem>.csv` and `<stem>.grid.json`. Values are printed with 17
/// significant digits so a read gives back the same doubles. Returns the two
/// paths written.
std::vector<std::filesystem::path> write_field(const std::filesystem::path& stem,
                                               const FieldTable& table,
                                               const std::string& axis_prefix = "q");

/// Reads a field written by write_field. Throws ConfigError on malformed input.
FieldTable read_field(const std::filesystem::path& stem);

FieldTable to_table(const ScalarFieldGrid& f, const std::string& name);
FieldTable to_table(const VectorFieldGrid& f, const std::string& prefix);

/// Writes `content` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// "%.17g" formatting used by every text writer.
std::string format_double(double v);

}  // namespace cle
