#pragma once

#include <string>
#include <vector>

namespace fgan::io {

// Minimal CSV with a header row; all payload cells are numeric and written
// with full double precision.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int col(const std::string& name) const;
};

void write_csv(const std::string& path, const Table& t);
Table read_csv(const std::string& path);

}  // namespace fgan::io
