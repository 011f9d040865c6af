#pragma once

#include <string>
#include <vector>

namespace soh::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

/// Reads a whole CSV file (comma separator, first row is the header).
/// Throws IoError if the file cannot be opened or is empty.
Table read(const std::string& path);

/// Shortest round-trip decimal representation of a double.
std::string format(double v);

double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

std::string join(const std::vector<std::string>& fields);

}  // namespace soh::csv
