#pragma once

#include <string>
#include <vector>

namespace sep {

// Minimal CSV support: comma separated, first row is the header, empty cell
// means missing. Values are written unquoted; ids and category labels in
// this project never contain commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

std::vector<std::string> split_csv_line(const std::string& line);

// Shortest round-trip formatting for doubles so artifacts are byte-stable.
std::string format_double(double v);

}  // namespace sep
