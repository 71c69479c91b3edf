#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ceem {

/// Numeric table with a header row. Values are written with 17 significant
/// digits so a write/read cycle is exact.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  bool has_column(const std::string& name) const;
  /// Index of `name`; throws IoError naming the column and `source`.
  size_t column(const std::string& name, const std::filesystem::path& source = {}) const;
};

std::string format_double(double v);

void write_csv(const CsvTable& table, const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace ceem
