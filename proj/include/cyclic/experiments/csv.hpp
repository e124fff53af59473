#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cyclic {

/// Comma-separated table preceded by a '#' comment block holding the resolved
/// config. Numbers use a fixed format, so identical inputs give identical bytes.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);

  CsvTable& row();
  CsvTable& add(const std::string& value);
  CsvTable& add(const char* value) { return add(std::string(value)); }
  CsvTable& add(double value);
  CsvTable& add(int value);
  CsvTable& add(long long value);
  CsvTable& add(unsigned long long value);
  CsvTable& add(unsigned long value) { return add(static_cast<unsigned long long>(value)); }
  CsvTable& add(long value) { return add(static_cast<long long>(value)); }
  CsvTable& add(bool value);

  std::size_t num_rows() const { return rows_.size(); }
  const std::vector<std::string>& columns() const { return columns_; }

  std::string to_string(const nlohmann::json& header) const;
  void write(const std::string& path, const nlohmann::json& header) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// %.10g, with "nan"/"inf" spelled out.
std::string format_number(double value);

/// Rows of a CSV file, skipping '#' comment lines; the first row is the header.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace cyclic
