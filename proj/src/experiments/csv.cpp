#include "cyclic/experiments/csv.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cyclic/core/types.hpp"

namespace cyclic {

namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", value);
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {
  require(!columns_.empty(), "CSV table needs at least one column");
}

CsvTable& CsvTable::row() {
  if (!rows_.empty())
    require(rows_.back().size() == columns_.size(), "CSV row has " + std::to_string(rows_.back().size()) +
                                                        " cells, expected " + std::to_string(columns_.size()));
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::add(const std::string& value) {
  require(!rows_.empty(), "CSV: call row() before add()");
  require(rows_.back().size() < columns_.size(), "CSV row has more cells than columns");
  rows_.back().push_back(quote(value));
  return *this;
}

CsvTable& CsvTable::add(double value) { return add(format_number(value)); }
CsvTable& CsvTable::add(int value) { return add(std::to_string(value)); }
CsvTable& CsvTable::add(long long value) { return add(std::to_string(value)); }
CsvTable& CsvTable::add(unsigned long long value) { return add(std::to_string(value)); }
CsvTable& CsvTable::add(bool value) { return add(std::string(value ? "1" : "0")); }

std::string CsvTable::to_string(const nlohmann::json& header) const {
  std::ostringstream os;
  std::istringstream lines(header.dump(2));
  for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
  for (std::size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << quote(columns_[i]);
  os << '\n';
  for (const auto& r : rows_) {
    require(r.size() == columns_.size(), "CSV row has " + std::to_string(r.size()) + " cells, expected " +
                                             std::to_string(columns_.size()));
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
  return os.str();
}

void CsvTable::write(const std::string& path, const nlohmann::json& header) const {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write '" + path + "'");
  out << to_string(header);
  require(static_cast<bool>(out), "failed writing '" + path + "'");
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cell += '"';
          ++i;
        } else if (c == '"') {
          quoted = false;
        } else {
          cell += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        cells.push_back(cell);
        cell.clear();
      } else {
        cell += c;
      }
    }
    cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace cyclic
