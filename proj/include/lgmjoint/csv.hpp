#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgmjoint {

/// Column-oriented data table read from CSV. Cells are kept both as raw
/// text (used for subject ids) and as parsed doubles, with NaN marking a
/// missing value ("." or empty cell).
class Table {
public:
  Table() = default;

  static Table from_csv_text(const std::string& text) {
    Table t;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty input");
    strip_cr(line);
    t.columns_ = split(line);
    t.raw_.resize(t.columns_.size());
    t.values_.resize(t.columns_.size());
    while (std::getline(in, line)) {
      strip_cr(line);
      if (line.empty()) continue;
      auto cells = split(line);
      if (cells.size() != t.columns_.size())
        throw std::runtime_error("csv: row with " + std::to_string(cells.size()) +
                                 " cells, expected " + std::to_string(t.columns_.size()));
      for (std::size_t c = 0; c < cells.size(); ++c) {
        t.raw_[c].push_back(cells[c]);
        t.values_[c].push_back(parse_cell(cells[c]));
      }
      ++t.n_rows_;
    }
    return t;
  }

  static Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open data file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_csv_text(ss.str());
  }

  void add_column(const std::string& name, std::vector<double> vals) {
    if (!columns_.empty() && vals.size() != static_cast<std::size_t>(n_rows_))
      throw std::runtime_error("csv: column length mismatch");
    n_rows_ = static_cast<int>(vals.size());
    columns_.push_back(name);
    std::vector<std::string> raw(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i)
      raw[i] = std::isnan(vals[i]) ? "." : format_double(vals[i]);
    raw_.push_back(std::move(raw));
    values_.push_back(std::move(vals));
  }

  void add_string_column(const std::string& name, std::vector<std::string> vals) {
    if (!columns_.empty() && vals.size() != static_cast<std::size_t>(n_rows_))
      throw std::runtime_error("csv: column length mismatch");
    n_rows_ = static_cast<int>(vals.size());
    columns_.push_back(name);
    std::vector<double> parsed(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) parsed[i] = parse_cell(vals[i]);
    raw_.push_back(std::move(vals));
    values_.push_back(std::move(parsed));
  }

  int n_rows() const { return n_rows_; }
  const std::vector<std::string>& columns() const { return columns_; }

  bool has_column(const std::string& name) const {
    for (const auto& c : columns_)
      if (c == name) return true;
    return false;
  }

  int col_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i] == name) return static_cast<int>(i);
    throw std::runtime_error("column not found: " + name);
  }

  double value(int row, int col) const { return values_[col][row]; }
  double value(int row, const std::string& name) const { return values_[col_index(name)][row]; }
  const std::string& raw(int row, int col) const { return raw_[col][row]; }
  const std::string& raw(int row, const std::string& name) const { return raw_[col_index(name)][row]; }
  const std::vector<double>& column_values(const std::string& name) const { return values_[col_index(name)]; }

  bool is_missing(int row, int col) const { return std::isnan(values_[col][row]); }

  std::string to_csv_text() const {
    std::ostringstream out;
    for (std::size_t c = 0; c < columns_.size(); ++c)
      out << (c ? "," : "") << columns_[c];
    out << "\n";
    for (int r = 0; r < n_rows_; ++r) {
      for (std::size_t c = 0; c < columns_.size(); ++c)
        out << (c ? "," : "") << raw_[c][r];
      out << "\n";
    }
    return out.str();
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << to_csv_text();
  }

  static std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
  }

private:
  static void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  }

  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') {
        quoted = !quoted;
      } else if (ch == ',' && !quoted) {
        out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(ch);
      }
    }
    out.push_back(cur);
    return out;
  }

  static double parse_cell(const std::string& s) {
    if (s.empty() || s == "." || s == "NA" || s == "NaN" || s == "nan")
      return std::numeric_limits<double>::quiet_NaN();
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
      if (pos != s.size()) return std::numeric_limits<double>::quiet_NaN();
      return v;
    } catch (const std::exception&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }

  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> raw_;   // [col][row]
  std::vector<std::vector<double>> values_;     // [col][row]
  int n_rows_ = 0;
};

}  // namespace lgmjoint
