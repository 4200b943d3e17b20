#pragma once

// Plain CSV tables: a header row naming each column with its unit, then
// numeric rows. Numbers are printed with a fixed format so repeated runs
// produce identical bytes.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "darkfringe/errors.hpp"
#include "darkfringe/fit.hpp"

namespace darkfringe::csv {

inline std::string number(double v) {
  if (v == 0.0) return "0";  // also folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  void add(std::string name, std::vector<double> values) {
    if (!columns.empty() && values.size() != columns.front().size())
      throw std::invalid_argument("csv::Table: column " + name + " has a different length");
    header.push_back(std::move(name));
    columns.push_back(std::move(values));
  }
  [[nodiscard]] std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
};

inline void write(std::ostream& os, const Table& t) {
  for (std::size_t c = 0; c < t.header.size(); ++c) os << (c ? "," : "") << t.header[c];
  os << '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << number(t.columns[c][r]);
    os << '\n';
  }
}

inline void write(const std::string& path, const Table& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  write(os, t);
  if (!os) throw std::runtime_error("write failed for " + path);
}

/// One measured histogram row.
struct HistogramRow {
  int bunch_index;
  double t_ns;
  double counts;
};

/// Reads bunch_index,t_ns,counts rows. The header is required; extra
/// columns are an error so that misaligned files are caught.
inline std::vector<HistogramRow> read_histogram(std::istream& is, const std::string& name = "histogram") {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "bunch_index,t_ns,counts") throw ConfigError(name + ": expected header bunch_index,t_ns,counts");
  std::vector<HistogramRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 3) throw ConfigError(name + ":" + std::to_string(lineno) + ": expected 3 fields");
    try {
      std::size_t used = 0;
      HistogramRow r{};
      r.bunch_index = std::stoi(f[0], &used);
      if (used != f[0].size()) throw std::invalid_argument("trailing characters");
      r.t_ns = std::stod(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing characters");
      r.counts = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("trailing characters");
      if (!(r.counts >= 0.0)) throw std::invalid_argument("negative counts");
      rows.push_back(r);
    } catch (const std::exception& e) {
      throw ConfigError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

inline std::vector<HistogramRow> read_histogram(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  return read_histogram(is, path);
}

/// Rows of one bunch as a binned spectrum; bin width from the spacing.
inline BinnedSpectrum select_bunch(const std::vector<HistogramRow>& rows, int bunch_index) {
  BinnedSpectrum s;
  for (const auto& r : rows)
    if (r.bunch_index == bunch_index) {
      s.t_ns.push_back(r.t_ns);
      s.counts.push_back(r.counts);
    }
  if (s.t_ns.size() < 2) throw ConfigError("histogram has fewer than two bins for bunch " + std::to_string(bunch_index));
  s.bin_width_ns = s.t_ns[1] - s.t_ns[0];
  for (std::size_t i = 1; i < s.t_ns.size(); ++i)
    if (std::abs(s.t_ns[i] - s.t_ns[i - 1] - s.bin_width_ns) > 1e-9 * std::max(1.0, s.bin_width_ns))
      throw ConfigError("histogram bins of bunch " + std::to_string(bunch_index) + " are not uniform");
  if (!(s.bin_width_ns > 0.0)) throw ConfigError("histogram bin times must increase");
  return s;
}

}  // namespace darkfringe::csv
