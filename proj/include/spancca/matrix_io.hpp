#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spancca/errors.hpp"

namespace spancca {

/// Samples-by-variables matrix with optional column names. Immutable by
/// convention once loaded; every entry is finite.
struct DataMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> col_names;  // empty, or one name per column

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

/// Cross-covariance X'Y (variables of X by variables of Y).
using CrossCov = Eigen::MatrixXd;

enum class MatrixFormat { csv, matrix_market };

enum class HeaderMode { autodetect, with_header, without_header };

namespace io_detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

inline bool parse_double(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  const char* begin = t.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + t.size();
}

inline std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline DataMatrix load_csv(const std::filesystem::path& path, HeaderMode header) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path.string(), 0);
  std::vector<std::vector<double>> rows;
  std::vector<std::string> names;
  std::string line;
  std::int64_t lineno = 0;
  Eigen::Index width = -1;
  bool first_content_row = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) {
      if (in.peek() == EOF) break;  // trailing newline
      throw ParseError("empty row in " + path.string(), lineno);
    }
    auto cells = split_csv_line(line);
    std::vector<double> parsed(cells.size());
    bool all_numeric = true;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v = 0.0;
      if (!parse_double(cells[j], v) || !std::isfinite(v)) {
        all_numeric = false;
        break;
      }
      parsed[j] = v;
    }
    if (first_content_row) {
      first_content_row = false;
      const bool take_header = header == HeaderMode::with_header ||
                               (header == HeaderMode::autodetect && !all_numeric);
      if (take_header) {
        names.reserve(cells.size());
        for (auto& c : cells) names.push_back(trim(c));
        width = static_cast<Eigen::Index>(cells.size());
        continue;
      }
    }
    if (!all_numeric) {
      throw ParseError("non-numeric cell in " + path.string(), lineno);
    }
    if (width < 0) {
      width = static_cast<Eigen::Index>(cells.size());
    } else if (static_cast<Eigen::Index>(cells.size()) != width) {
      throw ParseError("ragged row: expected " + std::to_string(width) + " cells, got " +
                           std::to_string(cells.size()),
                       lineno);
    }
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw ParseError("no data rows in " + path.string(), lineno);
  DataMatrix m;
  m.values.resize(static_cast<Eigen::Index>(rows.size()), width);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  m.col_names = std::move(names);
  return m;
}

inline DataMatrix load_matrix_market(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path.string(), 0);
  std::string line;
  std::int64_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty file: " + path.string(), 0);
  ++lineno;
  std::stringstream banner(to_lower(line));
  std::string tag, object, layout, field, symmetry;
  banner >> tag >> object >> layout >> field >> symmetry;
  if (tag != "%%matrixmarket" || object != "matrix") {
    throw ParseError("not a MatrixMarket file: " + path.string(), lineno);
  }
  if (layout != "array" && layout != "coordinate") {
    throw UnsupportedFormat("unsupported MatrixMarket layout '" + layout + "'");
  }
  if (field != "real") {
    throw UnsupportedFormat("unsupported MatrixMarket field '" + field + "'");
  }
  if (symmetry != "general") {
    throw UnsupportedFormat("unsupported MatrixMarket symmetry '" + symmetry + "'");
  }
  // comments
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line[0] == '%') continue;
    if (io_detail::trim(line).empty()) continue;
    break;
  }
  std::stringstream dims(line);
  std::int64_t nrows = 0, ncols = 0, nnz = 0;
  if (!(dims >> nrows >> ncols)) {
    throw ParseError("bad size line in " + path.string(), lineno);
  }
  if (nrows < 1 || ncols < 1) {
    throw ParseError("non-positive dimensions in " + path.string(), lineno);
  }
  DataMatrix m;
  if (layout == "coordinate") {
    if (!(dims >> nnz) || nnz < 0) {
      throw ParseError("bad entry count in " + path.string(), lineno);
    }
    m.values = Eigen::MatrixXd::Zero(nrows, ncols);
    for (std::int64_t k = 0; k < nnz; ++k) {
      std::int64_t i = 0, j = 0;
      double v = 0.0;
      ++lineno;
      if (!(in >> i >> j >> v)) {
        throw ParseError("truncated coordinate data in " + path.string(), lineno);
      }
      if (i < 1 || i > nrows || j < 1 || j > ncols) {
        throw ParseError("coordinate out of range in " + path.string(), lineno);
      }
      if (!std::isfinite(v)) {
        throw ParseError("non-finite entry in " + path.string(), lineno);
      }
      m.values(i - 1, j - 1) = v;
    }
  } else {
    m.values.resize(nrows, ncols);
    // array layout lists entries column by column
    for (Eigen::Index j = 0; j < ncols; ++j) {
      for (Eigen::Index i = 0; i < nrows; ++i) {
        double v = 0.0;
        ++lineno;
        if (!(in >> v)) {
          throw ParseError("truncated array data in " + path.string(), lineno);
        }
        if (!std::isfinite(v)) {
          throw ParseError("non-finite entry in " + path.string(), lineno);
        }
        m.values(i, j) = v;
      }
    }
  }
  return m;
}

inline void format_value(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace io_detail

inline DataMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format,
                              HeaderMode header = HeaderMode::autodetect) {
  switch (format) {
    case MatrixFormat::csv:
      return io_detail::load_csv(path, header);
    case MatrixFormat::matrix_market:
      return io_detail::load_matrix_market(path);
  }
  throw UnsupportedFormat("unknown matrix format");
}

inline void save_matrix(const std::filesystem::path& path, MatrixFormat format,
                        const DataMatrix& m) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open file for writing: " + path.string(), 0);
  std::string buf;
  if (format == MatrixFormat::csv) {
    if (!m.col_names.empty()) {
      for (std::size_t j = 0; j < m.col_names.size(); ++j) {
        if (j) buf += ',';
        buf += m.col_names[j];
      }
      buf += '\n';
    }
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j) buf += ',';
        io_detail::format_value(buf, m.values(i, j));
      }
      buf += '\n';
    }
  } else {
    buf += "%%MatrixMarket matrix array real general\n";
    buf += std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        io_detail::format_value(buf, m.values(i, j));
        buf += '\n';
      }
    }
  }
  out << buf;
}

/// Center each column to mean zero and scale to unit sample standard
/// deviation (divisor k-1). A zero-variance column is an error: dropping it
/// silently would shift the indices every downstream support refers to.
inline DataMatrix standardize(const DataMatrix& m) {
  const Eigen::Index k = m.rows();
  if (k < 2) throw ShapeError("standardize requires at least 2 rows");
  DataMatrix out;
  out.col_names = m.col_names;
  out.values.resize(k, m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double mean = m.values.col(j).mean();
    Eigen::VectorXd centered = m.values.col(j).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(k - 1);
    if (var == 0.0) throw DegenerateColumn(j);
    out.values.col(j) = centered / std::sqrt(var);
  }
  return out;
}

/// Empirical cross-covariance X'Y of two standardized views on common samples.
inline CrossCov cross_covariance(const DataMatrix& x, const DataMatrix& y) {
  if (x.rows() != y.rows()) {
    throw ShapeError("sample counts differ: " + std::to_string(x.rows()) + " vs " +
                     std::to_string(y.rows()));
  }
  return x.values.transpose() * y.values;
}

}  // namespace spancca
