#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pidkl/errors.hpp"
#include "pidkl/linalg.hpp"

namespace pidkl {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const Interval&) const = default;
};

/// Raw (physical-unit) samples plus the domain they live in.
struct Dataset {
  Matrix<double> x;
  std::vector<double> y;
  std::vector<Interval> bounds;

  [[nodiscard]] std::size_t size() const { return y.size(); }
  [[nodiscard]] std::size_t dim() const { return x.cols(); }

  void validate() const {
    if (y.empty()) throw InsufficientData("dataset: no samples");
    require_dims(x.rows(), y.size(), "dataset rows");
    if (!bounds.empty()) require_dims(bounds.size(), x.cols(), "dataset bounds");
    for (double v : x.data()) {
      if (!std::isfinite(v)) throw ValidationError("dataset: non-finite input");
    }
    for (double v : y) {
      if (!std::isfinite(v)) throw ValidationError("dataset: non-finite output");
    }
    for (std::size_t k = 0; k < bounds.size(); ++k) {
      if (!(bounds[k].lo < bounds[k].hi) || !std::isfinite(bounds[k].lo) || !std::isfinite(bounds[k].hi)) {
        throw ValidationError("dataset: invalid bounds in dimension " + std::to_string(k));
      }
      for (std::size_t i = 0; i < x.rows(); ++i) {
        if (x(i, k) < bounds[k].lo || x(i, k) > bounds[k].hi) {
          throw ValidationError("dataset: sample " + std::to_string(i) + " outside domain bounds");
        }
      }
    }
  }
};

/// Bounding box of the inputs, used when no domain is supplied.
inline std::vector<Interval> bounding_box(const Matrix<double>& x) {
  std::vector<Interval> b(x.cols());
  for (std::size_t k = 0; k < x.cols(); ++k) {
    double lo = x(0, k);
    double hi = x(0, k);
    for (std::size_t i = 1; i < x.rows(); ++i) {
      lo = std::min(lo, x(i, k));
      hi = std::max(hi, x(i, k));
    }
    if (hi <= lo) hi = lo + 1.0;
    b[k] = {lo, hi};
  }
  return b;
}

/// Affine map raw -> zero-mean, unit-variance coordinates fitted on training inputs.
/// A dimension without spread keeps unit scale.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix<double>& x) {
    Standardizer s;
    const auto n = static_cast<double>(x.rows());
    s.mean.assign(x.cols(), 0.0);
    s.scale.assign(x.cols(), 1.0);
    for (std::size_t k = 0; k < x.cols(); ++k) {
      double m = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) m += x(i, k);
      m /= n;
      double var = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) var += (x(i, k) - m) * (x(i, k) - m);
      var /= n;
      const double sd = std::sqrt(var);
      s.mean[k] = m;
      if (sd > 1e-12 * (1.0 + std::abs(m))) s.scale[k] = sd;
    }
    return s;
  }

  static Standardizer identity(std::size_t dim) {
    return Standardizer{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
  }

  [[nodiscard]] std::size_t dim() const { return mean.size(); }

  [[nodiscard]] std::vector<double> to_standard(std::span<const double> raw) const {
    require_dims(raw.size(), dim(), "Standardizer");
    std::vector<double> out(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) out[k] = (raw[k] - mean[k]) / scale[k];
    return out;
  }

  [[nodiscard]] Matrix<double> to_standard(const Matrix<double>& raw) const {
    Matrix<double> out(raw.rows(), raw.cols());
    for (std::size_t i = 0; i < raw.rows(); ++i) {
      const auto r = to_standard(raw.row(i));
      std::copy(r.begin(), r.end(), out.row(i).begin());
    }
    return out;
  }

  [[nodiscard]] std::vector<double> to_raw(std::span<const double> std_x) const {
    require_dims(std_x.size(), dim(), "Standardizer");
    std::vector<double> out(std_x.size());
    for (std::size_t k = 0; k < std_x.size(); ++k) out[k] = mean[k] + scale[k] * std_x[k];
    return out;
  }

  bool operator==(const Standardizer&) const = default;
};

/// Maps between raw coordinates/outputs and the model's standardized inputs
/// and centered outputs.
struct ModelFrame {
  Standardizer standardizer;
  double y_mean = 0.0;
  bool operator==(const ModelFrame&) const = default;
};

/// Training data in model coordinates: standardized inputs and centered outputs.
struct PreparedData {
  Dataset raw;
  Standardizer standardizer;
  double y_mean = 0.0;
  Matrix<double> x_std;
  std::vector<double> y_centered;

  static PreparedData from(Dataset data) {
    data.validate();
    if (data.bounds.empty()) data.bounds = bounding_box(data.x);
    PreparedData p;
    p.standardizer = Standardizer::fit(data.x);
    double m = 0.0;
    for (double v : data.y) m += v;
    p.y_mean = m / static_cast<double>(data.y.size());
    p.x_std = p.standardizer.to_standard(data.x);
    p.y_centered.resize(data.y.size());
    for (std::size_t i = 0; i < data.y.size(); ++i) p.y_centered[i] = data.y[i] - p.y_mean;
    p.raw = std::move(data);
    return p;
  }

  [[nodiscard]] std::size_t dim() const { return raw.dim(); }
  [[nodiscard]] std::size_t size() const { return raw.size(); }
  [[nodiscard]] ModelFrame frame() const { return {standardizer, y_mean}; }
};

/// Subset of rows.
inline Dataset select_rows(const Dataset& d, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.x = Matrix<double>(rows.size(), d.dim());
  out.y.resize(rows.size());
  out.bounds = d.bounds;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= d.size()) throw InvalidSplit("row index " + std::to_string(rows[r]) + " out of range");
    for (std::size_t k = 0; k < d.dim(); ++k) out.x(r, k) = d.x(rows[r], k);
    out.y[r] = d.y[rows[r]];
  }
  return out;
}

// CSV: header "x_0,...,x_{d-1},y", one sample per line. Values use 17
// significant digits so files round-trip exactly.

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t k = 0; k < d.dim(); ++k) out << "x_" << k << ',';
  out << "y\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t k = 0; k < d.dim(); ++k) out << format_double(d.x(i, k)) << ',';
    out << format_double(d.y[i]) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    cells.push_back(cell);
  }
  return cells;
}

/// Numeric table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  [[nodiscard]] std::size_t column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw ParseError("csv: missing column '" + name + "'");
  }
};

inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  t.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " columns");
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != c.size() || c.empty()) {
        throw ParseError(path + ":" + std::to_string(lineno) + ": bad number '" + c + "'");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Dataset read_csv(const std::string& path) {
  const CsvTable t = read_csv_table(path);
  if (t.header.size() < 2 || t.header.back() != "y") {
    throw ParseError(path + ": header must be x_0,...,x_{d-1},y");
  }
  const std::size_t d = t.header.size() - 1;
  for (std::size_t k = 0; k < d; ++k) {
    if (t.header[k] != "x_" + std::to_string(k)) throw ParseError(path + ": bad header '" + t.header[k] + "'");
  }
  Dataset out;
  out.x = Matrix<double>(t.rows.size(), d);
  out.y.resize(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) out.x(i, k) = t.rows[i][k];
    out.y[i] = t.rows[i][d];
  }
  return out;
}

}  // namespace pidkl
