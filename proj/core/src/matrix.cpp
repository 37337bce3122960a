#include "ebca/matrix.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

#include "ebca/summation.hpp"

namespace ebca {

namespace {

void check_dims(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("matrix dimensions must be at least 1x1");
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
  check_dims(rows, cols);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  check_dims(rows, cols);
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data size does not match dimensions");
  }
  ensure_finite("Matrix construction");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  if (r == 0) throw ShapeError("matrix dimensions must be at least 1x1");
  const std::size_t c = rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged row lengths");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

void Matrix::ensure_finite(const char* where) const {
  for (double x : data_) {
    if (!std::isfinite(x)) {
      throw std::domain_error(std::string(where) + ": non-finite entry");
    }
  }
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.data().data() + i * a.cols();
    for (std::size_t j = 0; j < b.cols(); ++j) {
      out(i, j) = cascade_dot(ar, 1, bd + j, b.cols(), a.cols());
    }
  }
  out.ensure_finite("matmul");
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.data().data() + i * a.cols();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) = cascade_dot(ar, 1, b.data().data() + j * b.cols(), 1, a.cols());
    }
  }
  out.ensure_finite("matmul_nt");
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
  Matrix out(a.cols(), b.cols());
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      out(i, j) = cascade_dot(ad + i, a.cols(), bd + j, b.cols(), a.rows());
    }
  }
  out.ensure_finite("matmul_tn");
  return out;
}

Vector matvec(const Matrix& a, std::span<const double> v) {
  if (a.cols() != v.size()) throw ShapeError("matvec: dimension mismatch");
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    out[i] = cascade_dot(a.data().data() + i * a.cols(), 1, v.data(), 1, a.cols());
  }
  return out;
}

Vector tmatvec(const Matrix& a, std::span<const double> v) {
  if (a.rows() != v.size()) throw ShapeError("tmatvec: dimension mismatch");
  Vector out(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    out[j] = cascade_dot(a.data().data() + j, a.cols(), v.data(), 1, a.rows());
  }
  return out;
}

namespace {

template <typename F>
Matrix zip(const Matrix& a, const Matrix& b, const char* what, F f) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape mismatch");
  std::vector<double> data(a.data().size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = f(a.data()[i], b.data()[i]);
  return Matrix(a.rows(), a.cols(), std::move(data));
}

}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  return zip(a, b, "subtract", [](double x, double y) { return x - y; });
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  return zip(a, b, "hadamard", [](double x, double y) { return x * y; });
}

Matrix scale(const Matrix& a, double c) {
  std::vector<double> data(a.data().size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = a.data()[i] * c;
  return Matrix(a.rows(), a.cols(), std::move(data));
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

double frobenius_norm(const Matrix& a) {
  Neumaier acc;
  for (double x : a.data()) acc.add(x * x);
  return std::sqrt(acc.value());
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data().data(), b.data().data(),
                     a.data().size() * sizeof(double)) == 0;
}

Vector column_sums(const Matrix& a) {
  Vector out(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    Neumaier acc;
    for (std::size_t i = 0; i < a.rows(); ++i) acc.add(a(i, j));
    out[j] = acc.value();
  }
  return out;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double parse_double(const std::string& field) {
  const char* begin = field.c_str();
  const char* end = begin + field.size();
  while (begin != end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
  if (begin != end && *begin == '+') ++begin;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec == std::errc::invalid_argument || ptr == begin) {
    throw std::domain_error("CSV: cannot parse number '" + field + "'");
  }
  if (ec == std::errc::result_out_of_range) {
    throw std::domain_error("CSV: number out of range '" + field + "'");
  }
  const char* rest = ptr;
  while (rest != end && std::isspace(static_cast<unsigned char>(*rest))) ++rest;
  if (rest != end) {
    throw std::domain_error("CSV: trailing junk in number '" + field + "'");
  }
  return v;
}

void write_csv(const Matrix& a, std::ostream& os) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (j) os << ',';
      os << format_double(a(i, j));
    }
    os << '\n';
  }
}

void write_csv(const Matrix& a, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_csv(a, os);
}

Matrix read_csv_matrix(std::istream& is) {
  std::vector<double> data;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t c = 0;
    while (std::getline(ss, field, ',')) {
      data.push_back(parse_double(field));
      ++c;
    }
    if (cols == 0) {
      cols = c;
    } else if (c != cols) {
      throw ShapeError("CSV: ragged row lengths");
    }
    ++rows;
  }
  if (rows == 0) throw ShapeError("CSV: no rows");
  return Matrix(rows, cols, std::move(data));
}

Matrix read_csv_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return read_csv_matrix(is);
}

}  // namespace ebca
