#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ebca {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Dimensions are at least 1x1 and every
// entry is finite; both are checked whenever a matrix is built from data.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  // Throws if any entry is non-finite. Called by every exported operation
  // before handing a result back.
  void ensure_finite(const char* where) const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);     // A * B
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // A * B^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // A^T * B
Vector matvec(const Matrix& a, std::span<const double> v);   // A * v
Vector tmatvec(const Matrix& a, std::span<const double> v);  // A^T * v

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix hadamard(const Matrix& a, const Matrix& b);

double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
bool bitwise_equal(const Matrix& a, const Matrix& b);
Vector column_sums(const Matrix& a);

// CSV: one row per line, comma separated, floats printed with 17 significant
// digits so a write/read round trip reproduces every double bit for bit.
void write_csv(const Matrix& a, std::ostream& os);
void write_csv(const Matrix& a, const std::string& path);
Matrix read_csv_matrix(std::istream& is);
Matrix read_csv_matrix(const std::string& path);

std::string format_double(double x);
double parse_double(const std::string& field);

}  // namespace ebca
