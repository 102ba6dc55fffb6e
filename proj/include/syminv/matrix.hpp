#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace syminv {

using Vector = std::vector<double>;

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles.
///
/// Rows of a weight matrix are filters; rows of an activation matrix are
/// samples. Every other numeric container in the library is built on this.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> d);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::string shape_string() const;

  bool operator==(const Matrix&) const = default;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// a · b. Accumulation order is fixed (row of a, then k, then columns of b).
Matrix matmul(const Matrix& a, const Matrix& b);
/// a · bᵀ without materialising the caller's transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// aᵀ · b.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// Squared Euclidean norm of each row, i.e. diag(W Wᵀ).
Vector diag_of_gram(const Matrix& w);
/// Squared Euclidean norm of each column, i.e. diag(Wᵀ W).
Vector diag_of_col_gram(const Matrix& w);

/// Divides each row by its Euclidean norm. Throws std::domain_error on a
/// zero row.
Matrix orth_rows(const Matrix& w);

Matrix scale_rows(const Matrix& w, std::span<const double> s);
Matrix scale_cols(const Matrix& w, std::span<const double> s);

/// w + alpha * x, elementwise.
Matrix axpy(const Matrix& w, double alpha, const Matrix& x);
Matrix hadamard(const Matrix& a, const Matrix& b);

double max_abs(const Matrix& a);
double frobenius_norm(const Matrix& a);
bool all_finite(const Matrix& a);

/// max |a - b| over all entries.
double max_abs_diff(const Matrix& a, const Matrix& b);
/// ‖a - b‖_F / max(‖b‖_F, floor).
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-300);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace syminv
