#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <vector>

namespace pinn::linalg {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major real matrix. Every constructor rejects empty shapes and
/// non-finite entries, so a Matrix that exists is always finite.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  static Matrix from_eigen(const Eigen::Ref<const Eigen::MatrixXd>& m);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool is_square() const noexcept { return rows_ == cols_; }

  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  /// Writes one entry; rejects non-finite values.
  void set(std::size_t i, std::size_t j, double value);

  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * cols_, cols_);
  }

  Eigen::Map<const RowMajorMatrix> view() const {
    return Eigen::Map<const RowMajorMatrix>(data_.data(), static_cast<Eigen::Index>(rows_),
                                            static_cast<Eigen::Index>(cols_));
  }

  Matrix transpose() const;
  double frobenius_norm() const;
  double row_norm(std::size_t i) const;
  /// Returns diag(d) * this.
  Matrix scale_rows(std::span<const double> d) const;
  bool is_symmetric(double rel_tol) const;

  friend Matrix operator*(const Matrix& a, const Matrix& b);
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

/// Text form: "rows cols" header, then one row per line with 17 significant
/// digits.
void write_text(std::ostream& os, const Matrix& m);
Matrix read_text(std::istream& is);

}  // namespace pinn::linalg
