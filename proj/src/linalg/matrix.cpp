#include "pinn/linalg/matrix.hpp"

#include "pinn/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <string>

namespace pinn::linalg {

namespace {

void check_shape(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorCode::DimensionMismatch,
                "matrix shape must be at least 1x1, got " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
}

void check_finite(std::span<const double> data) {
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (!std::isfinite(data[k])) {
      throw Error(ErrorCode::NonFinite, "matrix entry is not finite", {k});
    }
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  check_shape(rows, cols);
  data_.assign(rows * cols, 0.0);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  check_shape(rows, cols);
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::DimensionMismatch, "data length does not equal rows*cols");
  }
  check_finite(data_);
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  check_shape(rows_, cols_);
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorCode::DimensionMismatch, "ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  check_finite(data_);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.data_[i * n + i] = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  check_finite(diag);
  for (std::size_t i = 0; i < diag.size(); ++i) m.data_[i * diag.size() + i] = diag[i];
  return m;
}

Matrix Matrix::from_eigen(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<RowMajorMatrix>(data.data(), m.rows(), m.cols()) = m;
  return Matrix(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                std::move(data));
}

void Matrix::set(std::size_t i, std::size_t j, double value) {
  if (!std::isfinite(value)) throw Error(ErrorCode::NonFinite, "matrix entry is not finite");
  data_[i * cols_ + j] = value;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t.data_[j * rows_ + i] = data_[i * cols_ + j];
  return t;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double Matrix::row_norm(std::size_t i) const {
  double s = 0.0;
  for (double v : row(i)) s += v * v;
  return std::sqrt(s);
}

Matrix Matrix::scale_rows(std::span<const double> d) const {
  if (d.size() != rows_) throw Error(ErrorCode::DimensionMismatch, "scale length != rows");
  std::vector<double> out(data_.size());
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) out[i * cols_ + j] = d[i] * data_[i * cols_ + j];
  return Matrix(rows_, cols_, std::move(out));
}

bool Matrix::is_symmetric(double rel_tol) const {
  if (!is_square()) return false;
  const double scale = std::max(frobenius_norm(), 1e-300);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j)
      if (std::abs((*this)(i, j) - (*this)(j, i)) > rel_tol * scale) return false;
  return true;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols_ != b.rows_) throw Error(ErrorCode::DimensionMismatch, "inner dimensions differ");
  std::vector<double> out(a.rows_ * b.cols_);
  Eigen::Map<RowMajorMatrix>(out.data(), static_cast<Eigen::Index>(a.rows_),
                             static_cast<Eigen::Index>(b.cols_)).noalias() = a.view() * b.view();
  return Matrix(a.rows_, b.cols_, std::move(out));
}

void write_text(std::ostream& os, const Matrix& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  const auto old_prec = os.precision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << m(i, j);
    }
    os << '\n';
  }
  os.precision(old_prec);
}

Matrix read_text(std::istream& is) {
  std::size_t rows = 0, cols = 0;
  if (!(is >> rows >> cols)) throw Error(ErrorCode::IoError, "missing matrix header");
  std::vector<double> data(rows * cols);
  for (auto& v : data) {
    std::string token;
    if (!(is >> token)) throw Error(ErrorCode::IoError, "truncated matrix body");
    try {
      std::size_t used = 0;
      v = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw Error(ErrorCode::IoError, "bad matrix entry '" + token + "'");
    }
  }
  return Matrix(rows, cols, std::move(data));
}

}  // namespace pinn::linalg
