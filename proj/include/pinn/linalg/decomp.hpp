#pragma once

#include "pinn/linalg/matrix.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace pinn::linalg {

/// Relative asymmetry tolerated by sym_eig.
inline constexpr double kSymmetryTol = 1e-10;
/// condition_number reports SingularMatrix when sigma_min <= kSingularRatio * sigma_max.
inline constexpr double kSingularRatio = 1e-14;
/// Gram eigenvalues below kGramFloor * lambda_max carry no information about
/// sigma_min, so condition_number treats such matrices as singular.
inline constexpr double kGramFloor = 1e-15;
inline constexpr int kMaxJacobiSweeps = 100;

struct SymEigResult {
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;              // column i pairs with eigenvalues[i]
};

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
SymEigResult sym_eig(const Matrix& a);
/// Eigenvalues only; skips accumulating the rotations.
std::vector<double> sym_eigenvalues(const Matrix& a);

/// Singular values, descending, from the eigenvalues of the smaller Gram
/// matrix (clamped at zero).
std::vector<double> singular_values(const Matrix& a);

double condition_number(const Matrix& a);

double determinant(const Matrix& a);

/// sign(det) and log|det| from the same LU factorization; sign is 0 for an
/// exactly singular pivot.
struct LogDet {
  int sign;
  double log_abs;
};
LogDet log_determinant(const Matrix& a);

using SymmetricOperator = std::function<void(std::span<const double> in, std::span<double> out)>;

struct LanczosResult {
  std::vector<double> top;                  // descending
  std::vector<double> bottom;               // ascending
  std::vector<std::vector<double>> top_vectors;
  std::vector<std::vector<double>> bottom_vectors;
  std::size_t steps = 0;                    // Krylov dimension actually built
  std::size_t restarts = 0;                 // breakdowns recovered by a fresh start vector
};

/// Extremal Ritz pairs from a fully reorthogonalized Lanczos run.
/// Requires k <= iters <= dim.
LanczosResult lanczos_extremal(const SymmetricOperator& apply, std::size_t dim, std::size_t k,
                               std::size_t iters, std::uint64_t seed);

}  // namespace pinn::linalg
