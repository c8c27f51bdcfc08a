#pragma once

#include "pinn/linalg/matrix.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace pinn::precond {

using linalg::Matrix;

/// Row norms at or below this are treated as zero.
inline constexpr double kZeroNorm = 1e-300;

struct EquilibrationResult {
  std::vector<double> p_diag;  // diagonal of P
  Matrix preconditioned;       // P * A
};

/// P = diag(1 / ||A_i||_2); every row of P*A has unit norm.
EquilibrationResult row_equilibrate(const Matrix& a);

/// P = diag(A)^{-1}; P*A has unit diagonal.
EquilibrationResult jacobi_precondition(const Matrix& a);

/// U(A) = 2/|det A| * (||A||_F^2 / n)^(n/2), an upper bound on kappa(A).
double upper_bound_u(const Matrix& a);
/// log U(A); finite even when U(A) overflows.
double log_upper_bound_u(const Matrix& a);

/// prod_i ||A_i|| / (||A||_F^2 / n)^(n/2): the factor by which row
/// equilibration shrinks U(A). Never exceeds 1.
double reduction_factor(const Matrix& a);

/// cos of the angle between two vectors, clamped to [-1, 1].
double cosine(std::span<const double> x1, std::span<const double> x2);

/// Lower bound on kappa of any matrix containing x1 and x2 as rows:
/// sqrt((r + 1/r + 2) / (4 eps (2 - eps))) with r = ||x1||/||x2|| and
/// eps = 1 - cos(theta). Requires cos(theta) in (0, 1).
double lower_bound_pair(std::span<const double> x1, std::span<const double> x2);

/// How the global bound turns the extreme row-pair cosine into eps.
enum class EpsilonConvention {
  /// eps = 1 - min cos, i.e. the pair bound of the least-aligned row pair.
  OneMinusCosine,
  /// eps = min cos, read literally from the matrix of cosines.
  LiteralCosine,
};

struct GlobalLowerBound {
  double value;
  std::size_t row_i;
  std::size_t row_j;
  double min_cosine;
  double epsilon;
};

/// L(A) = 2/(n(n-1)) times the pair bound of the row pair with the smallest
/// cosine. Every off-diagonal row-pair cosine must lie in (0, 1).
GlobalLowerBound lower_bound_global(const Matrix& a,
                                    EpsilonConvention convention = EpsilonConvention::OneMinusCosine);

/// Randomized verification of the conditioning results above.
struct VerificationConfig {
  std::size_t matrices = 10000;
  std::size_t diagonals_per_matrix = 100;
  std::size_t n = 6;
  std::uint64_t seed = 1;
  /// Diagonal entries of the competing scalings are 10^U(-r, r).
  double diagonal_log10_range = 2.0;
  /// Relative slack separating true violations from rounding in kappa.
  double rounding_slack = 1e-10;
};

struct PropertyTally {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst_ratio = 0.0;  // max of lhs/rhs over the checks (<= 1 means no violation)
};

struct VerificationReport {
  PropertyTally u_bound;              // kappa(A) <= U(A)
  PropertyTally van_der_sluis;        // kappa(PA) <= kappa(DA)
  PropertyTally van_der_sluis_sqrt_n; // kappa(PA) <= sqrt(n) kappa(DA)
  PropertyTally reduction_identity;   // U(PA) = factor * U(A), 1e-10 relative
  PropertyTally reduction_at_most_one;
  PropertyTally pair_bound;           // kappa(2 x n stack) >= pair bound
  PropertyTally pair_bound_in_matrix; // kappa(A) >= pair bound of any valid row pair
  PropertyTally global_bound;         // kappa(A) >= L(A)
  PropertyTally global_bound_literal; // kappa(A) >= L(A) under LiteralCosine
  PropertyTally equilibration_lowers_l;  // L(PA) <= L(A)
  PropertyTally singular_skipped;     // draws skipped as numerically singular
};

VerificationReport run_verification(const VerificationConfig& config);

}  // namespace pinn::precond
