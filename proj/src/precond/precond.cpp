#include "pinn/precond/precond.hpp"

#include "pinn/error.hpp"
#include "pinn/linalg/decomp.hpp"
#include "pinn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace pinn::precond {

namespace {

double norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double pair_bound_from(double norm1, double norm2, double eps) {
  const double r = norm1 / norm2;
  return std::sqrt((r + 1.0 / r + 2.0) / (4.0 * eps * (2.0 - eps)));
}

}  // namespace

EquilibrationResult row_equilibrate(const Matrix& a) {
  std::vector<double> p(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double nrm = a.row_norm(i);
    if (!(nrm > kZeroNorm)) throw Error(ErrorCode::ZeroRow, "row norm underflows", {i});
    p[i] = 1.0 / nrm;
  }
  Matrix pa = a.scale_rows(p);
  return {std::move(p), std::move(pa)};
}

EquilibrationResult jacobi_precondition(const Matrix& a) {
  if (!a.is_square()) throw Error(ErrorCode::DimensionMismatch, "Jacobi preconditioner needs a square matrix");
  std::vector<double> p(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    if (!(std::abs(a(i, i)) > kZeroNorm)) throw Error(ErrorCode::ZeroDiagonal, "zero diagonal entry", {i});
    p[i] = 1.0 / a(i, i);
  }
  Matrix pa = a.scale_rows(p);
  return {std::move(p), std::move(pa)};
}

double log_upper_bound_u(const Matrix& a) {
  if (!a.is_square()) throw Error(ErrorCode::DimensionMismatch, "U(A) needs a square matrix");
  const auto ld = linalg::log_determinant(a);
  if (ld.sign == 0 || ld.log_abs <= std::log(kZeroNorm)) {
    throw Error(ErrorCode::SingularMatrix, "|det A| <= 1e-300");
  }
  const double n = static_cast<double>(a.rows());
  const double fro = a.frobenius_norm();
  return std::numbers::ln2 - ld.log_abs + 0.5 * n * std::log(fro * fro / n);
}

double upper_bound_u(const Matrix& a) { return std::exp(log_upper_bound_u(a)); }

double reduction_factor(const Matrix& a) {
  if (!a.is_square()) throw Error(ErrorCode::DimensionMismatch, "reduction factor needs a square matrix");
  const auto ld = linalg::log_determinant(a);
  if (ld.sign == 0 || ld.log_abs <= std::log(kZeroNorm)) {
    throw Error(ErrorCode::SingularMatrix, "|det A| <= 1e-300");
  }
  const double n = static_cast<double>(a.rows());
  double log_rows = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) log_rows += std::log(a.row_norm(i));
  const double fro = a.frobenius_norm();
  return std::exp(log_rows - 0.5 * n * std::log(fro * fro / n));
}

double cosine(std::span<const double> x1, std::span<const double> x2) {
  if (x1.size() != x2.size()) throw Error(ErrorCode::DimensionMismatch, "vectors differ in length");
  double dot = 0.0;
  for (std::size_t k = 0; k < x1.size(); ++k) dot += x1[k] * x2[k];
  const double n1 = norm(x1);
  const double n2 = norm(x2);
  if (!(n1 > kZeroNorm) || !(n2 > kZeroNorm)) {
    throw Error(ErrorCode::AngleOutOfRange, "angle undefined for a zero vector");
  }
  return std::clamp(dot / (n1 * n2), -1.0, 1.0);
}

double lower_bound_pair(std::span<const double> x1, std::span<const double> x2) {
  const double c = cosine(x1, x2);
  if (!(c > 0.0 && c < 1.0)) {
    throw Error(ErrorCode::AngleOutOfRange, "cos(theta) = " + std::to_string(c) + " outside (0, 1)");
  }
  return pair_bound_from(norm(x1), norm(x2), 1.0 - c);
}

GlobalLowerBound lower_bound_global(const Matrix& a, EpsilonConvention convention) {
  const std::size_t n = a.rows();
  if (!a.is_square() || n < 2) {
    throw Error(ErrorCode::DimensionMismatch, "global lower bound needs a square matrix with n >= 2");
  }
  GlobalLowerBound best{0.0, 0, 1, 2.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = cosine(a.row(i), a.row(j));
      if (!(c > 0.0 && c < 1.0)) {
        throw Error(ErrorCode::AngleOutOfRange, "row-pair cosine outside (0, 1)", {i, j});
      }
      if (c < best.min_cosine) {
        best.min_cosine = c;
        best.row_i = i;
        best.row_j = j;
      }
    }
  }
  best.epsilon =
      convention == EpsilonConvention::OneMinusCosine ? 1.0 - best.min_cosine : best.min_cosine;
  const double pair = pair_bound_from(a.row_norm(best.row_i), a.row_norm(best.row_j), best.epsilon);
  best.value = 2.0 / (static_cast<double>(n) * static_cast<double>(n - 1)) * pair;
  return best;
}

namespace {

void tally(PropertyTally& t, double lhs, double rhs, double slack) {
  ++t.checked;
  const double ratio = lhs / rhs;
  t.worst_ratio = std::max(t.worst_ratio, ratio);
  if (lhs > rhs * (1.0 + slack)) ++t.violations;
}

Matrix stack_rows(const Matrix& a, std::size_t i, std::size_t j) {
  std::vector<double> data(a.row(i).begin(), a.row(i).end());
  data.insert(data.end(), a.row(j).begin(), a.row(j).end());
  return Matrix(2, a.cols(), std::move(data));
}

bool all_cosines_valid(const Matrix& a) {
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.rows(); ++j) {
      const double c = cosine(a.row(i), a.row(j));
      if (!(c > 0.0 && c < 1.0)) return false;
    }
  return true;
}

}  // namespace

VerificationReport run_verification(const VerificationConfig& config) {
  if (config.n < 2) throw Error(ErrorCode::InvalidArgument, "verification needs n >= 2");
  Rng rng(config.seed);
  VerificationReport report;
  const std::size_t n = config.n;
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  for (std::size_t m = 0; m < config.matrices; ++m) {
    // Alternate Gaussian matrices with entrywise-positive ones; the latter
    // have all row-pair cosines in (0, 1), which the lower bounds require.
    std::vector<double> data(n * n);
    const bool positive = (m % 2 == 1);
    for (double& v : data) v = positive ? rng.uniform(0.0, 1.0) : rng.normal();
    const Matrix a(n, n, std::move(data));

    double kappa_a;
    try {
      kappa_a = linalg::condition_number(a);
      (void)log_upper_bound_u(a);
    } catch (const Error&) {
      ++report.singular_skipped.checked;
      continue;
    }
    const auto eq = row_equilibrate(a);
    const double kappa_pa = linalg::condition_number(eq.preconditioned);

    tally(report.u_bound, kappa_a, upper_bound_u(a), config.rounding_slack);

    const double factor = reduction_factor(a);
    const double u_pa = upper_bound_u(eq.preconditioned);
    const double expected = factor * upper_bound_u(a);
    ++report.reduction_identity.checked;
    const double rel = std::abs(u_pa - expected) / std::abs(expected);
    report.reduction_identity.worst_ratio = std::max(report.reduction_identity.worst_ratio, rel / 1e-10);
    if (rel > 1e-10) ++report.reduction_identity.violations;
    tally(report.reduction_at_most_one, factor, 1.0, 1e-12);

    std::vector<double> d(n);
    for (std::size_t k = 0; k < config.diagonals_per_matrix; ++k) {
      for (double& v : d) v = std::pow(10.0, rng.uniform(-config.diagonal_log10_range, config.diagonal_log10_range));
      double kappa_da;
      try {
        kappa_da = linalg::condition_number(a.scale_rows(d));
      } catch (const Error&) {
        ++report.singular_skipped.checked;
        continue;
      }
      tally(report.van_der_sluis, kappa_pa, kappa_da, config.rounding_slack);
      tally(report.van_der_sluis_sqrt_n, kappa_pa, sqrt_n * kappa_da, config.rounding_slack);
    }

    // Pair bounds on one random row pair.
    const std::size_t i = rng.below(n);
    std::size_t j = rng.below(n - 1);
    if (j >= i) ++j;
    const double c = cosine(a.row(i), a.row(j));
    if (c > 0.0 && c < 1.0) {
      const double pair = lower_bound_pair(a.row(i), a.row(j));
      tally(report.pair_bound, pair, linalg::condition_number(stack_rows(a, i, j)), config.rounding_slack);
      tally(report.pair_bound_in_matrix, pair, kappa_a, config.rounding_slack);
    }

    if (all_cosines_valid(a)) {
      const auto global = lower_bound_global(a);
      tally(report.global_bound, global.value, kappa_a, config.rounding_slack);
      const auto literal = lower_bound_global(a, EpsilonConvention::LiteralCosine);
      tally(report.global_bound_literal, literal.value, kappa_a, config.rounding_slack);
      const auto global_pa = lower_bound_global(eq.preconditioned);
      tally(report.equilibration_lowers_l, global_pa.value, global.value, 1e-12);
    }
  }
  return report;
}

}  // namespace pinn::precond
