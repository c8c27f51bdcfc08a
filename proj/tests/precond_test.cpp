#include "pinn/error.hpp"
#include "pinn/linalg/decomp.hpp"
#include "pinn/precond/precond.hpp"
#include "pinn/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using pinn::Error;
using pinn::ErrorCode;
using pinn::Rng;
using pinn::linalg::Matrix;
namespace la = pinn::linalg;
namespace pc = pinn::precond;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m.set(i, j, rng.normal());
  return m;
}

std::vector<double> random_log_diagonal(std::size_t n, Rng& rng) {
  std::vector<double> d(n);
  for (double& v : d) v = std::pow(10.0, rng.uniform(-2.0, 2.0));
  return d;
}

// Plain 2-norm condition number via both Gram eigenproblems, independent of
// condition_number's singularity guard.
double sigma_ratio(const Matrix& a) {
  const auto s = la::singular_values(a);
  return s.front() / s.back();
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(RowEquilibrate, Examples) {
  const auto id = pc::row_equilibrate(Matrix::identity(3));
  EXPECT_EQ(id.preconditioned, Matrix::identity(3));
  const auto r = pc::row_equilibrate(Matrix{{3, 4}, {0, 5}});
  EXPECT_DOUBLE_EQ(r.p_diag[0], 0.2);
  EXPECT_DOUBLE_EQ(r.p_diag[1], 0.2);
  EXPECT_NEAR(r.preconditioned(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(r.preconditioned(0, 1), 0.8, 1e-15);
  EXPECT_NEAR(r.preconditioned(1, 1), 1.0, 1e-15);
}

TEST(RowEquilibrate, UnitRowsAndZeroRowError) {
  Rng rng(2);
  const Matrix a = random_matrix(7, 4, rng);
  const auto r = pc::row_equilibrate(a);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_NEAR(r.preconditioned.row_norm(i), 1.0, 1e-12);
    EXPECT_EQ(r.p_diag[i], 1.0 / a.row_norm(i));
  }
  try {
    pc::row_equilibrate(Matrix{{1, 2}, {0, 0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroRow);
    ASSERT_EQ(e.where().size(), 1u);
    EXPECT_EQ(e.where()[0], 1u);
  }
}

// Row equilibration against 1000 random positive row scalings of each of 1000
// random 8x8 matrices. Counts every trial in which some scaling beats it.
TEST(RowEquilibrate, NoDiagonalScalingBeatsRowEquilibration) {
  Rng rng(1);
  std::size_t violations = 0;
  double worst = 0.0;
  for (int m = 0; m < 1000; ++m) {
    const Matrix a = random_matrix(8, 8, rng);
    double kp;
    try {
      kp = la::condition_number(pc::row_equilibrate(a).preconditioned);
    } catch (const Error&) {
      continue;
    }
    for (int t = 0; t < 1000; ++t) {
      const double kd = sigma_ratio(a.scale_rows(random_log_diagonal(8, rng)));
      if (kp > kd * (1.0 + 1e-10)) {
        ++violations;
        worst = std::max(worst, kp / kd);
      }
    }
  }
  EXPECT_EQ(violations, 0u) << "worst kappa(PA)/kappa(DA) = " << worst;
}

// Row equilibration is within sqrt(n) of the best diagonal scaling.
TEST(RowEquilibrate, WithinSqrtNOfAnyDiagonalScaling) {
  Rng rng(7);
  for (int m = 0; m < 300; ++m) {
    const std::size_t n = 2 + rng.below(7);
    const Matrix a = random_matrix(n, n, rng);
    const double kp = sigma_ratio(pc::row_equilibrate(a).preconditioned);
    for (int t = 0; t < 100; ++t) {
      const double kd = sigma_ratio(a.scale_rows(random_log_diagonal(n, rng)));
      EXPECT_LE(kp, std::sqrt(static_cast<double>(n)) * kd * (1.0 + 1e-9));
    }
  }
}

// A fixed 3x3 instance where a non-equilibrating scaling has the smaller
// 2-norm condition number.
TEST(RowEquilibrate, DiagonalScalingCanBeatRowEquilibration) {
  const Matrix a{{0.9, -0.618, -0.909}, {-0.47, 0.363, 0.56}, {-0.882, 1.298, 1.018}};
  const std::vector<double> d{1.735, 2.777, 0.436};
  const double kp = la::condition_number(pc::row_equilibrate(a).preconditioned);
  const double kd = la::condition_number(a.scale_rows(d));
  EXPECT_NEAR(kp, 33.2079, 1e-3);
  EXPECT_NEAR(kd, 28.4827, 1e-3);
  EXPECT_GT(kp, kd);
  EXPECT_LT(kp, std::sqrt(3.0) * kd);
}

TEST(JacobiPrecondition, Examples) {
  EXPECT_EQ(pc::jacobi_precondition(Matrix{{2, 0}, {0, 4}}).preconditioned, Matrix::identity(2));
  const auto r = pc::jacobi_precondition(Matrix{{2, 1}, {1, 4}});
  EXPECT_EQ(r.preconditioned, (Matrix{{1, 0.5}, {0.25, 1}}));

  Rng rng(9);
  Matrix a = random_matrix(10, 10, rng);
  for (std::size_t i = 0; i < 10; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 10; ++j) s += std::abs(a(i, j));
    a.set(i, i, (rng.uniform() < 0.5 ? -1.0 : 1.0) * (s + 1.0));
  }
  const auto j = pc::jacobi_precondition(a);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(j.preconditioned(i, i), 1.0, 1e-15);

  EXPECT_EQ(code_of([] { pc::jacobi_precondition(Matrix{{1, 0}, {0, 0}}); }), ErrorCode::ZeroDiagonal);
}

TEST(UpperBound, Examples) {
  EXPECT_NEAR(pc::upper_bound_u(Matrix::identity(2)), 2.0, 1e-14);
  EXPECT_NEAR(pc::upper_bound_u(Matrix{{1, 0}, {0, 2}}), 2.5, 1e-14);
  EXPECT_EQ(code_of([] { pc::upper_bound_u(Matrix{{1, 2}, {2, 4}}); }), ErrorCode::SingularMatrix);
}

TEST(UpperBound, BoundsKappaOnRandomMatrices) {
  Rng rng(31);
  for (int t = 0; t < 1000; ++t) {
    const Matrix a = random_matrix(6, 6, rng);
    EXPECT_LE(sigma_ratio(a), pc::upper_bound_u(a) * (1.0 + 1e-10));
  }
}

TEST(UpperBound, LogFormSurvivesLargeN) {
  Rng rng(3);
  const Matrix a = random_matrix(60, 60, rng).scale_rows(std::vector<double>(60, 1e3));
  const double lu = pc::log_upper_bound_u(a);
  EXPECT_TRUE(std::isfinite(lu));
  EXPECT_GE(lu, std::log(sigma_ratio(a)));
}

TEST(ReductionFactor, ExamplesAndIdentity) {
  EXPECT_NEAR(pc::reduction_factor(Matrix::identity(3)), 1.0, 1e-15);
  EXPECT_NEAR(pc::reduction_factor(Matrix{{1, 0}, {0, 2}}), 0.8, 1e-15);
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    const Matrix a = random_matrix(5, 5, rng).scale_rows(random_log_diagonal(5, rng));
    const double f = pc::reduction_factor(a);
    EXPECT_LE(f, 1.0 + 1e-15);
    const double upa = pc::upper_bound_u(pc::row_equilibrate(a).preconditioned);
    EXPECT_NEAR(upa / (f * pc::upper_bound_u(a)), 1.0, 1e-10);
  }
}

TEST(LowerBoundPair, Examples) {
  const double c = 0.9;
  const std::vector<double> x1{1, 0};
  const std::vector<double> x2{c, std::sqrt(1 - c * c)};
  EXPECT_NEAR(pc::lower_bound_pair(x1, x2), std::sqrt(4.0 / (4 * 0.1 * 1.9)), 1e-12);
  EXPECT_NEAR(pc::lower_bound_pair(x1, x2), 2.2942, 1e-4);
  EXPECT_EQ(code_of([&] { pc::lower_bound_pair(x1, x1); }), ErrorCode::AngleOutOfRange);
  const std::vector<double> ortho{0, 1};
  EXPECT_EQ(code_of([&] { pc::lower_bound_pair(x1, ortho); }), ErrorCode::AngleOutOfRange);
  const std::vector<double> zero{0, 0};
  EXPECT_EQ(code_of([&] { pc::lower_bound_pair(x1, zero); }), ErrorCode::AngleOutOfRange);
}

TEST(LowerBoundPair, BoundsKappaOfStackedRows) {
  Rng rng(44);
  int checked = 0;
  while (checked < 1000) {
    const std::size_t n = 2 + rng.below(6);
    const Matrix m = random_matrix(2, n, rng).scale_rows(random_log_diagonal(2, rng));
    const double c = pc::cosine(m.row(0), m.row(1));
    if (!(c > 0.0 && c < 1.0)) continue;
    ++checked;
    EXPECT_GE(sigma_ratio(m) * (1.0 + 1e-10), pc::lower_bound_pair(m.row(0), m.row(1)));
  }
}

TEST(LowerBoundPair, NormalizingRowsNeverRaisesTheBound) {
  Rng rng(45);
  for (int t = 0; t < 500; ++t) {
    const Matrix m = random_matrix(2, 4, rng).scale_rows(random_log_diagonal(2, rng));
    const double c = pc::cosine(m.row(0), m.row(1));
    if (!(c > 0.0 && c < 1.0)) continue;
    const Matrix u = pc::row_equilibrate(m).preconditioned;
    EXPECT_LE(pc::lower_bound_pair(u.row(0), u.row(1)),
              pc::lower_bound_pair(m.row(0), m.row(1)) * (1.0 + 1e-12));
  }
}

TEST(LowerBoundGlobal, TwoByTwoReducesToPairBound) {
  const Matrix a{{1, 0.2}, {0.5, 1}};
  const auto g = pc::lower_bound_global(a);
  EXPECT_NEAR(g.value, pc::lower_bound_pair(a.row(0), a.row(1)), 1e-14);
}

TEST(LowerBoundGlobal, ThreeByThreeExample) {
  const Matrix a{{1, 0, 0}, {0.9, 0.43589, 0}, {0.6, 0.8, 0}};
  // Third column is zero, so perturb it to make the matrix nonsingular while
  // keeping the pairwise cosines positive.
  Matrix b = a;
  b.set(2, 2, 0.1);
  const auto g = pc::lower_bound_global(b);
  EXPECT_EQ(g.row_i, 0u);
  EXPECT_EQ(g.row_j, 2u);
  EXPECT_NEAR(g.min_cosine, pc::cosine(b.row(0), b.row(2)), 1e-15);
  EXPECT_GE(sigma_ratio(b), g.value);
}

TEST(LowerBoundGlobal, LiteralConventionIsNotABound) {
  // cos = 0.3 between unit rows: the literal reading gives 1.40 > kappa = 1.36.
  const Matrix a{{1, 0}, {0.3, std::sqrt(1 - 0.09)}};
  const auto lit = pc::lower_bound_global(a, pc::EpsilonConvention::LiteralCosine);
  const auto std_ = pc::lower_bound_global(a);
  EXPECT_GT(lit.value, sigma_ratio(a));
  EXPECT_LE(std_.value, sigma_ratio(a));
}

TEST(LowerBoundGlobal, RejectsInvalidPairs) {
  try {
    pc::lower_bound_global(Matrix{{1, 0, 0}, {0.5, 1, 0}, {0, 0, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AngleOutOfRange);
    EXPECT_EQ(e.where().size(), 2u);
  }
}

TEST(LowerBoundGlobal, EquilibrationLowersTheBound) {
  Rng rng(8);
  int checked = 0;
  while (checked < 300) {
    Matrix a(4, 4);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) a.set(i, j, rng.uniform());
    a = a.scale_rows(random_log_diagonal(4, rng));
    ++checked;
    const double la_ = pc::lower_bound_global(a).value;
    const double lpa = pc::lower_bound_global(pc::row_equilibrate(a).preconditioned).value;
    EXPECT_LE(lpa, la_ * (1.0 + 1e-12));
    EXPECT_GE(sigma_ratio(a) * (1.0 + 1e-10), la_);
  }
}

TEST(Verification, SmallRunTalliesEveryProperty) {
  pc::VerificationConfig cfg;
  cfg.matrices = 50;
  cfg.diagonals_per_matrix = 20;
  const auto r = pc::run_verification(cfg);
  EXPECT_GT(r.u_bound.checked, 0u);
  EXPECT_EQ(r.u_bound.violations, 0u);
  EXPECT_EQ(r.reduction_identity.violations, 0u);
  EXPECT_EQ(r.reduction_at_most_one.violations, 0u);
  EXPECT_EQ(r.van_der_sluis_sqrt_n.violations, 0u);
  EXPECT_EQ(r.pair_bound.violations, 0u);
  EXPECT_EQ(r.global_bound.violations, 0u);
  EXPECT_EQ(r.equilibration_lowers_l.violations, 0u);
  EXPECT_GT(r.global_bound.checked, 0u);
  const auto again = pc::run_verification(cfg);
  EXPECT_EQ(again.van_der_sluis.violations, r.van_der_sluis.violations);
  EXPECT_EQ(again.van_der_sluis.worst_ratio, r.van_der_sluis.worst_ratio);
}
