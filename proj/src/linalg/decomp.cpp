#include "pinn/linalg/decomp.hpp"

#include "pinn/error.hpp"
#include "pinn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pinn::linalg {

namespace {

struct JacobiOutput {
  std::vector<double> values;
  std::vector<double> vectors;  // row-major n*n, columns are eigenvectors
};

inline void rotate(std::vector<double>& a, std::size_t n, std::size_t i, std::size_t j,
                   std::size_t k, std::size_t l, double s, double tau) {
  const double g = a[i * n + j];
  const double h = a[k * n + l];
  a[i * n + j] = g - s * (h + g * tau);
  a[k * n + l] = h + s * (g - h * tau);
}

// Cyclic Jacobi with the Rutishauser threshold strategy: the first three
// sweeps skip rotations below 0.2*off/n^2, later sweeps zero off-diagonal
// entries that no longer change the diagonal in floating point.
JacobiOutput jacobi(const Matrix& m, bool want_vectors) {
  const std::size_t n = m.rows();
  std::vector<double> a(m.data().begin(), m.data().end());
  std::vector<double> v;
  if (want_vectors) {
    v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  }
  std::vector<double> d(n), b(n), z(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) d[i] = b[i] = a[i * n + i];

  for (int sweep = 1; sweep <= kMaxJacobiSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += std::abs(a[p * n + q]);
    if (off == 0.0) break;
    const double thresh = sweep < 4 ? 0.2 * off / static_cast<double>(n * n) : 0.0;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        const double g = 100.0 * std::abs(apq);
        if (sweep > 4 && std::abs(d[p]) + g == std::abs(d[p]) &&
            std::abs(d[q]) + g == std::abs(d[q])) {
          a[p * n + q] = 0.0;
          continue;
        }
        if (std::abs(apq) <= thresh) continue;

        double h = d[q] - d[p];
        double t;
        if (std::abs(h) + g == std::abs(h)) {
          t = apq / h;
        } else {
          const double theta = 0.5 * h / apq;
          t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const double tau = s / (1.0 + c);
        h = t * apq;
        z[p] -= h;
        z[q] += h;
        d[p] -= h;
        d[q] += h;
        a[p * n + q] = 0.0;
        for (std::size_t j = 0; j < p; ++j) rotate(a, n, j, p, j, q, s, tau);
        for (std::size_t j = p + 1; j < q; ++j) rotate(a, n, p, j, j, q, s, tau);
        for (std::size_t j = q + 1; j < n; ++j) rotate(a, n, p, j, q, j, s, tau);
        if (want_vectors)
          for (std::size_t j = 0; j < n; ++j) rotate(v, n, j, p, j, q, s, tau);
      }
    }
    for (std::size_t p = 0; p < n; ++p) {
      b[p] += z[p];
      d[p] = b[p];
      z[p] = 0.0;
    }
  }
  return {std::move(d), std::move(v)};
}

void check_symmetric(const Matrix& a) {
  if (!a.is_square()) throw Error(ErrorCode::DimensionMismatch, "sym_eig needs a square matrix");
  if (!a.is_symmetric(kSymmetryTol))
    throw Error(ErrorCode::NonSymmetric, "matrix asymmetry exceeds tolerance");
}

Matrix gram_of_smaller_side(const Matrix& a) {
  const auto v = a.view();
  Eigen::MatrixXd g;
  if (a.rows() <= a.cols()) {
    g.noalias() = v * v.transpose();
  } else {
    g.noalias() = v.transpose() * v;
  }
  // Symmetrize away the rounding asymmetry of the product.
  Eigen::MatrixXd sym = 0.5 * (g + g.transpose());
  return Matrix::from_eigen(sym);
}

}  // namespace

SymEigResult sym_eig(const Matrix& a) {
  check_symmetric(a);
  const std::size_t n = a.rows();
  auto out = jacobi(a, true);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return out.values[i] > out.values[j]; });
  std::vector<double> values(n), vectors(n * n);
  for (std::size_t c = 0; c < n; ++c) {
    values[c] = out.values[order[c]];
    for (std::size_t r = 0; r < n; ++r) vectors[r * n + c] = out.vectors[r * n + order[c]];
  }
  return {std::move(values), Matrix(n, n, std::move(vectors))};
}

std::vector<double> sym_eigenvalues(const Matrix& a) {
  check_symmetric(a);
  auto out = jacobi(a, false);
  std::sort(out.values.begin(), out.values.end(), std::greater<>());
  return out.values;
}

std::vector<double> singular_values(const Matrix& a) {
  auto lambdas = sym_eigenvalues(gram_of_smaller_side(a));
  for (double& l : lambdas) l = std::sqrt(std::max(l, 0.0));
  return lambdas;
}

double condition_number(const Matrix& a) {
  auto lambdas = sym_eigenvalues(gram_of_smaller_side(a));
  const double top = lambdas.front();
  const double bottom = lambdas.back();
  if (!(top > 0.0) || bottom <= kGramFloor * top) {
    throw Error(ErrorCode::SingularMatrix, "sigma_min is indistinguishable from zero");
  }
  const double kappa = std::sqrt(top / bottom);
  if (1.0 / kappa <= kSingularRatio) {
    throw Error(ErrorCode::SingularMatrix, "sigma_min <= 1e-14 sigma_max");
  }
  return std::max(kappa, 1.0);
}

LogDet log_determinant(const Matrix& a) {
  if (!a.is_square()) throw Error(ErrorCode::DimensionMismatch, "determinant needs a square matrix");
  const std::size_t n = a.rows();
  std::vector<double> lu(a.data().begin(), a.data().end());
  int sign = 1;
  double log_abs = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu[i * n + k]) > std::abs(lu[piv * n + k])) piv = i;
    if (lu[piv * n + k] == 0.0) return {0, -std::numeric_limits<double>::infinity()};
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu[k * n + j], lu[piv * n + j]);
      sign = -sign;
    }
    const double pivot = lu[k * n + k];
    if (pivot < 0.0) sign = -sign;
    log_abs += std::log(std::abs(pivot));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu[i * n + k] / pivot;
      if (f == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu[i * n + j] -= f * lu[k * n + j];
    }
  }
  return {sign, log_abs};
}

double determinant(const Matrix& a) {
  const auto ld = log_determinant(a);
  if (ld.sign == 0) return 0.0;
  return ld.sign * std::exp(ld.log_abs);
}

LanczosResult lanczos_extremal(const SymmetricOperator& apply, std::size_t dim, std::size_t k,
                               std::size_t iters, std::uint64_t seed) {
  if (k == 0 || k > iters || iters > dim) {
    throw Error(ErrorCode::InvalidArgument, "lanczos_extremal requires 1 <= k <= iters <= dim");
  }
  Rng rng(seed);
  using Vec = Eigen::VectorXd;
  std::vector<Vec> basis;
  basis.reserve(iters);
  std::vector<double> alpha, beta;  // beta[j] couples basis j and j+1
  LanczosResult result;

  auto orthogonalize = [&](Vec& w) {
    // Two passes of classical Gram-Schmidt keep the basis orthogonal to
    // working precision.
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& q : basis) w -= q.dot(w) * q;
  };
  auto fresh_start = [&]() -> Vec {
    for (int attempt = 0; attempt < 8; ++attempt) {
      Vec w(static_cast<Eigen::Index>(dim));
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
      orthogonalize(w);
      const double nrm = w.norm();
      if (nrm > 1e-8) return w / nrm;
    }
    throw Error(ErrorCode::InvalidArgument, "could not draw a start vector outside the Krylov basis");
  };

  basis.push_back(fresh_start());
  double scale = 0.0;
  Vec w(static_cast<Eigen::Index>(dim));
  while (true) {
    const Vec& q = basis.back();
    apply(std::span<const double>(q.data(), dim), std::span<double>(w.data(), dim));
    const double a = q.dot(w);
    alpha.push_back(a);
    scale = std::max(scale, std::abs(a));
    if (basis.size() == iters) break;
    orthogonalize(w);
    const double b = w.norm();
    if (b <= 1e-12 * std::max(scale, 1e-300) || !std::isfinite(b)) {
      // Invariant subspace found; continue in a fresh direction with a zero
      // coupling so the tridiagonal matrix becomes block diagonal.
      beta.push_back(0.0);
      ++result.restarts;
      basis.push_back(fresh_start());
    } else {
      scale = std::max(scale, b);
      beta.push_back(b);
      basis.push_back(w / b);
    }
  }

  const std::size_t m = basis.size();
  std::vector<double> t(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    t[i * m + i] = alpha[i];
    if (i + 1 < m) t[i * m + i + 1] = t[(i + 1) * m + i] = beta[i];
  }
  const auto eig = sym_eig(Matrix(m, m, std::move(t)));
  auto ritz_vector = [&](std::size_t col) {
    Vec y = Vec::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < m; ++j) y += eig.eigenvectors(j, col) * basis[j];
    return std::vector<double>(y.data(), y.data() + dim);
  };
  for (std::size_t i = 0; i < k; ++i) {
    result.top.push_back(eig.eigenvalues[i]);
    result.top_vectors.push_back(ritz_vector(i));
    const std::size_t lo = m - 1 - i;
    result.bottom.push_back(eig.eigenvalues[lo]);
    result.bottom_vectors.push_back(ritz_vector(lo));
  }
  result.steps = m;
  return result;
}

}  // namespace pinn::linalg
