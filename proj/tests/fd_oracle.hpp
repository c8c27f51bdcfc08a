#pragma once

#include <functional>

namespace pinn::testing {

// Central-difference derivatives of a scalar function of one step variable,
// based at h and sharpened by one Richardson step (five-point stencils at h
// and h/2). Truncation error is O(h^6), which keeps the oracle honest on the
// steep narrow-Gaussian networks.
struct CentralDiff {
  double first;
  double second;
};

inline CentralDiff central_diff(const std::function<double(double)>& f, double h) {
  const double f0 = f(0.0);
  const auto stencil = [&](double s) {
    const double p1 = f(s), m1 = f(-s), p2 = f(2 * s), m2 = f(-2 * s);
    return CentralDiff{(-p2 + 8 * p1 - 8 * m1 + m2) / (12 * s),
                       (-p2 + 16 * p1 - 30 * f0 + 16 * m1 - m2) / (12 * s * s)};
  };
  const CentralDiff coarse = stencil(h);
  const CentralDiff fine = stencil(0.5 * h);
  return {(64 * fine.first - coarse.first) / 63, (64 * fine.second - coarse.second) / 63};
}

}  // namespace pinn::testing
