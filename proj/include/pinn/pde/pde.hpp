#pragma once

#include "pinn/nn/batch.hpp"
#include "pinn/nn/network.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pinn::pde {

/// Axis-aligned box lo[d] <= x[d] <= hi[d].
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const noexcept { return lo.size(); }
  bool contains(std::span<const double> x) const;
};

/// One face of the domain box carrying a Dirichlet target (initial
/// conditions are the face t = t0).
struct BoundarySet {
  std::string name;
  std::size_t fixed_dim;
  double fixed_value;
  std::function<double(std::span<const double>)> target;
};

/// Residual value at a point given the network's jet there. When partials is
/// non-null it receives dr/d(value), dr/d(grad_i), dr/d(diag_hess_i), which is
/// the cotangent seeding reverse accumulation.
using ResidualFn =
    std::function<double(std::span<const double> point, const nn::Jet2& u, nn::Jet2* partials)>;

struct PdeProblem {
  std::string name;
  std::vector<std::string> axis_names;  // e.g. {"x", "t"}
  Box domain;
  ResidualFn residual;
  nn::JetMask needs;  // derivatives the residual reads
  std::vector<BoundarySet> boundary;
  std::function<double(std::span<const double>)> exact;   // empty when unknown
  std::function<nn::Jet2(std::span<const double>)> exact_jet;  // analytic; empty unless closed form
  bool exact_is_closed_form = false;

  std::size_t input_dim() const noexcept { return domain.dim(); }
  bool has_exact() const noexcept { return static_cast<bool>(exact); }
};

enum class PoissonMode { Motivation, Benchmark };

/// -u'' = k^2 pi^2 sin(k pi x) on [-1, 1], u(+-1) = 0; k = 1 or 5.
PdeProblem poisson_problem(PoissonMode mode);
/// u_t = u_xx + ((30 pi)^2 - 1) e^{-t} sin(30 pi x) on [-1,1] x [0,1] with
/// exact solution e^{-t} sin(30 pi x).
PdeProblem diffusion_problem();
/// u_t + u u_x = (0.01/pi) u_xx, u(x,0) = -sin(pi x), u(+-1,t) = 0.
PdeProblem burgers_problem();

/// Looks a problem up by name: poisson, poisson-motivation, diffusion, burgers.
PdeProblem problem_by_name(const std::string& name);

inline constexpr double kBurgersViscosity = 0.01 / 3.14159265358979323846;
inline constexpr std::size_t kColeHopfNodes = 256;
inline constexpr double kColeHopfTolerance = 1e-6;

/// Gauss-Hermite rule for weight exp(-z^2): nodes ascending and natural-log
/// weights (log form keeps the tail weights from underflowing).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> log_weights;
};
const GaussHermite& gauss_hermite(std::size_t n);

/// Cole-Hopf integral for viscous Burgers evaluated with n Gauss-Hermite
/// nodes, no convergence check. Requires t > 0.
double cole_hopf_quadrature(double x, double t, std::size_t n);
/// The same value, checked against 2n nodes; throws QuadratureNotConverged
/// when they differ by more than kColeHopfTolerance.
double cole_hopf_burgers(double x, double t, std::size_t quad_nodes = kColeHopfNodes);

/// Latin hypercube sample: n x dim, one point per stratum on every axis.
Eigen::MatrixXd sample_latin_hypercube(const Box& domain, std::size_t n, std::uint64_t seed);

struct BoundarySample {
  Eigen::MatrixXd points;  // n x dim
  Eigen::VectorXd targets;
  std::vector<std::size_t> set_index;  // which BoundarySet each point lies on
};

/// Uniform points on the union of the problem's boundary sets, allocated to
/// each set in proportion to its measure (largest remainder).
BoundarySample sample_boundary(const PdeProblem& problem, std::size_t n, std::uint64_t seed);

struct SampleSet {
  BoundarySample boundary;
  Eigen::MatrixXd residual_points;
  std::uint64_t seed = 0;
};

SampleSet make_samples(const PdeProblem& problem, std::size_t n_boundary, std::size_t n_residual,
                       std::uint64_t seed);

/// Exact solution on a tensor grid; the last axis varies fastest.
struct ReferenceGrid {
  std::vector<std::string> axis_names;
  std::vector<std::vector<double>> axes;
  Eigen::MatrixXd points;  // one row per node
  Eigen::VectorXd u;
};

/// Uniform grid with counts[d] nodes per axis, endpoints included.
ReferenceGrid make_reference(const PdeProblem& problem, std::span<const std::size_t> counts);
/// Default evaluation grid of a problem (256 x 100 for Burgers), cached per
/// process.
const ReferenceGrid& default_reference(const PdeProblem& problem);

/// CSV "x,t,u" (or "x,u"), 17 significant digits.
void write_reference_csv(std::ostream& os, const ReferenceGrid& grid);
/// Reads a reference CSV and checks that the rows form a tensor grid in
/// the order written above.
ReferenceGrid read_reference_csv(std::istream& is);

}  // namespace pinn::pde
