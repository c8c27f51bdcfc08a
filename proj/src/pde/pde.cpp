#include "pinn/pde/pde.hpp"

#include "pinn/error.hpp"
#include "pinn/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>

namespace pinn::pde {

namespace {

constexpr double kPi = 3.14159265358979323846;

double zero_target(std::span<const double>) { return 0.0; }

}  // namespace

bool Box::contains(std::span<const double> x) const {
  if (x.size() != dim()) return false;
  for (std::size_t d = 0; d < dim(); ++d)
    if (!(x[d] >= lo[d] && x[d] <= hi[d])) return false;
  return true;
}

PdeProblem poisson_problem(PoissonMode mode) {
  const double k = mode == PoissonMode::Motivation ? 1.0 : 5.0;
  const double kpi = k * kPi;
  PdeProblem p;
  p.name = mode == PoissonMode::Motivation ? "poisson-motivation" : "poisson";
  p.axis_names = {"x"};
  p.domain = {{-1.0}, {1.0}};
  p.residual = [kpi](std::span<const double> x, const nn::Jet2& u, nn::Jet2* partials) {
    if (partials) {
      *partials = nn::Jet2::zero(1);
      partials->diag_hess[0] = -1.0;
    }
    return -u.diag_hess[0] - kpi * kpi * std::sin(kpi * x[0]);
  };
  p.needs.grad_dims = {0};
  p.needs.hess_dims = {0};
  p.boundary = {{"x=-1", 0, -1.0, zero_target}, {"x=1", 0, 1.0, zero_target}};
  p.exact = [kpi](std::span<const double> x) { return std::sin(kpi * x[0]); };
  p.exact_jet = [kpi](std::span<const double> x) {
    nn::Jet2 j = nn::Jet2::zero(1);
    j.value = std::sin(kpi * x[0]);
    j.grad[0] = kpi * std::cos(kpi * x[0]);
    j.diag_hess[0] = -kpi * kpi * j.value;
    return j;
  };
  p.exact_is_closed_form = true;
  return p;
}

PdeProblem diffusion_problem() {
  constexpr double w = 30.0 * kPi;
  PdeProblem p;
  p.name = "diffusion";
  p.axis_names = {"x", "t"};
  p.domain = {{-1.0, 0.0}, {1.0, 1.0}};
  p.residual = [](std::span<const double> x, const nn::Jet2& u, nn::Jet2* partials) {
    if (partials) {
      *partials = nn::Jet2::zero(2);
      partials->grad[1] = 1.0;
      partials->diag_hess[0] = -1.0;
    }
    return u.grad[1] - u.diag_hess[0] + (1.0 - w * w) * std::exp(-x[1]) * std::sin(w * x[0]);
  };
  p.needs.grad_dims = {0, 1};
  p.needs.hess_dims = {0};
  p.boundary = {
      {"t=0", 1, 0.0, [](std::span<const double> x) { return std::sin(w * x[0]); }},
      {"x=-1", 0, -1.0, zero_target},
      {"x=1", 0, 1.0, zero_target},
  };
  p.exact = [](std::span<const double> x) { return std::exp(-x[1]) * std::sin(w * x[0]); };
  p.exact_jet = [](std::span<const double> x) {
    nn::Jet2 j = nn::Jet2::zero(2);
    const double e = std::exp(-x[1]);
    j.value = e * std::sin(w * x[0]);
    j.grad[0] = e * w * std::cos(w * x[0]);
    j.grad[1] = -j.value;
    j.diag_hess[0] = -w * w * j.value;
    j.diag_hess[1] = j.value;
    return j;
  };
  p.exact_is_closed_form = true;
  return p;
}

PdeProblem burgers_problem() {
  PdeProblem p;
  p.name = "burgers";
  p.axis_names = {"x", "t"};
  p.domain = {{-1.0, 0.0}, {1.0, 1.0}};
  p.residual = [](std::span<const double>, const nn::Jet2& u, nn::Jet2* partials) {
    if (partials) {
      *partials = nn::Jet2::zero(2);
      partials->value = u.grad[0];
      partials->grad[0] = u.value;
      partials->grad[1] = 1.0;
      partials->diag_hess[0] = -kBurgersViscosity;
    }
    return u.grad[1] + u.value * u.grad[0] - kBurgersViscosity * u.diag_hess[0];
  };
  p.needs.grad_dims = {0, 1};
  p.needs.hess_dims = {0};
  p.boundary = {
      {"t=0", 1, 0.0, [](std::span<const double> x) { return -std::sin(kPi * x[0]); }},
      {"x=-1", 0, -1.0, zero_target},
      {"x=1", 0, 1.0, zero_target},
  };
  p.exact = [](std::span<const double> x) {
    if (x[1] <= 0.0) return -std::sin(kPi * x[0]);
    return cole_hopf_burgers(x[0], x[1]);
  };
  p.exact_is_closed_form = false;
  return p;
}

PdeProblem problem_by_name(const std::string& name) {
  if (name == "poisson") return poisson_problem(PoissonMode::Benchmark);
  if (name == "poisson-motivation") return poisson_problem(PoissonMode::Motivation);
  if (name == "diffusion") return diffusion_problem();
  if (name == "burgers") return burgers_problem();
  throw Error(ErrorCode::ConfigError, "unknown problem '" + name + "'");
}

// Nodes from the eigenvalues of the Jacobi matrix, each polished by Newton
// on the orthonormal Hermite recurrence; log weights come from the
// derivative at the root, which stays representable far into the tails.
const GaussHermite& gauss_hermite(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<GaussHermite>> cache;
  std::lock_guard<std::mutex> lock(mu);
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "Gauss-Hermite needs at least one node");
  auto& slot = cache[n];
  if (slot) return *slot;

  const auto dim = static_cast<Eigen::Index>(n);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sub(std::max<Eigen::Index>(dim - 1, 0));
  for (Eigen::Index i = 0; i + 1 < dim; ++i) sub[i] = std::sqrt(0.5 * static_cast<double>(i + 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);

  const double pim4 = 0.7511255444649425;  // pi^(-1/4)
  const double dn = static_cast<double>(n);
  auto rule = std::make_unique<GaussHermite>();
  for (Eigen::Index i = 0; i < dim; ++i) {
    double z = es.eigenvalues()[i];
    double pp = 0.0;
    for (int it = 0; it < 20; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double dj = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / dj) * p2 - std::sqrt((dj - 1.0) / dj) * p3;
      }
      pp = std::sqrt(2.0 * dn) * p2;
      const double step = p1 / pp;
      z -= step;
      if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    rule->nodes.push_back(z);
    rule->log_weights.push_back(std::log(2.0) - 2.0 * std::log(std::abs(pp)));
  }
  for (std::size_t i = 1; i < n; ++i)
    if (!(rule->nodes[i] > rule->nodes[i - 1]))
      throw Error(ErrorCode::QuadratureNotConverged, "Gauss-Hermite nodes failed to separate");
  slot = std::move(rule);
  return *slot;
}

double cole_hopf_quadrature(double x, double t, std::size_t n) {
  if (!(t > 0.0)) throw Error(ErrorCode::InvalidArgument, "Cole-Hopf quadrature needs t > 0");
  const GaussHermite& gh = gauss_hermite(n);
  const double c = std::sqrt(4.0 * kBurgersViscosity * t);
  const double inv = 1.0 / (2.0 * kPi * kBurgersViscosity);
  std::vector<double> expo(n);
  double top = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    expo[i] = gh.log_weights[i] - std::cos(kPi * (x - c * gh.nodes[i])) * inv;
    top = std::max(top, expo[i]);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = std::exp(expo[i] - top);
    num += w * std::sin(kPi * (x - c * gh.nodes[i]));
    den += w;
  }
  return -num / den;
}

double cole_hopf_burgers(double x, double t, std::size_t quad_nodes) {
  if (quad_nodes < 32) throw Error(ErrorCode::InvalidArgument, "Cole-Hopf quadrature needs at least 32 nodes");
  const double v = cole_hopf_quadrature(x, t, quad_nodes);
  const double fine = cole_hopf_quadrature(x, t, 2 * quad_nodes);
  if (!(std::abs(v - fine) <= kColeHopfTolerance)) {
    std::ostringstream msg;
    msg << "Cole-Hopf value at (" << x << ", " << t << ") moved by " << std::abs(v - fine)
        << " when doubling to " << 2 * quad_nodes << " nodes";
    throw Error(ErrorCode::QuadratureNotConverged, msg.str());
  }
  return v;
}

Eigen::MatrixXd sample_latin_hypercube(const Box& domain, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "sample size must be positive");
  Rng rng(seed);
  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd pts(rows, static_cast<Eigen::Index>(domain.dim()));
  std::vector<std::size_t> perm(n);
  for (std::size_t d = 0; d < domain.dim(); ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const double width = (domain.hi[d] - domain.lo[d]) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = domain.lo[d] + (static_cast<double>(perm[i]) + rng.uniform()) * width;
      pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = std::min(v, domain.hi[d]);
    }
  }
  return pts;
}

BoundarySample sample_boundary(const PdeProblem& problem, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "sample size must be positive");
  const Box& box = problem.domain;
  const std::size_t sets = problem.boundary.size();
  if (sets == 0) throw Error(ErrorCode::InvalidArgument, "problem has no boundary sets");

  // Face measure: product of the free extents (1 for a point face).
  std::vector<double> measure(sets, 1.0);
  double total = 0.0;
  for (std::size_t s = 0; s < sets; ++s) {
    for (std::size_t d = 0; d < box.dim(); ++d)
      if (d != problem.boundary[s].fixed_dim) measure[s] *= box.hi[d] - box.lo[d];
    total += measure[s];
  }
  std::vector<std::size_t> count(sets);
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < sets; ++s) {
    const double share = static_cast<double>(n) * measure[s] / total;
    count[s] = static_cast<std::size_t>(std::floor(share));
    assigned += count[s];
    remainder.emplace_back(share - static_cast<double>(count[s]), s);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++count[remainder[i % sets].second];

  Rng rng(seed);
  BoundarySample out;
  out.points.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(box.dim()));
  out.targets.resize(static_cast<Eigen::Index>(n));
  std::vector<double> x(box.dim());
  Eigen::Index row = 0;
  for (std::size_t s = 0; s < sets; ++s) {
    const BoundarySet& b = problem.boundary[s];
    for (std::size_t i = 0; i < count[s]; ++i, ++row) {
      for (std::size_t d = 0; d < box.dim(); ++d)
        x[d] = d == b.fixed_dim ? b.fixed_value : rng.uniform(box.lo[d], box.hi[d]);
      for (std::size_t d = 0; d < box.dim(); ++d) out.points(row, static_cast<Eigen::Index>(d)) = x[d];
      out.targets[row] = b.target(x);
      if (!std::isfinite(out.targets[row]))
        throw Error(ErrorCode::NonFinite, "boundary target is not finite on " + b.name);
      out.set_index.push_back(s);
    }
  }
  return out;
}

SampleSet make_samples(const PdeProblem& problem, std::size_t n_boundary, std::size_t n_residual,
                       std::uint64_t seed) {
  // Independent streams for the two parts, derived from one seed.
  Rng root(seed);
  const std::uint64_t boundary_seed = root.next_u64();
  const std::uint64_t residual_seed = root.next_u64();
  SampleSet s;
  s.boundary = sample_boundary(problem, n_boundary, boundary_seed);
  s.residual_points = sample_latin_hypercube(problem.domain, n_residual, residual_seed);
  s.seed = seed;
  return s;
}

ReferenceGrid make_reference(const PdeProblem& problem, std::span<const std::size_t> counts) {
  if (!problem.has_exact()) throw Error(ErrorCode::NoExactSolution, problem.name + " has no exact solution");
  const Box& box = problem.domain;
  if (counts.size() != box.dim()) throw Error(ErrorCode::DimensionMismatch, "one node count per axis");
  ReferenceGrid g;
  g.axis_names = problem.axis_names;
  std::size_t total = 1;
  for (std::size_t d = 0; d < box.dim(); ++d) {
    if (counts[d] < 2) throw Error(ErrorCode::InvalidArgument, "grid needs at least two nodes per axis");
    std::vector<double> axis(counts[d]);
    for (std::size_t i = 0; i < counts[d]; ++i)
      axis[i] = box.lo[d] + (box.hi[d] - box.lo[d]) * static_cast<double>(i) / static_cast<double>(counts[d] - 1);
    g.axes.push_back(std::move(axis));
    total *= counts[d];
  }
  g.points.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(box.dim()));
  g.u.resize(static_cast<Eigen::Index>(total));
  std::vector<double> x(box.dim());
  for (std::size_t r = 0; r < total; ++r) {
    std::size_t rem = r;
    for (std::size_t d = box.dim(); d-- > 0;) {
      x[d] = g.axes[d][rem % counts[d]];
      rem /= counts[d];
    }
    for (std::size_t d = 0; d < box.dim(); ++d) g.points(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = x[d];
    g.u[static_cast<Eigen::Index>(r)] = problem.exact(x);
  }
  return g;
}

const ReferenceGrid& default_reference(const PdeProblem& problem) {
  static std::mutex mu;
  static std::map<std::string, std::unique_ptr<ReferenceGrid>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[problem.name];
  if (!slot) {
    std::vector<std::size_t> counts;
    if (problem.name == "burgers") {
      counts = {256, 100};
    } else if (problem.name == "diffusion") {
      counts = {512, 101};
    } else if (problem.input_dim() == 1) {
      counts = {1001};
    } else {
      counts.assign(problem.input_dim(), 101);
    }
    slot = std::make_unique<ReferenceGrid>(make_reference(problem, counts));
  }
  return *slot;
}

void write_reference_csv(std::ostream& os, const ReferenceGrid& grid) {
  const auto old = os.precision(17);
  for (const auto& name : grid.axis_names) os << name << ',';
  os << "u\n";
  for (Eigen::Index r = 0; r < grid.points.rows(); ++r) {
    for (Eigen::Index d = 0; d < grid.points.cols(); ++d) os << grid.points(r, d) << ',';
    os << grid.u[r] << '\n';
  }
  os.precision(old);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

ReferenceGrid read_reference_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::IoError, "reference CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv(line);
  if (header.size() < 2 || header.back() != "u") throw Error(ErrorCode::IoError, "reference CSV header must end in ',u'");
  header.pop_back();
  const std::size_t dim = header.size();

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != dim + 1)
      throw Error(ErrorCode::IoError, "reference CSV line " + std::to_string(lineno) + " has the wrong field count");
    std::vector<double> v;
    for (const auto& c : cells) {
      std::size_t used = 0;
      double d = 0.0;
      try {
        d = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || !std::isfinite(d))
        throw Error(ErrorCode::IoError, "reference CSV line " + std::to_string(lineno) + " has a bad number");
      v.push_back(d);
    }
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw Error(ErrorCode::IoError, "reference CSV has no data rows");

  ReferenceGrid g;
  g.axis_names = header;
  // Axis values in order of first appearance must be strictly increasing.
  for (std::size_t d = 0; d < dim; ++d) {
    std::vector<double> axis;
    for (const auto& r : rows) {
      if (std::find(axis.begin(), axis.end(), r[d]) == axis.end()) axis.push_back(r[d]);
    }
    for (std::size_t i = 1; i < axis.size(); ++i)
      if (!(axis[i] > axis[i - 1])) throw Error(ErrorCode::IoError, "reference grid axis " + header[d] + " is not increasing");
    g.axes.push_back(std::move(axis));
  }
  std::size_t total = 1;
  for (const auto& a : g.axes) total *= a.size();
  if (total != rows.size()) throw Error(ErrorCode::IoError, "reference rows do not form a complete tensor grid");
  g.points.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(dim));
  g.u.resize(static_cast<Eigen::Index>(total));
  for (std::size_t r = 0; r < total; ++r) {
    std::size_t rem = r;
    for (std::size_t d = dim; d-- > 0;) {
      if (rows[r][d] != g.axes[d][rem % g.axes[d].size()])
        throw Error(ErrorCode::IoError, "reference row " + std::to_string(r + 1) + " is out of grid order");
      rem /= g.axes[d].size();
    }
    for (std::size_t d = 0; d < dim; ++d) g.points(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = rows[r][d];
    g.u[static_cast<Eigen::Index>(r)] = rows[r][dim];
  }
  return g;
}

}  // namespace pinn::pde
