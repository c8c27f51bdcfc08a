#include "pinn/ntk/ntk.hpp"

#include "pinn/error.hpp"
#include "pinn/linalg/decomp.hpp"
#include "pinn/nn/batch.hpp"
#include "pinn/rng.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace pinn::ntk {

namespace {

void require_scalar(const nn::Network& net) {
  if (net.output_dim() != 1)
    throw Error(ErrorCode::NonScalarOutput,
                "NTK rows need a scalar output, network has " + std::to_string(net.output_dim()));
}

void require_columns(const nn::Network& net, const Eigen::MatrixXd& points) {
  if (points.cols() != static_cast<Eigen::Index>(net.input_dim()))
    throw Error(ErrorCode::DimensionMismatch, "points have " + std::to_string(points.cols()) +
                                                  " columns, network expects " +
                                                  std::to_string(net.input_dim()));
}

void copy_row(const nn::ParamGradient& g, Eigen::MatrixXd& out, Eigen::Index row) {
  Eigen::Index c = 0;
  for (std::size_t k = 0; k < g.weights.size(); ++k) {
    const Eigen::MatrixXd& w = g.weights[k];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) out(row, c++) = w(i, j);
    for (Eigen::Index i = 0; i < g.bias[k].size(); ++i) out(row, c++) = g.bias[k](i);
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd standard_normal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
  return x;
}

}  // namespace

Eigen::MatrixXd jacobian_rows(const nn::Network& net, const Eigen::MatrixXd& points) {
  require_scalar(net);
  require_columns(net, points);
  const auto P = static_cast<Eigen::Index>(net.parameter_count());
  Eigen::MatrixXd rows(points.rows(), P);
  const Eigen::MatrixXd seed = Eigen::MatrixXd::Ones(1, 1);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const nn::BatchJets jets(net, points.row(i), nn::JetMask::none());
    copy_row(jets.backward(seed), rows, i);
  }
  return rows;
}

Eigen::MatrixXd jacobian_rows(const nn::Network& net, const Eigen::MatrixXd& points,
                              const pde::PdeProblem& problem) {
  require_scalar(net);
  require_columns(net, points);
  if (net.input_dim() != problem.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "network input differs from problem dimension");
  const std::size_t n0 = net.input_dim();
  const auto P = static_cast<Eigen::Index>(net.parameter_count());
  Eigen::MatrixXd rows(points.rows(), P);
  std::vector<double> x(n0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (std::size_t d = 0; d < n0; ++d) x[d] = points(i, static_cast<Eigen::Index>(d));
    if (!problem.domain.contains(x))
      throw Error(ErrorCode::InvalidArgument, "point outside the problem domain",
                  {static_cast<std::size_t>(i)});
    const nn::BatchJets jets(net, points.row(i), problem.needs);
    nn::Jet2 partials = nn::Jet2::zero(n0);
    problem.residual(x, jets.jet(0), &partials);
    Eigen::MatrixXd cot = jets.zero_cotangent();
    cot(0, 0) = partials.value;
    const auto& mask = jets.mask();
    for (std::size_t g = 0; g < mask.grad_dims.size(); ++g)
      cot(jets.grad_row0(g), 0) = partials.grad[mask.grad_dims[g]];
    for (std::size_t h = 0; h < mask.hess_dims.size(); ++h)
      cot(jets.hess_row0(h), 0) = partials.diag_hess[mask.hess_dims[h]];
    copy_row(jets.backward(cot), rows, i);
  }
  return rows;
}

NtkBlocks ntk_blocks(const nn::Network& net, const pde::PdeProblem& problem,
                     const Eigen::MatrixXd& boundary_points, const Eigen::MatrixXd& residual_points) {
  const Eigen::MatrixXd jb = jacobian_rows(net, boundary_points);
  const Eigen::MatrixXd jr = jacobian_rows(net, residual_points, problem);
  NtkBlocks k;
  k.k_uu.noalias() = jb * jb.transpose();
  k.k_ur.noalias() = jb * jr.transpose();
  k.k_rr.noalias() = jr * jr.transpose();
  // Products of a matrix with its own transpose can differ across the
  // diagonal by rounding; mirror the upper triangle.
  k.k_uu = k.k_uu.selfadjointView<Eigen::Upper>();
  k.k_rr = k.k_rr.selfadjointView<Eigen::Upper>();
  const Eigen::Index nb = jb.rows();
  const Eigen::Index nr = jr.rows();
  k.total.resize(nb + nr, nb + nr);
  k.total.topLeftCorner(nb, nb) = k.k_uu;
  k.total.topRightCorner(nb, nr) = k.k_ur;
  k.total.bottomLeftCorner(nr, nb) = k.k_ur.transpose();
  k.total.bottomRightCorner(nr, nr) = k.k_rr;
  return k;
}

double min_eigenvalue(const Eigen::MatrixXd& k) {
  if (k.rows() != k.cols() || k.rows() == 0)
    throw Error(ErrorCode::DimensionMismatch, "min_eigenvalue needs a nonempty square matrix");
  return linalg::sym_eigenvalues(linalg::Matrix::from_eigen(k)).back();
}

bool is_psd(const Eigen::MatrixXd& k, double rel_tol) {
  return min_eigenvalue(k) >= -rel_tol * std::abs(k.trace());
}

// ---------------------------------------------------------------------------

std::string activation_label(const nn::Activation& act) {
  switch (act.tag) {
    case nn::ActivationTag::Tanh:
    case nn::ActivationTag::Identity:
      return act.tag_name();
    default: {
      std::ostringstream os;
      os << act.tag_name() << ':' << act.param;
      return os.str();
    }
  }
}

std::size_t slope_window(std::size_t n_widths) {
  if (n_widths < 2) return n_widths;
  return std::max<std::size_t>(2, (n_widths + 1) / 2);
}

SlopeFit fit_loglog(const std::vector<double>& widths, const std::vector<double>& lambdas) {
  if (widths.size() != lambdas.size())
    throw Error(ErrorCode::DimensionMismatch, "widths and lambdas differ in length");
  SlopeFit fit;
  const std::size_t n = widths.size();
  if (n < 2) return fit;
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(widths[i] > 0.0) || !(lambdas[i] > 0.0)) return fit;
    lx[i] = std::log(widths[i]);
    ly[i] = std::log(lambdas[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx <= 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.defined = true;
  return fit;
}

SweepResult min_eigenvalue_sweep(const SweepConfig& config) {
  if (config.widths.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs at least one width");
  for (std::size_t i = 1; i < config.widths.size(); ++i)
    if (config.widths[i] <= config.widths[i - 1])
      throw Error(ErrorCode::InvalidArgument, "sweep widths must increase", {i});
  if (config.replicas == 0) throw Error(ErrorCode::InvalidArgument, "replicas must be at least 1");
  if (config.activations.empty()) throw Error(ErrorCode::InvalidArgument, "no activations given");
  if (config.n_train == 0 || config.input_dim == 0 || config.second_width == 0)
    throw Error(ErrorCode::InvalidArgument, "sweep sizes must be positive");

  SweepResult result;
  Rng root(config.seed);
  for (std::size_t r = 0; r < config.replicas; ++r) {
    const std::uint64_t data_seed = root.next_u64();
    const Eigen::MatrixXd x = standard_normal(config.n_train, config.input_dim, data_seed);
    for (std::size_t w : config.widths) {
      const std::uint64_t net_seed = root.next_u64();
      const std::vector<std::size_t> widths{config.input_dim, w, config.second_width, 1};
      for (const nn::Activation& act : config.activations) {
        const auto t0 = std::chrono::steady_clock::now();
        const nn::Network net = nn::init_he(widths, act, net_seed);
        const nn::BatchJets jets(net, x, nn::JetMask::none());
        const double lambda = min_eigenvalue(jets.value_ntk());
        result.rows.push_back({activation_label(act), w, r, lambda, seconds_since(t0)});
      }
    }
  }

  const std::size_t nw = config.widths.size();
  const std::size_t first = nw - slope_window(nw);
  auto in_window = [&](std::size_t w) {
    return std::find(config.widths.begin() + static_cast<std::ptrdiff_t>(first), config.widths.end(),
                     w) != config.widths.end();
  };
  for (const nn::Activation& act : config.activations) {
    const std::string label = activation_label(act);
    std::vector<std::vector<double>> xs(config.replicas + 1), ys(config.replicas + 1);
    for (const SweepRow& row : result.rows) {
      if (row.activation != label || !in_window(row.width)) continue;
      for (std::size_t slot : {std::size_t{0}, row.replica + 1}) {
        xs[slot].push_back(static_cast<double>(row.width));
        ys[slot].push_back(row.lambda_min);
      }
    }
    for (std::size_t slot = 0; slot <= config.replicas; ++slot) {
      SlopeFit fit = nw >= 2 ? fit_loglog(xs[slot], ys[slot]) : SlopeFit{};
      fit.activation = label;
      fit.replica = static_cast<int>(slot) - 1;
      result.fits.push_back(fit);
    }
  }
  return result;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "activation,width,replica,lambda_min,seconds\n";
  const auto old = os.precision(17);
  for (const SweepRow& r : rows)
    os << r.activation << ',' << r.width << ',' << r.replica << ',' << r.lambda_min << ','
       << r.seconds << '\n';
  os.precision(old);
}

void write_slope_json(std::ostream& os, const std::vector<SlopeFit>& fits) {
  nlohmann::json out = nlohmann::json::array();
  for (const SlopeFit& f : fits) {
    nlohmann::json j;
    j["activation"] = f.activation;
    j["replica"] = f.replica < 0 ? nlohmann::json("pooled") : nlohmann::json(f.replica);
    j["defined"] = f.defined;
    j["slope"] = f.defined ? nlohmann::json(f.slope) : nlohmann::json(nullptr);
    j["intercept"] = f.defined ? nlohmann::json(f.intercept) : nlohmann::json(nullptr);
    j["r2"] = f.defined ? nlohmann::json(f.r2) : nlohmann::json(nullptr);
    out.push_back(std::move(j));
  }
  os << out.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

double jacobian_operator_norm(const nn::Network& net, std::span<const double> x, std::size_t layers) {
  const std::size_t n0 = net.input_dim();
  if (x.size() != n0) throw Error(ErrorCode::DimensionMismatch, "sample dimension differs from input");
  if (layers == 0) layers = net.depth();
  if (layers > net.depth()) throw Error(ErrorCode::InvalidArgument, "more layers than the network has");

  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n0));
  Eigen::VectorXd z;
  Eigen::MatrixXd jac;  // d z / d x, possibly compressed to a square factor
  bool identity = false;
  if (const auto& rff = net.rff()) {
    const Eigen::VectorXd s = rff->b * xv;
    const Eigen::Index m = s.size();
    z.resize(2 * m);
    z.head(m) = s.array().sin().matrix();
    z.tail(m) = s.array().cos().matrix();
    jac.resize(2 * m, static_cast<Eigen::Index>(n0));
    jac.topRows(m) = s.array().cos().matrix().asDiagonal() * rff->b;
    jac.bottomRows(m) = -(s.array().sin().matrix().asDiagonal() * rff->b);
  } else {
    z = xv;
    identity = true;
  }

  for (std::size_t k = 0; k < layers; ++k) {
    const nn::Layer& layer = net.layer(k);
    const Eigen::MatrixXd a = net.effective_weights(k);
    const Eigen::VectorXd h = a.transpose() * z + layer.bias;
    Eigen::ArrayXXd val, d1;
    activation_eval(layer.activation, h.array(), &val, &d1, nullptr, nullptr);
    z = val.matrix();
    Eigen::MatrixXd next = identity ? Eigen::MatrixXd(a.transpose()) : Eigen::MatrixXd(a.transpose() * jac);
    identity = false;
    next = d1.matrix().asDiagonal() * next;
    // Keep the factor no wider than tall: J = R^T Q^T has J's singular values in R^T.
    if (next.cols() > next.rows()) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(next.transpose());
      const Eigen::Index r = next.rows();
      next = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>().transpose();
    }
    jac = std::move(next);
  }
  if (identity) return 1.0;

  Eigen::MatrixXd gram;
  if (jac.rows() >= jac.cols())
    gram.noalias() = jac.transpose() * jac;
  else
    gram.noalias() = jac * jac.transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

double empirical_lipschitz(const nn::Network& net, const Eigen::MatrixXd& samples, std::size_t layers) {
  if (samples.rows() == 0) throw Error(ErrorCode::InvalidArgument, "need at least one sample");
  require_columns(net, samples);
  double best = 0.0;
  std::vector<double> x(net.input_dim());
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (std::size_t d = 0; d < x.size(); ++d) x[d] = samples(i, static_cast<Eigen::Index>(d));
    best = std::max(best, jacobian_operator_norm(net, x, layers));
  }
  return best;
}

double empirical_lipschitz(const nn::Network& net, std::size_t n_samples, std::uint64_t seed,
                           std::size_t layers) {
  if (n_samples == 0) throw Error(ErrorCode::InvalidArgument, "need at least one sample");
  return empirical_lipschitz(net, standard_normal(n_samples, net.input_dim(), seed), layers);
}

std::vector<LipschitzRow> lipschitz_width_sweep(const LipschitzSweepConfig& config) {
  if (config.widths.empty()) throw Error(ErrorCode::InvalidArgument, "sweep needs at least one width");
  Rng root(config.seed);
  const Eigen::MatrixXd x = standard_normal(config.n_samples, config.input_dim, root.next_u64());
  std::vector<LipschitzRow> rows;
  for (std::size_t w : config.widths) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::size_t> widths{config.input_dim, config.inner_width, config.inner_width, w, 1};
    const nn::Network net =
        nn::init_he(widths, nn::Activation::gaussian(config.gaussian_s), root.next_u64());
    const double lip = empirical_lipschitz(net, x, 3);
    rows.push_back({w, lip, seconds_since(t0)});
  }
  return rows;
}

// ---------------------------------------------------------------------------

LossGap ntk_loss_gap(const nn::Network& net, const Eigen::MatrixXd& points,
                     const Eigen::VectorXd& targets) {
  if (points.rows() == 0) throw Error(ErrorCode::InvalidArgument, "boundary sample is empty");
  if (targets.size() != points.rows())
    throw Error(ErrorCode::DimensionMismatch, "targets differ in length from points");
  const Eigen::MatrixXd j = jacobian_rows(net, points);
  const nn::BatchJets jets(net, points, nn::JetMask::none());
  const Eigen::VectorXd r = jets.value().col(0) - targets;

  LossGap gap;
  gap.loss = 0.5 * r.squaredNorm();
  const Eigen::VectorXd grad = j.transpose() * r;
  gap.grad_norm_sq = grad.squaredNorm();
  Eigen::MatrixXd k = j * j.transpose();
  k = k.selfadjointView<Eigen::Upper>();
  gap.lambda_min = min_eigenvalue(k);
  gap.bound = 2.0 * gap.lambda_min * gap.loss;
  // Repeated points make K singular and lambda_min rounding noise around
  // zero; a non-positive bound is met trivially.
  if (gap.bound > 0.0)
    gap.ratio = gap.grad_norm_sq / gap.bound;
  else
    gap.ratio = gap.grad_norm_sq == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return gap;
}

LossGap ntk_loss_gap(const nn::Network& net, const pde::BoundarySample& boundary) {
  return ntk_loss_gap(net, boundary.points, boundary.targets);
}

}  // namespace pinn::ntk
