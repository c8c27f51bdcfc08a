#include "pinn/train/train.hpp"

#include "pinn/error.hpp"
#include "pinn/linalg/decomp.hpp"
#include "pinn/nn/batch.hpp"
#include "pinn/ntk/ntk.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <memory>
#include <ostream>

namespace pinn::train {

namespace {

constexpr Eigen::Index kEvalChunk = 4096;

bool all_finite(const nn::ParamGradient& g) {
  for (const auto& w : g.weights)
    if (!w.allFinite()) return false;
  for (const auto& b : g.bias)
    if (!b.allFinite()) return false;
  return true;
}

void check_samples(const nn::Network& net, const pde::PdeProblem& problem, const pde::SampleSet& s) {
  if (net.output_dim() != 1) throw Error(ErrorCode::NonScalarOutput, "PINN training needs n_L = 1");
  if (net.input_dim() != problem.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "network input differs from problem dimension");
  if (s.boundary.points.rows() == 0 && s.residual_points.rows() == 0)
    throw Error(ErrorCode::InvalidArgument, "no boundary or residual samples");
  if (s.boundary.targets.size() != s.boundary.points.rows())
    throw Error(ErrorCode::DimensionMismatch, "boundary targets differ in length from points");
}

// Shared by the loss-only and loss-plus-gradient paths so both sum in the
// same order.
LossParts evaluate(const nn::Network& net, const pde::PdeProblem& problem, const pde::SampleSet& s,
                   nn::ParamGradient* grad) {
  check_samples(net, problem, s);
  LossParts loss;
  const Eigen::Index nb = s.boundary.points.rows();
  if (nb > 0) {
    const nn::BatchJets jets(net, s.boundary.points, nn::JetMask::none());
    const Eigen::VectorXd r = jets.value().col(0) - s.boundary.targets;
    loss.boundary = r.squaredNorm() / (2.0 * static_cast<double>(nb));
    if (grad) *grad += jets.backward(r / static_cast<double>(nb));
  }
  const Eigen::Index nr = s.residual_points.rows();
  if (nr > 0) {
    const nn::BatchJets jets(net, s.residual_points, problem.needs);
    const std::size_t n0 = net.input_dim();
    const auto& mask = jets.mask();
    Eigen::MatrixXd cot;
    if (grad) cot = jets.zero_cotangent();
    std::vector<double> x(n0);
    nn::Jet2 partials = nn::Jet2::zero(n0);
    double sum = 0.0;
    const double scale = 1.0 / static_cast<double>(nr);
    for (Eigen::Index i = 0; i < nr; ++i) {
      for (std::size_t d = 0; d < n0; ++d) x[d] = s.residual_points(i, static_cast<Eigen::Index>(d));
      const double r = problem.residual(x, jets.jet(i), grad ? &partials : nullptr);
      sum += r * r;
      if (!grad) continue;
      const double c = r * scale;
      cot(i, 0) = c * partials.value;
      for (std::size_t g = 0; g < mask.grad_dims.size(); ++g)
        cot(jets.grad_row0(g) + i, 0) = c * partials.grad[mask.grad_dims[g]];
      for (std::size_t h = 0; h < mask.hess_dims.size(); ++h)
        cot(jets.hess_row0(h) + i, 0) = c * partials.diag_hess[mask.hess_dims[h]];
    }
    loss.residual = sum / (2.0 * static_cast<double>(nr));
    if (grad) *grad += jets.backward(cot);
  }
  loss.total = loss.boundary + loss.residual;
  return loss;
}

Eigen::VectorXd evaluate_values(const nn::Network& net, const Eigen::MatrixXd& points) {
  Eigen::VectorXd u(points.rows());
  for (Eigen::Index start = 0; start < points.rows(); start += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, points.rows() - start);
    const nn::BatchJets jets(net, points.middleRows(start, n), nn::JetMask::none());
    u.segment(start, n) = jets.value().col(0);
  }
  return u;
}

double kappa_or_inf(const Eigen::MatrixXd& w) {
  try {
    return linalg::condition_number(nn::to_matrix(w));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SingularMatrix) return std::numeric_limits<double>::infinity();
    throw;
  }
}

}  // namespace

LossParts composite_loss(const nn::Network& net, const pde::PdeProblem& problem,
                         const pde::SampleSet& samples) {
  return evaluate(net, problem, samples, nullptr);
}

LossGradient loss_and_gradient(const nn::Network& net, const pde::PdeProblem& problem,
                               const pde::SampleSet& samples) {
  LossGradient out{{}, nn::ParamGradient::zeros_like(net)};
  out.loss = evaluate(net, problem, samples, &out.grad);
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw Error(ErrorCode::InvalidArgument, "Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "adam_eps must be positive");
  if (metric_stride == 0) throw Error(ErrorCode::InvalidArgument, "metric_stride must be at least 1");
}

void adam_step(std::span<double> theta, AdamState& state, std::span<const double> grad,
               const TrainConfig& config) {
  if (grad.size() != theta.size() || state.m.size() != theta.size() || state.v.size() != theta.size())
    throw Error(ErrorCode::DimensionMismatch, "Adam buffers differ in length from the parameters");
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    theta[i] -= config.learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + config.adam_eps);
  }
}

void adam_step(nn::Network& net, AdamState& state, const nn::ParamGradient& grad,
               const TrainConfig& config) {
  std::vector<double> theta = net.parameters();
  const std::vector<double> g = grad.flatten();
  adam_step(theta, state, g, config);
  net.set_parameters(theta);
}

LayerConditions weight_condition_track(const nn::Network& net) {
  LayerConditions c;
  for (std::size_t k = 0; k < net.depth(); ++k) {
    const double raw = kappa_or_inf(net.layer(k).weights);
    c.raw.push_back(raw);
    c.effective.push_back(net.is_equilibrated_layer(k) ? kappa_or_inf(net.effective_weights(k)) : raw);
  }
  return c;
}

std::vector<RunRecord> train(nn::Network& net, const pde::PdeProblem& problem,
                             const pde::SampleSet& samples, const TrainConfig& config,
                             const RecordSink& sink) {
  config.validate();
  check_samples(net, problem, samples);
  std::vector<RunRecord> records;
  if (config.epochs == 0) return records;

  const auto t0 = std::chrono::steady_clock::now();
  AdamState state = AdamState::zeros(net.parameter_count());
  nn::Network previous = net;
  const bool test_error = config.track_test_error && problem.has_exact();

  auto abort_at = [&](std::size_t epoch) {
    net = previous;
    throw Error(ErrorCode::NonFiniteLoss, "loss became non-finite at epoch " + std::to_string(epoch),
                {epoch});
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    LossGradient lg = loss_and_gradient(net, problem, samples);
    if (!std::isfinite(lg.loss.total) || !all_finite(lg.grad)) abort_at(epoch);
    previous = net;
    adam_step(net, state, lg.grad, config);
    if (config.equilibrate_every_step && net.equilibrate_inner()) nn::equilibrate_weights(net);

    if (epoch % config.metric_stride != 0 && epoch != config.epochs) continue;
    RunRecord rec;
    rec.epoch = epoch;
    const LossParts loss = composite_loss(net, problem, samples);
    if (!std::isfinite(loss.total)) abort_at(epoch);
    rec.loss_total = loss.total;
    rec.loss_boundary = loss.boundary;
    rec.loss_residual = loss.residual;
    rec.l2_train_error = loss.total;
    if (test_error) rec.rel_l2_test_error = test_errors(net, problem).l2_rel;
    if (config.track_condition) rec.per_layer_condition = weight_condition_track(net).effective;
    if (config.monitor_ntk_gap && samples.boundary.points.rows() > 0)
      rec.ntk_gap_slack = ntk::ntk_loss_gap(net, samples.boundary).slack();
    if (config.record_wall_time)
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (sink) sink(rec);
    records.push_back(std::move(rec));
  }
  return records;
}

TestErrors test_errors(const nn::Network& net, const pde::ReferenceGrid& grid) {
  if (net.output_dim() != 1) throw Error(ErrorCode::NonScalarOutput, "test error needs n_L = 1");
  const Eigen::VectorXd u = evaluate_values(net, grid.points);
  TestErrors e;
  e.l2_abs = (u - grid.u).norm();
  e.l2_rel = e.l2_abs / grid.u.norm();
  return e;
}

TestErrors test_errors(const nn::Network& net, const pde::PdeProblem& problem,
                       std::span<const std::size_t> counts) {
  return test_errors(net, pde::make_reference(problem, counts));
}

TestErrors test_errors(const nn::Network& net, const pde::PdeProblem& problem) {
  return test_errors(net, pde::default_reference(problem));
}

void write_metrics_header(std::ostream& os, std::size_t layers) {
  os << "epoch,loss_total,loss_boundary,loss_residual,l2_train,rel_l2_test";
  for (std::size_t k = 1; k <= layers; ++k) os << ",kappa_l" << k;
  os << ",seconds\n";
}

void write_metrics_row(std::ostream& os, const RunRecord& r) {
  const auto old = os.precision(17);
  os << r.epoch << ',' << r.loss_total << ',' << r.loss_boundary << ',' << r.loss_residual << ','
     << r.l2_train_error << ',' << r.rel_l2_test_error;
  for (double k : r.per_layer_condition) os << ',' << k;
  os << ',' << r.wall_seconds << '\n';
  os.precision(old);
}

// ---------------------------------------------------------------------------

LossClosure make_loss_closure(const nn::Network& net, const pde::PdeProblem& problem,
                              const pde::SampleSet& samples) {
  auto work = std::make_shared<nn::Network>(net);
  return [work, problem, samples](std::span<const double> theta, std::vector<double>* grad) {
    work->set_parameters(theta);
    if (!grad) return composite_loss(*work, problem, samples).total;
    LossGradient lg = loss_and_gradient(*work, problem, samples);
    *grad = lg.grad.flatten();
    return lg.loss.total;
  };
}

double default_hvp_step(std::span<const double> theta) {
  double m = 0.0;
  for (double t : theta) m = std::max(m, std::abs(t));
  return 1e-3 * (1.0 + m);
}

std::vector<double> hessian_vector(std::span<const double> theta, const LossClosure& loss,
                                   std::span<const double> v, double h) {
  if (v.size() != theta.size()) throw Error(ErrorCode::DimensionMismatch, "direction length differs");
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be positive");
  double nrm = 0.0;
  for (double x : v) nrm += x * x;
  if (std::abs(std::sqrt(nrm) - 1.0) > 1e-8) throw Error(ErrorCode::InvalidArgument, "direction must be a unit vector");

  std::vector<double> plus(theta.begin(), theta.end()), minus(theta.begin(), theta.end());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    plus[i] += h * v[i];
    minus[i] -= h * v[i];
  }
  std::vector<double> gp, gm;
  const double lp = loss(plus, &gp);
  const double lm = loss(minus, &gm);
  std::vector<double> hv(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) hv[i] = (gp[i] - gm[i]) / (2.0 * h);
  bool finite = std::isfinite(lp) && std::isfinite(lm);
  for (double x : hv) finite = finite && std::isfinite(x);
  if (!finite) throw Error(ErrorCode::NonFiniteLoss, "non-finite gradient in Hessian product");
  return hv;
}

LandscapeSlice landscape_slice(std::span<const double> theta, const LossClosure& loss,
                               const LandscapeConfig& config) {
  const std::size_t n = config.grid_points;
  if (n == 0 || n % 2 == 0) throw Error(ErrorCode::InvalidArgument, "grid_points must be odd");
  if (!(config.half_width > 0.0)) throw Error(ErrorCode::InvalidArgument, "half_width must be positive");
  const std::size_t dim = theta.size();
  if (dim < 2) throw Error(ErrorCode::InvalidArgument, "need at least two parameters");
  const double h = config.hvp_step > 0.0 ? config.hvp_step : default_hvp_step(theta);

  const linalg::SymmetricOperator apply = [&](std::span<const double> in, std::span<double> out) {
    double nrm = 0.0;
    for (double x : in) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    std::vector<double> unit(in.begin(), in.end());
    for (double& x : unit) x /= nrm;
    const std::vector<double> hv = hessian_vector(theta, loss, unit, h);
    for (std::size_t i = 0; i < dim; ++i) out[i] = hv[i] * nrm;
  };
  const std::size_t iters = std::clamp<std::size_t>(config.lanczos_iters, 2, dim);
  const linalg::LanczosResult lz = linalg::lanczos_extremal(apply, dim, 2, iters, config.seed);

  LandscapeSlice s;
  s.eig1 = lz.top[0];
  s.eig2 = lz.top[1];
  Eigen::Map<const Eigen::VectorXd> a(lz.top_vectors[0].data(), static_cast<Eigen::Index>(dim));
  Eigen::Map<const Eigen::VectorXd> b(lz.top_vectors[1].data(), static_cast<Eigen::Index>(dim));
  Eigen::VectorXd v1 = a.normalized();
  Eigen::VectorXd v2 = b - v1.dot(b) * v1;
  v2 -= v1.dot(v2) * v1;
  v2.normalize();
  s.direction1.assign(v1.data(), v1.data() + dim);
  s.direction2.assign(v2.data(), v2.data() + dim);

  double smallest_positive = std::numeric_limits<double>::infinity();
  for (const auto* list : {&lz.top, &lz.bottom})
    for (double x : *list)
      if (x > 0.0) smallest_positive = std::min(smallest_positive, x);
  if (std::isfinite(smallest_positive)) s.extremal_ratio = s.eig1 / smallest_positive;

  s.center_loss = loss(theta, nullptr);
  const double half = static_cast<double>(n - 1);
  std::vector<double> point(dim);
  for (std::size_t i = 0; i < n; ++i) {
    // Written so the middle node is exactly zero.
    const double alpha = config.half_width * (2.0 * static_cast<double>(i) - half) / half;
    for (std::size_t j = 0; j < n; ++j) {
      const double beta = config.half_width * (2.0 * static_cast<double>(j) - half) / half;
      double value;
      if (alpha == 0.0 && beta == 0.0) {
        value = s.center_loss;
      } else {
        for (std::size_t p = 0; p < dim; ++p) point[p] = theta[p] + alpha * v1[static_cast<Eigen::Index>(p)] + beta * v2[static_cast<Eigen::Index>(p)];
        value = loss(point, nullptr);
      }
      s.grid.push_back({alpha, beta, value});
    }
  }
  return s;
}

void write_landscape_csv(std::ostream& os, const LandscapeSlice& s) {
  const auto old = os.precision(17);
  os << "alpha,beta,loss\n";
  for (const LandscapePoint& p : s.grid) os << p.alpha << ',' << p.beta << ',' << p.loss << '\n';
  os.precision(old);
}

void write_landscape_json(std::ostream& os, const LandscapeSlice& s) {
  nlohmann::json j;
  j["eig1"] = s.eig1;
  j["eig2"] = s.eig2;
  j["center_loss"] = s.center_loss;
  j["extremal_ratio"] = std::isfinite(s.extremal_ratio) ? nlohmann::json(s.extremal_ratio) : nlohmann::json(nullptr);
  os << j.dump(2) << '\n';
}

}  // namespace pinn::train
