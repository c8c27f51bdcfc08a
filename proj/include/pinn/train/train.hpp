#pragma once

#include "pinn/nn/network.hpp"
#include "pinn/pde/pde.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace pinn::train {

struct LossParts {
  double total = 0.0;
  double boundary = 0.0;
  double residual = 0.0;
};

/// L_b = 1/(2 N_b) sum (u - g)^2, L_r = 1/(2 N_r) sum r^2, total = L_b + L_r.
/// An empty part contributes zero; at least one part must be nonempty.
LossParts composite_loss(const nn::Network& net, const pde::PdeProblem& problem,
                         const pde::SampleSet& samples);

/// Loss and its parameter gradient (equilibration factors held fixed).
struct LossGradient {
  LossParts loss;
  nn::ParamGradient grad;
};
LossGradient loss_and_gradient(const nn::Network& net, const pde::PdeProblem& problem,
                               const pde::SampleSet& samples);

struct TrainConfig {
  std::size_t epochs = 0;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool equilibrate_every_step = true;
  std::size_t metric_stride = 100;
  // Optional per-record extras.
  bool track_condition = true;   // kappa per layer
  bool track_test_error = true;  // needs an exact solution
  bool monitor_ntk_gap = false;  // gradient-vs-NTK inequality on the boundary batch
  bool record_wall_time = true;  // false writes 0 so metric files are reproducible

  /// Throws InvalidArgument on out-of-range fields.
  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  static AdamState zeros(std::size_t n) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
};

/// One bias-corrected Adam update of theta in place.
void adam_step(std::span<double> theta, AdamState& state, std::span<const double> grad,
               const TrainConfig& config);
/// Same on a network's parameters.
void adam_step(nn::Network& net, AdamState& state, const nn::ParamGradient& grad,
               const TrainConfig& config);

struct LayerConditions {
  std::vector<double> raw;        // kappa(W_k^T); +inf when singular
  std::vector<double> effective;  // kappa(P_k W_k^T) on equilibrated layers, otherwise raw
};

LayerConditions weight_condition_track(const nn::Network& net);

struct RunRecord {
  std::size_t epoch = 0;
  double loss_total = 0.0;
  double loss_boundary = 0.0;
  double loss_residual = 0.0;
  double l2_train_error = 0.0;  // the training objective, loss_total
  double rel_l2_test_error = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> per_layer_condition;  // effective kappa per layer
  double wall_seconds = 0.0;
  std::optional<double> ntk_gap_slack;
};

using RecordSink = std::function<void(const RunRecord&)>;

/// Full-batch Adam. A record is emitted after every metric_stride-th step and
/// after the last one. If a step produces a non-finite loss or gradient, the
/// network is restored to the parameters before that step and
/// Error(NonFiniteLoss, {epoch}) is thrown.
std::vector<RunRecord> train(nn::Network& net, const pde::PdeProblem& problem,
                             const pde::SampleSet& samples, const TrainConfig& config,
                             const RecordSink& sink = {});

struct TestErrors {
  double l2_abs = 0.0;  // ||u_net - u_exact||_2 over grid nodes
  double l2_rel = 0.0;  // l2_abs / ||u_exact||_2
};

TestErrors test_errors(const nn::Network& net, const pde::ReferenceGrid& grid);
/// Uniform grid with counts[d] nodes per axis.
TestErrors test_errors(const nn::Network& net, const pde::PdeProblem& problem,
                       std::span<const std::size_t> counts);
/// On the problem's default reference grid.
TestErrors test_errors(const nn::Network& net, const pde::PdeProblem& problem);

/// "epoch,loss_total,loss_boundary,loss_residual,l2_train,rel_l2_test,kappa_l1,...,seconds"
void write_metrics_header(std::ostream& os, std::size_t layers);
void write_metrics_row(std::ostream& os, const RunRecord& r);

// ---------------------------------------------------------------------------
// Curvature.

/// Loss at theta; fills grad (same length as theta) when non-null.
using LossClosure = std::function<double(std::span<const double> theta, std::vector<double>* grad)>;

/// Composite loss as a function of the flattened parameters of a copy of net.
/// Equilibration factors stay at their values in net.
LossClosure make_loss_closure(const nn::Network& net, const pde::PdeProblem& problem,
                              const pde::SampleSet& samples);

/// 1e-3 (1 + ||theta||_inf).
double default_hvp_step(std::span<const double> theta);

/// (grad L(theta + h v) - grad L(theta - h v)) / (2h). Requires ||v|| = 1 and
/// h > 0.
std::vector<double> hessian_vector(std::span<const double> theta, const LossClosure& loss,
                                   std::span<const double> v, double h);

struct LandscapePoint {
  double alpha;
  double beta;
  double loss;
};

struct LandscapeSlice {
  double center_loss = 0.0;
  std::vector<double> direction1;
  std::vector<double> direction2;
  double eig1 = 0.0;
  double eig2 = 0.0;
  /// eig1 over the smallest positive Ritz value seen; NaN if none.
  double extremal_ratio = std::numeric_limits<double>::quiet_NaN();
  std::vector<LandscapePoint> grid;  // alpha-major
};

struct LandscapeConfig {
  double half_width = 1.0;
  std::size_t grid_points = 21;  // odd
  std::size_t lanczos_iters = 20;
  std::uint64_t seed = 0;
  double hvp_step = 0.0;  // 0 picks default_hvp_step
};

/// Loss on theta + a v1 + b v2 over a square grid, v1 and v2 the top two
/// Hessian eigenvectors from Lanczos on finite-difference Hessian products.
LandscapeSlice landscape_slice(std::span<const double> theta, const LossClosure& loss,
                               const LandscapeConfig& config);

/// "alpha,beta,loss" rows.
void write_landscape_csv(std::ostream& os, const LandscapeSlice& s);
/// {eig1, eig2, center_loss, extremal_ratio}
void write_landscape_json(std::ostream& os, const LandscapeSlice& s);

}  // namespace pinn::train
