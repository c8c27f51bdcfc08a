#pragma once

#include "pinn/nn/activation.hpp"
#include "pinn/nn/network.hpp"
#include "pinn/pde/pde.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pinn::ntk {

/// Row i is the flattened parameter gradient (network parameter order) of
/// u(x_i). Output must be scalar.
Eigen::MatrixXd jacobian_rows(const nn::Network& net, const Eigen::MatrixXd& points);

/// Row i is the flattened parameter gradient of the residual r(x_i), seeded by
/// the residual's partials w.r.t. the network jet. Points must lie in the
/// problem's domain.
Eigen::MatrixXd jacobian_rows(const nn::Network& net, const Eigen::MatrixXd& points,
                              const pde::PdeProblem& problem);

struct NtkBlocks {
  Eigen::MatrixXd k_uu;   // N_b x N_b
  Eigen::MatrixXd k_ur;   // N_b x N_r
  Eigen::MatrixXd k_rr;   // N_r x N_r
  Eigen::MatrixXd total;  // [[k_uu, k_ur], [k_ur^T, k_rr]]
};

NtkBlocks ntk_blocks(const nn::Network& net, const pde::PdeProblem& problem,
                     const Eigen::MatrixXd& boundary_points, const Eigen::MatrixXd& residual_points);

/// Smallest eigenvalue of a symmetric matrix (cyclic Jacobi).
double min_eigenvalue(const Eigen::MatrixXd& k);

/// min eigenvalue >= -rel_tol * trace.
bool is_psd(const Eigen::MatrixXd& k, double rel_tol = 1e-8);

// ---------------------------------------------------------------------------
// Width sweep of lambda_min(K_uu) at initialization.

struct SweepConfig {
  std::vector<std::size_t> widths;  // n_1 values, strictly increasing
  std::size_t n_train = 100;        // N
  std::size_t input_dim = 10;       // n_0
  std::size_t second_width = 100;   // n_2, the other hidden layer
  std::vector<nn::Activation> activations;
  std::uint64_t seed = 0;
  std::size_t replicas = 1;
};

struct SweepRow {
  std::string activation;
  std::size_t width;
  std::size_t replica;
  double lambda_min;
  double seconds;
};

/// Least-squares line through (log width, log lambda_min). `replica` is -1
/// for the fit pooled over replicas.
struct SlopeFit {
  std::string activation;
  int replica = -1;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  bool defined = false;  // false with fewer than two distinct widths
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SlopeFit> fits;  // pooled fit then one per replica, per activation
};

/// Short label used in tables, e.g. "gaussian:0.1" or "tanh".
std::string activation_label(const nn::Activation& act);

/// Widths the slope is fitted over: the last max(2, ceil(n/2)) entries.
std::size_t slope_window(std::size_t n_widths);

/// Fit over (width, lambda) pairs; non-positive lambdas make the fit undefined.
SlopeFit fit_loglog(const std::vector<double>& widths, const std::vector<double>& lambdas);

/// Each replica draws one N x n_0 standard-normal data set and one set of
/// network seeds shared by every activation, so activations are compared on
/// identical inputs and identical initial weights.
SweepResult min_eigenvalue_sweep(const SweepConfig& config);

/// CSV with header "activation,width,replica,lambda_min,seconds".
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
/// JSON array of {activation, replica, slope, intercept, r2, defined};
/// undefined fits carry null numbers.
void write_slope_json(std::ostream& os, const std::vector<SlopeFit>& fits);

// ---------------------------------------------------------------------------
// Empirical Lipschitz constant.

/// Largest singular value of d f_k / dx at x, where f_k is the post-activation
/// output of the first `layers` layers (0 means the full network).
double jacobian_operator_norm(const nn::Network& net, std::span<const double> x,
                              std::size_t layers = 0);

/// max over the rows of `samples` of jacobian_operator_norm.
double empirical_lipschitz(const nn::Network& net, const Eigen::MatrixXd& samples,
                           std::size_t layers = 0);
/// Same over n_samples standard-normal inputs drawn from seed.
double empirical_lipschitz(const nn::Network& net, std::size_t n_samples, std::uint64_t seed,
                           std::size_t layers = 0);

struct LipschitzSweepConfig {
  std::vector<std::size_t> widths;   // n_3 values
  std::size_t input_dim = 200;       // n_0
  std::size_t inner_width = 64;      // n_1 = n_2
  double gaussian_s = 0.1;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
};

struct LipschitzRow {
  std::size_t width;
  double lipschitz;
  double seconds;
};

/// n_0 - n_1 - n_2 - n_3 - 1 Gaussian networks; reports the constant of the
/// three-layer feature map f_3 for each n_3.
std::vector<LipschitzRow> lipschitz_width_sweep(const LipschitzSweepConfig& config);

// ---------------------------------------------------------------------------
// Gradient norm against 2 lambda_min(K_uu) L for the boundary loss
// L = 1/2 sum (u(x_i) - g_i)^2.

struct LossGap {
  double loss = 0.0;
  double lambda_min = 0.0;
  double grad_norm_sq = 0.0;  // ||dL/dtheta||^2
  double bound = 0.0;         // 2 lambda_min L
  double ratio = 1.0;         // grad_norm_sq / bound; 1 when both vanish, inf when only the bound is <= 0
  double slack() const { return grad_norm_sq - bound; }
};

LossGap ntk_loss_gap(const nn::Network& net, const Eigen::MatrixXd& points,
                     const Eigen::VectorXd& targets);
LossGap ntk_loss_gap(const nn::Network& net, const pde::BoundarySample& boundary);

}  // namespace pinn::ntk
