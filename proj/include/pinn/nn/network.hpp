#pragma once

#include "pinn/linalg/matrix.hpp"
#include "pinn/nn/activation.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace pinn::nn {

/// Value, input gradient and diagonal input Hessian of one scalar.
struct Jet2 {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> diag_hess;

  static Jet2 zero(std::size_t input_dim) {
    return {0.0, std::vector<double>(input_dim, 0.0), std::vector<double>(input_dim, 0.0)};
  }
};

/// Weights over the components of a Jet2, used to seed reverse accumulation.
using JetCotangent = Jet2;

struct Layer {
  Eigen::MatrixXd weights;  // n_in x n_out; the layer computes weights^T z + bias
  Eigen::VectorXd bias;     // n_out
  Activation activation;
  Eigen::VectorXd p_diag;   // row-equilibration of weights^T; empty unless equilibrated
};

/// Fixed random Fourier feature map x -> [sin(Bx); cos(Bx)].
struct RffEmbedding {
  Eigen::MatrixXd b;  // m x n0
  double scale = 1.0;
};

struct NetworkOptions {
  bool equilibrate_inner = false;
  std::size_t rff_features = 0;  // 0 disables the embedding
  double rff_scale = 1.0;
};

class Network {
 public:
  Network(std::vector<Layer> layers, bool equilibrate_inner, std::optional<RffEmbedding> rff,
          std::size_t input_dim);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers_.back().bias.size()); }
  std::size_t depth() const noexcept { return layers_.size(); }
  /// (n_0, n_1, ..., n_L); n_0 is the raw input dimension even with RFF.
  std::vector<std::size_t> widths() const;

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Layer& layer(std::size_t k) const { return layers_.at(k); }
  bool equilibrate_inner() const noexcept { return equilibrate_inner_; }
  const std::optional<RffEmbedding>& rff() const noexcept { return rff_; }

  /// True for the inner layers 2..L-1 (1-based) of an equilibrated network.
  bool is_equilibrated_layer(std::size_t k) const noexcept {
    return equilibrate_inner_ && k >= 1 && k + 1 < layers_.size();
  }
  /// The matrix the layer actually applies: weights, or weights * diag(p).
  Eigen::MatrixXd effective_weights(std::size_t k) const;

  std::size_t parameter_count() const;
  /// Flattened parameters: per layer, weights row-major then bias.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> theta);

  /// Mutable access for optimizers; callers keep shapes intact.
  Layer& mutable_layer(std::size_t k) { return layers_.at(k); }

  friend bool operator==(const Network& a, const Network& b);

 private:
  std::vector<Layer> layers_;
  bool equilibrate_inner_;
  std::optional<RffEmbedding> rff_;
  std::size_t input_dim_;
};

/// Per-layer parameter gradients, shaped like the network.
struct ParamGradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;

  static ParamGradient zeros_like(const Network& net);
  std::size_t size() const;
  std::vector<double> flatten() const;
  ParamGradient& operator+=(const ParamGradient& other);
  ParamGradient& operator*=(double c);
  double squared_norm() const;
};

/// He initialization: weights ~ N(0, 2 / fan_in), zero biases. The output
/// layer is linear. widths = (n_0, hidden..., n_L).
Network init_he(std::span<const std::size_t> widths, const Activation& activation, std::uint64_t seed,
                const NetworkOptions& options = {});

/// Embeds x as [sin(Bx); cos(Bx)]. With jets, each output carries its
/// analytic input gradient and diagonal Hessian; otherwise only values.
std::vector<Jet2> rff_embed(std::span<const double> x, const Eigen::MatrixXd& b, bool jets);

std::vector<double> forward(const Network& net, std::span<const double> x);

/// Second-order forward propagation in the inputs: one Jet2 per output.
std::vector<Jet2> forward_jet(const Network& net, std::span<const double> x);

/// Gradient w.r.t. all parameters of
///   c.value * u + sum_i c.grad[i] * du/dx_i + sum_i c.diag_hess[i] * d2u/dx_i^2
/// for output 0. Equilibration factors are held constant.
ParamGradient grad_params(const Network& net, std::span<const double> x, const JetCotangent& c);

/// Recomputes p_diag[k][i] = 1 / ||(W_k^T)_i||_2 for every inner layer.
void equilibrate_weights(Network& net);

/// Row-major copy of a weight matrix (n_in x n_out).
linalg::Matrix to_matrix(const Eigen::MatrixXd& m);

/// Self-describing checkpoint text: header lines then each layer's weights
/// and bias in the matrix text format.
void save_checkpoint(std::ostream& os, const Network& net);
Network load_checkpoint(std::istream& is);

}  // namespace pinn::nn
