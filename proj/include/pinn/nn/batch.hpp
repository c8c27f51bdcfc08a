#pragma once

#include "pinn/nn/network.hpp"

#include <Eigen/Core>

#include <vector>

namespace pinn::nn {

/// Which input derivatives a batch evaluation carries. Every entry of
/// hess_dims must also appear in grad_dims.
struct JetMask {
  std::vector<std::size_t> grad_dims;
  std::vector<std::size_t> hess_dims;

  static JetMask none() { return {}; }
  static JetMask all(std::size_t input_dim);
  std::size_t blocks() const { return 1 + grad_dims.size() + hess_dims.size(); }
};

/// Batched second-order forward pass with cached intermediates for reverse
/// accumulation.
///
/// All per-point quantities live in "stacks": matrices with blocks() * B
/// rows. Block 0 holds values, blocks 1..G hold d/dx_d for grad_dims[g], and
/// the remaining blocks hold d2/dx_d^2 for hess_dims[h]. Each layer is a
/// single GEMM over the whole stack.
///
/// The network must outlive the BatchJets that reads it.
class BatchJets {
 public:
  BatchJets(const Network& net, const Eigen::MatrixXd& points, JetMask mask);

  Eigen::Index batch() const noexcept { return batch_; }
  const JetMask& mask() const noexcept { return mask_; }

  /// Output stack (blocks() * B rows, n_L columns).
  const Eigen::MatrixXd& output() const noexcept { return z_.back(); }
  auto value() const { return output().topRows(batch_); }
  auto grad_block(std::size_t slot) const { return output().middleRows(row0(1 + slot), batch_); }
  auto hess_block(std::size_t slot) const {
    return output().middleRows(row0(1 + mask_.grad_dims.size() + slot), batch_);
  }
  /// Jet of output `out` at point i; derivatives outside the mask are zero.
  Jet2 jet(Eigen::Index i, Eigen::Index out = 0) const;

  /// Zero cotangent stack shaped like output().
  Eigen::MatrixXd zero_cotangent() const;
  Eigen::Index row0(std::size_t block) const { return static_cast<Eigen::Index>(block) * batch_; }
  /// Row offset of the first-order block for grad slot g.
  Eigen::Index grad_row0(std::size_t slot) const { return row0(1 + slot); }
  Eigen::Index hess_row0(std::size_t slot) const { return row0(1 + mask_.grad_dims.size() + slot); }

  /// Reverse accumulation of sum over the stack of cotangent .* output.
  ParamGradient backward(const Eigen::MatrixXd& output_cotangent) const;

  /// Value-mode empirical NTK over the batch, K_ij = <du(x_i)/dtheta,
  /// du(x_j)/dtheta>, assembled layer by layer from Gram products of cached
  /// activations and per-point deltas without forming the Jacobian.
  Eigen::MatrixXd value_ntk() const;

 private:
  const Network* net_;
  JetMask mask_;
  Eigen::Index batch_;
  std::vector<std::size_t> hess_grad_slot_;  // grad slot of each hess dim
  std::vector<Eigen::MatrixXd> z_;   // z_[k]: input stack of layer k; z_.back(): output
  std::vector<Eigen::MatrixXd> h_;   // pre-activation stacks
  std::vector<Eigen::ArrayXXd> d1_, d2_, d3_;  // activation derivatives at value rows
};

}  // namespace pinn::nn
