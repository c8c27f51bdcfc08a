#include "pinn/nn/batch.hpp"

#include "pinn/error.hpp"

#include <algorithm>

namespace pinn::nn {

JetMask JetMask::all(std::size_t input_dim) {
  JetMask m;
  for (std::size_t d = 0; d < input_dim; ++d) {
    m.grad_dims.push_back(d);
    m.hess_dims.push_back(d);
  }
  return m;
}

BatchJets::BatchJets(const Network& net, const Eigen::MatrixXd& points, JetMask mask)
    : net_(&net), mask_(std::move(mask)), batch_(points.rows()) {
  const auto n0 = static_cast<Eigen::Index>(net.input_dim());
  if (points.cols() != n0) {
    throw Error(ErrorCode::DimensionMismatch, "points have " + std::to_string(points.cols()) +
                                                  " columns, network expects " + std::to_string(n0));
  }
  if (batch_ == 0) throw Error(ErrorCode::DimensionMismatch, "empty batch");
  for (std::size_t d : mask_.grad_dims)
    if (d >= net.input_dim()) throw Error(ErrorCode::DimensionMismatch, "mask dimension out of range");
  for (std::size_t d : mask_.hess_dims) {
    const auto it = std::find(mask_.grad_dims.begin(), mask_.grad_dims.end(), d);
    if (it == mask_.grad_dims.end())
      throw Error(ErrorCode::InvalidArgument, "second derivative requested without first derivative");
    hess_grad_slot_.push_back(static_cast<std::size_t>(it - mask_.grad_dims.begin()));
  }

  const Eigen::Index B = batch_;
  const Eigen::Index S = static_cast<Eigen::Index>(mask_.blocks()) * B;
  const std::size_t G = mask_.grad_dims.size();

  // Input stack.
  Eigen::MatrixXd z0;
  if (const auto& rff = net.rff()) {
    const Eigen::Index m = rff->b.rows();
    const Eigen::ArrayXXd s = (points * rff->b.transpose()).array();  // B x m
    const Eigen::ArrayXXd sn = s.sin();
    const Eigen::ArrayXXd cs = s.cos();
    z0.setZero(S, 2 * m);
    z0.topLeftCorner(B, m) = sn.matrix();
    z0.topRightCorner(B, m) = cs.matrix();
    for (std::size_t g = 0; g < G; ++g) {
      const Eigen::ArrayXd bd = rff->b.col(static_cast<Eigen::Index>(mask_.grad_dims[g])).array();
      const Eigen::Index r = row0(1 + g);
      z0.block(r, 0, B, m) = (cs.rowwise() * bd.transpose()).matrix();
      z0.block(r, m, B, m) = (-(sn.rowwise() * bd.transpose())).matrix();
    }
    for (std::size_t h = 0; h < mask_.hess_dims.size(); ++h) {
      const Eigen::ArrayXd bd2 =
          rff->b.col(static_cast<Eigen::Index>(mask_.hess_dims[h])).array().square();
      const Eigen::Index r = row0(1 + G + h);
      z0.block(r, 0, B, m) = (-(sn.rowwise() * bd2.transpose())).matrix();
      z0.block(r, m, B, m) = (-(cs.rowwise() * bd2.transpose())).matrix();
    }
  } else {
    z0.setZero(S, n0);
    z0.topRows(B) = points;
    for (std::size_t g = 0; g < G; ++g)
      z0.block(row0(1 + g), static_cast<Eigen::Index>(mask_.grad_dims[g]), B, 1).setOnes();
  }

  const std::size_t L = net.depth();
  z_.reserve(L + 1);
  h_.resize(L);
  d1_.resize(L);
  d2_.resize(L);
  d3_.resize(L);
  z_.push_back(std::move(z0));

  for (std::size_t k = 0; k < L; ++k) {
    const Layer& layer = net.layer(k);
    const Eigen::MatrixXd a = net.effective_weights(k);
    Eigen::MatrixXd& h = h_[k];
    h.noalias() = z_[k] * a;
    h.topRows(B).rowwise() += layer.bias.transpose();

    if (layer.activation.tag == ActivationTag::Identity) {
      z_.push_back(h);
      continue;
    }
    const Eigen::ArrayXXd hv = h.topRows(B).array();
    Eigen::ArrayXXd val;
    activation_eval(layer.activation, hv, &val, &d1_[k], &d2_[k],
                    mask_.hess_dims.empty() ? nullptr : &d3_[k]);
    Eigen::MatrixXd z(S, h.cols());
    z.topRows(B) = val.matrix();
    for (std::size_t g = 0; g < G; ++g) {
      const Eigen::Index r = row0(1 + g);
      z.middleRows(r, B) = (d1_[k] * h.middleRows(r, B).array()).matrix();
    }
    for (std::size_t s = 0; s < mask_.hess_dims.size(); ++s) {
      const Eigen::Index rg = row0(1 + hess_grad_slot_[s]);
      const Eigen::Index rh = row0(1 + G + s);
      z.middleRows(rh, B) = (d2_[k] * h.middleRows(rg, B).array().square() +
                             d1_[k] * h.middleRows(rh, B).array())
                                .matrix();
    }
    z_.push_back(std::move(z));
  }
}

Jet2 BatchJets::jet(Eigen::Index i, Eigen::Index out) const {
  Jet2 j = Jet2::zero(net_->input_dim());
  const Eigen::MatrixXd& o = output();
  j.value = o(i, out);
  for (std::size_t g = 0; g < mask_.grad_dims.size(); ++g)
    j.grad[mask_.grad_dims[g]] = o(row0(1 + g) + i, out);
  for (std::size_t s = 0; s < mask_.hess_dims.size(); ++s)
    j.diag_hess[mask_.hess_dims[s]] = o(row0(1 + mask_.grad_dims.size() + s) + i, out);
  return j;
}

Eigen::MatrixXd BatchJets::zero_cotangent() const {
  return Eigen::MatrixXd::Zero(output().rows(), output().cols());
}

ParamGradient BatchJets::backward(const Eigen::MatrixXd& output_cotangent) const {
  const Network& net = *net_;
  if (output_cotangent.rows() != output().rows() || output_cotangent.cols() != output().cols()) {
    throw Error(ErrorCode::DimensionMismatch, "cotangent stack shape differs from output stack");
  }
  const Eigen::Index B = batch_;
  const std::size_t G = mask_.grad_dims.size();
  ParamGradient grad = ParamGradient::zeros_like(net);

  Eigen::MatrixXd bar = output_cotangent;
  for (std::size_t kk = net.depth(); kk-- > 0;) {
    const Layer& layer = net.layer(kk);
    const Eigen::MatrixXd& h = h_[kk];
    Eigen::MatrixXd hbar;
    if (layer.activation.tag == ActivationTag::Identity) {
      hbar = std::move(bar);
    } else {
      const Eigen::ArrayXXd& d1 = d1_[kk];
      const Eigen::ArrayXXd& d2 = d2_[kk];
      hbar.resize(bar.rows(), bar.cols());
      Eigen::ArrayXXd v = bar.topRows(B).array() * d1;
      for (std::size_t g = 0; g < G; ++g) {
        const Eigen::Index r = row0(1 + g);
        const auto zb = bar.middleRows(r, B).array();
        v += zb * d2 * h.middleRows(r, B).array();
        hbar.middleRows(r, B) = (zb * d1).matrix();
      }
      for (std::size_t s = 0; s < mask_.hess_dims.size(); ++s) {
        const Eigen::Index rg = row0(1 + hess_grad_slot_[s]);
        const Eigen::Index rh = row0(1 + G + s);
        const auto zbb = bar.middleRows(rh, B).array();
        const auto hp = h.middleRows(rg, B).array();
        v += zbb * (d3_[kk] * hp.square() + d2 * h.middleRows(rh, B).array());
        hbar.middleRows(rg, B).array() += 2.0 * zbb * d2 * hp;
        hbar.middleRows(rh, B) = (zbb * d1).matrix();
      }
      hbar.topRows(B) = v.matrix();
    }

    Eigen::MatrixXd ga;
    ga.noalias() = z_[kk].transpose() * hbar;
    if (net.is_equilibrated_layer(kk)) ga.array().rowwise() *= layer.p_diag.transpose().array();
    grad.weights[kk] = std::move(ga);
    grad.bias[kk] = hbar.topRows(B).colwise().sum().transpose();
    if (kk > 0) bar.noalias() = hbar * net.effective_weights(kk).transpose();
  }
  return grad;
}

Eigen::MatrixXd BatchJets::value_ntk() const {
  const Network& net = *net_;
  if (net.output_dim() != 1) throw Error(ErrorCode::NonScalarOutput, "value NTK needs n_L = 1");
  const Eigen::Index B = batch_;
  Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(B, B);
  Eigen::MatrixXd bar = Eigen::MatrixXd::Ones(B, 1);
  for (std::size_t kk = net.depth(); kk-- > 0;) {
    const Layer& layer = net.layer(kk);
    Eigen::MatrixXd hbar = bar;
    if (layer.activation.tag != ActivationTag::Identity) hbar.array() *= d1_[kk];
    const auto zin = z_[kk].topRows(B);
    Eigen::MatrixXd zz;
    zz.noalias() = zin * zin.transpose();
    Eigen::MatrixXd dd;
    dd.noalias() = hbar * hbar.transpose();
    if (net.is_equilibrated_layer(kk)) {
      Eigen::MatrixXd hp = hbar;
      hp.array().rowwise() *= layer.p_diag.transpose().array();
      Eigen::MatrixXd dp;
      dp.noalias() = hp * hp.transpose();
      kernel.array() += zz.array() * dp.array();
    } else {
      kernel.array() += zz.array() * dd.array();
    }
    kernel += dd;  // bias
    if (kk > 0) bar.noalias() = hbar * net.effective_weights(kk).transpose();
  }
  return kernel;
}

}  // namespace pinn::nn
