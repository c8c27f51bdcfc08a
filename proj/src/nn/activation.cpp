#include "pinn/nn/activation.hpp"

#include "pinn/error.hpp"

#include <cmath>

namespace pinn::nn {

Activation Activation::gaussian(double s) {
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "gaussian width s must be positive");
  return {ActivationTag::Gaussian, s};
}

Activation Activation::sine(double f) {
  if (!(f > 0.0)) throw Error(ErrorCode::InvalidArgument, "sine frequency must be positive");
  return {ActivationTag::Sine, f};
}

Activation Activation::wavelet(double s) {
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "wavelet width s must be positive");
  return {ActivationTag::Wavelet, s};
}

std::string Activation::tag_name() const {
  switch (tag) {
    case ActivationTag::Gaussian: return "gaussian";
    case ActivationTag::Tanh: return "tanh";
    case ActivationTag::Sine: return "sine";
    case ActivationTag::Wavelet: return "wavelet";
    case ActivationTag::Identity: return "identity";
  }
  return "identity";
}

Activation Activation::parse(const std::string& tag, double param) {
  if (tag == "gaussian") return gaussian(param);
  if (tag == "tanh") return Activation::tanh();
  if (tag == "sine") return sine(param);
  if (tag == "wavelet") return wavelet(param);
  if (tag == "identity") return identity();
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + tag + "'");
}

ActivationValue activation_eval(const Activation& act, double x) {
  switch (act.tag) {
    case ActivationTag::Gaussian: {
      const double a = 1.0 / (act.param * act.param);
      const double g = std::exp(-a * x * x);
      return {g, -2.0 * a * x * g, (4.0 * a * a * x * x - 2.0 * a) * g,
              (12.0 * a * a * x - 8.0 * a * a * a * x * x * x) * g};
    }
    case ActivationTag::Tanh: {
      const double t = std::tanh(x);
      const double sech2 = 1.0 - t * t;
      return {t, sech2, -2.0 * t * sech2, sech2 * (6.0 * t * t - 2.0)};
    }
    case ActivationTag::Sine: {
      const double f = act.param;
      const double s = std::sin(f * x);
      const double c = std::cos(f * x);
      return {s, f * c, -f * f * s, -f * f * f * c};
    }
    case ActivationTag::Wavelet: {
      const double b = 1.0 / (act.param * act.param);
      const double g = std::exp(-0.5 * b * x * x);
      const double g1 = -b * x * g;
      const double g2 = (b * b * x * x - b) * g;
      const double g3 = (3.0 * b * b * x - b * b * b * x * x * x) * g;
      const double s = std::sin(x);
      const double c = std::cos(x);
      return {s * g, c * g + s * g1, -s * g + 2.0 * c * g1 + s * g2,
              -c * g - 3.0 * s * g1 + 3.0 * c * g2 + s * g3};
    }
    case ActivationTag::Identity:
      return {x, 1.0, 0.0, 0.0};
  }
  return {x, 1.0, 0.0, 0.0};
}

void activation_eval(const Activation& act, const Eigen::ArrayXXd& x, Eigen::ArrayXXd* value,
                     Eigen::ArrayXXd* first, Eigen::ArrayXXd* second, Eigen::ArrayXXd* third) {
  switch (act.tag) {
    case ActivationTag::Gaussian: {
      const double a = 1.0 / (act.param * act.param);
      const Eigen::ArrayXXd x2 = x.square();
      const Eigen::ArrayXXd g = (-a * x2).exp();
      if (value) *value = g;
      if (first) *first = -2.0 * a * x * g;
      if (second) *second = (4.0 * a * a * x2 - 2.0 * a) * g;
      if (third) *third = (12.0 * a * a - 8.0 * a * a * a * x2) * x * g;
      return;
    }
    case ActivationTag::Tanh: {
      const Eigen::ArrayXXd t = x.tanh();
      const Eigen::ArrayXXd sech2 = 1.0 - t.square();
      if (value) *value = t;
      if (first) *first = sech2;
      if (second) *second = -2.0 * t * sech2;
      if (third) *third = sech2 * (6.0 * t.square() - 2.0);
      return;
    }
    case ActivationTag::Sine: {
      const double f = act.param;
      const Eigen::ArrayXXd fx = f * x;
      const Eigen::ArrayXXd s = fx.sin();
      const Eigen::ArrayXXd c = fx.cos();
      if (value) *value = s;
      if (first) *first = f * c;
      if (second) *second = -f * f * s;
      if (third) *third = -f * f * f * c;
      return;
    }
    case ActivationTag::Wavelet: {
      const double b = 1.0 / (act.param * act.param);
      const Eigen::ArrayXXd x2 = x.square();
      const Eigen::ArrayXXd g = (-0.5 * b * x2).exp();
      const Eigen::ArrayXXd g1 = -b * x * g;
      const Eigen::ArrayXXd g2 = (b * b * x2 - b) * g;
      const Eigen::ArrayXXd s = x.sin();
      const Eigen::ArrayXXd c = x.cos();
      if (value) *value = s * g;
      if (first) *first = c * g + s * g1;
      if (second) *second = -s * g + 2.0 * c * g1 + s * g2;
      if (third) {
        const Eigen::ArrayXXd g3 = (3.0 * b * b - b * b * b * x2) * x * g;
        *third = -c * g - 3.0 * s * g1 + 3.0 * c * g2 + s * g3;
      }
      return;
    }
    case ActivationTag::Identity: {
      if (value) *value = x;
      if (first) first->setOnes(x.rows(), x.cols());
      if (second) second->setZero(x.rows(), x.cols());
      if (third) third->setZero(x.rows(), x.cols());
      return;
    }
  }
}

}  // namespace pinn::nn
