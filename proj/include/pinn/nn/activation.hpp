#pragma once

#include <Eigen/Core>

#include <string>

namespace pinn::nn {

enum class ActivationTag { Gaussian, Tanh, Sine, Wavelet, Identity };

/// Pointwise nonlinearity with its parameter.
///   gaussian(s): exp(-x^2 / s^2)
///   tanh:        tanh(x)
///   sine(f):     sin(f x)
///   wavelet(s):  sin(x) exp(-x^2 / (2 s^2))   (real Gabor wavelet)
///   identity:    x
struct Activation {
  ActivationTag tag = ActivationTag::Identity;
  double param = 0.0;

  static Activation gaussian(double s);
  static Activation tanh() { return {ActivationTag::Tanh, 0.0}; }
  static Activation sine(double f);
  static Activation wavelet(double s = 1.0);
  static Activation identity() { return {ActivationTag::Identity, 0.0}; }

  /// "gaussian", "tanh", "sine", "wavelet" or "identity".
  std::string tag_name() const;
  static Activation parse(const std::string& tag, double param);

  friend bool operator==(const Activation&, const Activation&) = default;
};

struct ActivationValue {
  double value;
  double first;
  double second;
  double third;
};

ActivationValue activation_eval(const Activation& act, double x);

/// Elementwise evaluation over an array; any output pointer may be null.
void activation_eval(const Activation& act, const Eigen::ArrayXXd& x, Eigen::ArrayXXd* value,
                     Eigen::ArrayXXd* first, Eigen::ArrayXXd* second, Eigen::ArrayXXd* third);

}  // namespace pinn::nn
