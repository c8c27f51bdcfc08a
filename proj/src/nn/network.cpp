#include "pinn/nn/network.hpp"

#include "pinn/error.hpp"
#include "pinn/nn/batch.hpp"
#include "pinn/rng.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace pinn::nn {

Network::Network(std::vector<Layer> layers, bool equilibrate_inner, std::optional<RffEmbedding> rff,
                 std::size_t input_dim)
    : layers_(std::move(layers)),
      equilibrate_inner_(equilibrate_inner),
      rff_(std::move(rff)),
      input_dim_(input_dim) {
  if (layers_.empty()) throw Error(ErrorCode::BadTopology, "network needs at least one layer");
  if (input_dim_ == 0) throw Error(ErrorCode::BadTopology, "input dimension must be positive");
  auto fan_in = static_cast<Eigen::Index>(input_dim_);
  if (rff_) {
    if (rff_->b.cols() != fan_in || rff_->b.rows() == 0)
      throw Error(ErrorCode::DimensionMismatch, "RFF matrix must be m x n0");
    fan_in = 2 * rff_->b.rows();
  }
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& l = layers_[k];
    if (l.weights.rows() != fan_in || l.weights.cols() != l.bias.size() || l.bias.size() == 0)
      throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(k) + " has inconsistent shape");
    fan_in = l.weights.cols();
  }
  if (layers_.back().activation.tag != ActivationTag::Identity)
    throw Error(ErrorCode::BadTopology, "output layer must be linear");
  if (equilibrate_inner_) {
    bool stale = false;
    for (std::size_t k = 0; k < layers_.size(); ++k)
      if (is_equilibrated_layer(k) && layers_[k].p_diag.size() != layers_[k].weights.cols()) stale = true;
    if (stale) equilibrate_weights(*this);
  }
}

std::vector<std::size_t> Network::widths() const {
  std::vector<std::size_t> w{input_dim_};
  for (const auto& l : layers_) w.push_back(static_cast<std::size_t>(l.bias.size()));
  return w;
}

Eigen::MatrixXd Network::effective_weights(std::size_t k) const {
  const Layer& l = layers_.at(k);
  if (!is_equilibrated_layer(k)) return l.weights;
  Eigen::MatrixXd a = l.weights;
  a.array().rowwise() *= l.p_diag.transpose().array();
  return a;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

std::vector<double> Network::parameters() const {
  std::vector<double> theta;
  theta.reserve(parameter_count());
  for (const auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) theta.push_back(l.weights(i, j));
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) theta.push_back(l.bias[j]);
  }
  return theta;
}

void Network::set_parameters(std::span<const double> theta) {
  if (theta.size() != parameter_count())
    throw Error(ErrorCode::DimensionMismatch, "parameter vector has the wrong length");
  std::size_t p = 0;
  for (auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weights.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weights.cols(); ++j) l.weights(i, j) = theta[p++];
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias[j] = theta[p++];
  }
}

bool operator==(const Network& a, const Network& b) {
  if (a.input_dim_ != b.input_dim_ || a.equilibrate_inner_ != b.equilibrate_inner_ ||
      a.layers_.size() != b.layers_.size() || a.rff_.has_value() != b.rff_.has_value())
    return false;
  if (a.rff_ && (a.rff_->b != b.rff_->b || a.rff_->scale != b.rff_->scale)) return false;
  for (std::size_t k = 0; k < a.layers_.size(); ++k) {
    const Layer& x = a.layers_[k];
    const Layer& y = b.layers_[k];
    if (x.weights.rows() != y.weights.rows() || x.weights.cols() != y.weights.cols()) return false;
    if (x.weights != y.weights || x.bias != y.bias || !(x.activation == y.activation)) return false;
  }
  return true;
}

ParamGradient ParamGradient::zeros_like(const Network& net) {
  ParamGradient g;
  for (const auto& l : net.layers()) {
    g.weights.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

std::size_t ParamGradient::size() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < weights.size(); ++k)
    n += static_cast<std::size_t>(weights[k].size() + bias[k].size());
  return n;
}

std::vector<double> ParamGradient::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    for (Eigen::Index i = 0; i < weights[k].rows(); ++i)
      for (Eigen::Index j = 0; j < weights[k].cols(); ++j) out.push_back(weights[k](i, j));
    for (Eigen::Index j = 0; j < bias[k].size(); ++j) out.push_back(bias[k][j]);
  }
  return out;
}

ParamGradient& ParamGradient::operator+=(const ParamGradient& other) {
  if (other.weights.size() != weights.size())
    throw Error(ErrorCode::DimensionMismatch, "gradients belong to different networks");
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] += other.weights[k];
    bias[k] += other.bias[k];
  }
  return *this;
}

ParamGradient& ParamGradient::operator*=(double c) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] *= c;
    bias[k] *= c;
  }
  return *this;
}

double ParamGradient::squared_norm() const {
  double s = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) s += weights[k].squaredNorm() + bias[k].squaredNorm();
  return s;
}

Network init_he(std::span<const std::size_t> widths, const Activation& activation, std::uint64_t seed,
                const NetworkOptions& options) {
  if (widths.size() < 3) throw Error(ErrorCode::BadTopology, "need input, at least one hidden, and output width");
  for (std::size_t w : widths)
    if (w == 0) throw Error(ErrorCode::BadTopology, "widths must be positive");
  Rng rng(seed);

  std::optional<RffEmbedding> rff;
  std::size_t fan_in = widths[0];
  if (options.rff_features > 0) {
    RffEmbedding e;
    e.scale = options.rff_scale;
    e.b.resize(static_cast<Eigen::Index>(options.rff_features), static_cast<Eigen::Index>(widths[0]));
    for (Eigen::Index i = 0; i < e.b.rows(); ++i)
      for (Eigen::Index j = 0; j < e.b.cols(); ++j) e.b(i, j) = rng.normal(0.0, options.rff_scale);
    rff = std::move(e);
    fan_in = 2 * options.rff_features;
  }

  std::vector<Layer> layers;
  for (std::size_t k = 1; k < widths.size(); ++k) {
    Layer l;
    const auto rows = static_cast<Eigen::Index>(fan_in);
    const auto cols = static_cast<Eigen::Index>(widths[k]);
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    l.weights.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) l.weights(i, j) = rng.normal(0.0, sd);
    l.bias = Eigen::VectorXd::Zero(cols);
    l.activation = (k + 1 == widths.size()) ? Activation::identity() : activation;
    layers.push_back(std::move(l));
    fan_in = widths[k];
  }
  return Network(std::move(layers), options.equilibrate_inner, std::move(rff), widths[0]);
}

namespace {

Eigen::MatrixXd single_point(const Network& net, std::span<const double> x) {
  if (x.size() != net.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "input has " + std::to_string(x.size()) +
                                                  " entries, network expects " +
                                                  std::to_string(net.input_dim()));
  Eigen::MatrixXd p(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t d = 0; d < x.size(); ++d) p(0, static_cast<Eigen::Index>(d)) = x[d];
  return p;
}

}  // namespace

std::vector<Jet2> rff_embed(std::span<const double> x, const Eigen::MatrixXd& b, bool jets) {
  if (static_cast<Eigen::Index>(x.size()) != b.cols())
    throw Error(ErrorCode::DimensionMismatch, "RFF matrix columns differ from input dimension");
  const Eigen::Index m = b.rows();
  const std::size_t n0 = x.size();
  std::vector<Jet2> out(static_cast<std::size_t>(2 * m), Jet2::zero(jets ? n0 : 0));
  for (Eigen::Index i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < n0; ++d) s += b(i, static_cast<Eigen::Index>(d)) * x[d];
    Jet2& sn = out[static_cast<std::size_t>(i)];
    Jet2& cs = out[static_cast<std::size_t>(m + i)];
    sn.value = std::sin(s);
    cs.value = std::cos(s);
    if (!jets) continue;
    for (std::size_t d = 0; d < n0; ++d) {
      const double bd = b(i, static_cast<Eigen::Index>(d));
      sn.grad[d] = bd * cs.value;
      cs.grad[d] = -bd * sn.value;
      sn.diag_hess[d] = -bd * bd * sn.value;
      cs.diag_hess[d] = -bd * bd * cs.value;
    }
  }
  return out;
}

std::vector<double> forward(const Network& net, std::span<const double> x) {
  const BatchJets b(net, single_point(net, x), JetMask::none());
  const auto v = b.value();
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<Jet2> forward_jet(const Network& net, std::span<const double> x) {
  const BatchJets b(net, single_point(net, x), JetMask::all(net.input_dim()));
  std::vector<Jet2> out;
  for (std::size_t o = 0; o < net.output_dim(); ++o) out.push_back(b.jet(0, static_cast<Eigen::Index>(o)));
  return out;
}

ParamGradient grad_params(const Network& net, std::span<const double> x, const JetCotangent& c) {
  const std::size_t n0 = net.input_dim();
  if (c.grad.size() != n0 || c.diag_hess.size() != n0)
    throw Error(ErrorCode::DimensionMismatch, "cotangent dimension differs from input dimension");
  const BatchJets b(net, single_point(net, x), JetMask::all(n0));
  Eigen::MatrixXd cot = b.zero_cotangent();
  cot(0, 0) = c.value;
  for (std::size_t d = 0; d < n0; ++d) {
    cot(b.grad_row0(d), 0) = c.grad[d];
    cot(b.hess_row0(d), 0) = c.diag_hess[d];
  }
  return b.backward(cot);
}

void equilibrate_weights(Network& net) {
  if (!net.equilibrate_inner()) throw Error(ErrorCode::InvalidArgument, "network is not equilibrated");
  for (std::size_t k = 0; k < net.depth(); ++k) {
    if (!net.is_equilibrated_layer(k)) continue;
    Layer& l = net.mutable_layer(k);
    Eigen::VectorXd p(l.weights.cols());
    for (Eigen::Index i = 0; i < l.weights.cols(); ++i) {
      const double nrm = l.weights.col(i).norm();
      if (!(nrm > 1e-300)) throw Error(ErrorCode::ZeroRow, "zero row in inner weight", {k, static_cast<std::size_t>(i)});
      p[i] = 1.0 / nrm;
    }
    l.p_diag = std::move(p);
  }
}

linalg::Matrix to_matrix(const Eigen::MatrixXd& m) { return linalg::Matrix::from_eigen(m); }

void save_checkpoint(std::ostream& os, const Network& net) {
  const auto old_prec = os.precision(17);
  os << "pinn-checkpoint 1\n";
  os << "widths";
  for (std::size_t w : net.widths()) os << ' ' << w;
  os << '\n';
  const Activation& act = net.layer(0).activation;
  os << "activation " << act.tag_name() << ' ' << act.param << '\n';
  os << "equilibrate " << (net.equilibrate_inner() ? 1 : 0) << '\n';
  if (const auto& rff = net.rff()) {
    os << "rff " << rff->b.rows() << ' ' << rff->b.cols() << ' ' << rff->scale << '\n';
    linalg::write_text(os, to_matrix(rff->b));
  } else {
    os << "rff 0 0 0\n";
  }
  for (std::size_t k = 0; k < net.depth(); ++k) {
    os << "layer " << k << '\n';
    linalg::write_text(os, to_matrix(net.layer(k).weights));
    linalg::write_text(os, to_matrix(net.layer(k).bias.transpose()));
  }
  os.precision(old_prec);
}

namespace {

void expect_token(std::istream& is, const std::string& token) {
  std::string got;
  if (!(is >> got) || got != token)
    throw Error(ErrorCode::IoError, "checkpoint: expected '" + token + "', got '" + got + "'");
}

Eigen::MatrixXd to_eigen(const linalg::Matrix& m) { return m.view(); }

}  // namespace

Network load_checkpoint(std::istream& is) {
  expect_token(is, "pinn-checkpoint");
  int version = 0;
  if (!(is >> version) || version != 1) throw Error(ErrorCode::IoError, "unsupported checkpoint version");
  expect_token(is, "widths");
  std::vector<std::size_t> widths;
  std::string line;
  std::getline(is, line);
  {
    std::size_t pos = 0;
    while (pos < line.size()) {
      const auto start = line.find_first_not_of(' ', pos);
      if (start == std::string::npos) break;
      const auto end = line.find(' ', start);
      widths.push_back(std::stoul(line.substr(start, end - start)));
      pos = end == std::string::npos ? line.size() : end;
    }
  }
  if (widths.size() < 2) throw Error(ErrorCode::IoError, "checkpoint widths too short");
  expect_token(is, "activation");
  std::string tag;
  double param = 0.0;
  is >> tag >> param;
  const Activation act = Activation::parse(tag, param);
  expect_token(is, "equilibrate");
  int eq = 0;
  is >> eq;
  expect_token(is, "rff");
  std::size_t m = 0, n0 = 0;
  double scale = 0.0;
  is >> m >> n0 >> scale;
  if (!is) throw Error(ErrorCode::IoError, "malformed checkpoint header");
  std::optional<RffEmbedding> rff;
  if (m > 0) rff = RffEmbedding{to_eigen(linalg::read_text(is)), scale};

  std::vector<Layer> layers;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    expect_token(is, "layer");
    std::size_t idx = 0;
    is >> idx;
    if (idx != k) throw Error(ErrorCode::IoError, "checkpoint layers out of order");
    Layer l;
    l.weights = to_eigen(linalg::read_text(is));
    const linalg::Matrix bias = linalg::read_text(is);
    if (bias.rows() != 1) throw Error(ErrorCode::IoError, "bias must be a 1 x n matrix");
    l.bias = to_eigen(bias).row(0).transpose();
    l.activation = (k + 2 == widths.size()) ? Activation::identity() : act;
    if (static_cast<std::size_t>(l.bias.size()) != widths[k + 1])
      throw Error(ErrorCode::IoError, "layer width disagrees with header");
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers), eq != 0, std::move(rff), widths[0]);
}

}  // namespace pinn::nn
