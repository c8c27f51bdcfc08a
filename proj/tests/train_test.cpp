#include "fd_oracle.hpp"
#include "pinn/error.hpp"
#include "pinn/linalg/decomp.hpp"
#include "pinn/nn/batch.hpp"
#include "pinn/ntk/ntk.hpp"
#include "pinn/rng.hpp"
#include "pinn/train/train.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

using pinn::Error;
using pinn::ErrorCode;
using pinn::Rng;
using namespace pinn::train;
namespace nn = pinn::nn;
namespace pde = pinn::pde;
namespace linalg = pinn::linalg;

namespace {

nn::Layer make_layer(Eigen::MatrixXd w, Eigen::VectorXd b, nn::Activation act) {
  return {std::move(w), std::move(b), act, {}};
}

// -u'' = 0 on [-1, 1], u(-1) = -1, u(1) = 1; exact u = x.
pde::PdeProblem linear_problem() {
  pde::PdeProblem p;
  p.name = "linear";
  p.axis_names = {"x"};
  p.domain = {{-1.0}, {1.0}};
  p.residual = [](std::span<const double>, const nn::Jet2& u, nn::Jet2* partials) {
    if (partials) {
      *partials = nn::Jet2::zero(1);
      partials->diag_hess[0] = -1.0;
    }
    return -u.diag_hess[0];
  };
  p.needs.grad_dims = {0};
  p.needs.hess_dims = {0};
  p.boundary = {{"x=-1", 0, -1.0, [](std::span<const double>) { return -1.0; }},
                {"x=1", 0, 1.0, [](std::span<const double>) { return 1.0; }}};
  p.exact = [](std::span<const double> x) { return x[0]; };
  return p;
}

nn::Network identity_line(double w, double b) {
  std::vector<nn::Layer> layers{
      make_layer(Eigen::MatrixXd::Constant(1, 1, w), Eigen::VectorXd::Constant(1, b), nn::Activation::identity())};
  return nn::Network(std::move(layers), false, std::nullopt, 1);
}

std::vector<double> row_of(const Eigen::MatrixXd& m, Eigen::Index i) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(j)] = m(i, j);
  return v;
}

// Plain loop over points, one forward_jet per point.
LossParts naive_loss(const nn::Network& net, const pde::PdeProblem& problem, const pde::SampleSet& s) {
  LossParts l;
  const auto nb = s.boundary.points.rows();
  for (Eigen::Index i = 0; i < nb; ++i) {
    const double d = nn::forward(net, row_of(s.boundary.points, i))[0] - s.boundary.targets(i);
    l.boundary += d * d;
  }
  if (nb > 0) l.boundary /= 2.0 * static_cast<double>(nb);
  const auto nr = s.residual_points.rows();
  for (Eigen::Index i = 0; i < nr; ++i) {
    const auto x = row_of(s.residual_points, i);
    const double r = problem.residual(x, nn::forward_jet(net, x)[0], nullptr);
    l.residual += r * r;
  }
  if (nr > 0) l.residual /= 2.0 * static_cast<double>(nr);
  l.total = l.boundary + l.residual;
  return l;
}

std::vector<pde::PdeProblem> benchmark_problems() {
  return {pde::poisson_problem(pde::PoissonMode::Benchmark), pde::diffusion_problem(), pde::burgers_problem()};
}

}  // namespace

TEST(CompositeLoss, ExactNetGivesZero) {
  const pde::PdeProblem p = linear_problem();
  const nn::Network net = identity_line(1.0, 0.0);
  const pde::SampleSet s = pde::make_samples(p, 2, 20, 1);
  const LossParts l = composite_loss(net, p, s);
  EXPECT_EQ(l.total, 0.0);
  EXPECT_EQ(l.boundary, 0.0);
  EXPECT_EQ(l.residual, 0.0);
}

TEST(CompositeLoss, SingleBoundaryPoint) {
  const nn::Network net = identity_line(0.0, 3.0);
  pde::SampleSet s;
  s.boundary.points = Eigen::MatrixXd::Constant(1, 1, -1.0);
  s.boundary.targets = Eigen::VectorXd::Constant(1, 1.0);
  s.boundary.set_index = {0};
  s.residual_points.resize(0, 1);
  const LossParts l = composite_loss(net, linear_problem(), s);
  EXPECT_EQ(l.boundary, 2.0);
  EXPECT_EQ(l.residual, 0.0);
  EXPECT_EQ(l.total, 2.0);
}

TEST(CompositeLoss, MatchesNaiveSummation) {
  for (const auto& problem : benchmark_problems()) {
    const std::vector<std::size_t> w{problem.input_dim(), 16, 16, 1};
    for (bool eq : {false, true}) {
      const nn::Network net = nn::init_he(w, nn::Activation::gaussian(0.4), 3, {.equilibrate_inner = eq});
      const pde::SampleSet s = pde::make_samples(problem, 12, 40, 5);
      const LossParts got = composite_loss(net, problem, s);
      const LossParts want = naive_loss(net, problem, s);
      EXPECT_NEAR(got.boundary, want.boundary, 1e-12 * want.boundary) << problem.name;
      EXPECT_NEAR(got.residual, want.residual, 1e-12 * want.residual) << problem.name;
      EXPECT_EQ(got.total, got.boundary + got.residual);
      const LossGradient lg = loss_and_gradient(net, problem, s);
      EXPECT_EQ(lg.loss.total, got.total);
    }
  }
}

TEST(CompositeLoss, GradientMatchesFiniteDifferences) {
  for (const auto& problem : benchmark_problems()) {
    const std::vector<std::size_t> w{problem.input_dim(), 8, 8, 1};
    for (bool eq : {false, true}) {
      nn::Network net = nn::init_he(w, nn::Activation::gaussian(0.5), 8, {.equilibrate_inner = eq});
      const pde::SampleSet s = pde::make_samples(problem, 6, 15, 2);
      const std::vector<double> g = loss_and_gradient(net, problem, s).grad.flatten();
      const std::vector<double> theta0 = net.parameters();
      for (std::size_t p = 0; p < theta0.size(); p += 5) {
        auto f = [&](double step) {
          std::vector<double> th = theta0;
          th[p] += step;
          net.set_parameters(th);
          return composite_loss(net, problem, s).total;
        };
        const double fd = pinn::testing::central_diff(f, 1e-3).first;
        net.set_parameters(theta0);
        EXPECT_NEAR(g[p], fd, 1e-6 * std::max(1.0, std::abs(fd))) << problem.name << " param " << p;
      }
    }
  }
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  TrainConfig c;
  c.learning_rate = 0.01;
  std::vector<double> theta{1.0, 1.0, 1.0};
  const std::vector<double> g{0.5, -2.0, 1e-3};
  AdamState st = AdamState::zeros(3);
  adam_step(theta, st, g, c);
  for (std::size_t i = 0; i < 3; ++i) {
    // At t = 1 the corrected moments are g and g^2, so the step is
    // lr g / (|g| + eps).
    const double want = 1.0 - c.learning_rate * g[i] / (std::abs(g[i]) + c.adam_eps);
    EXPECT_NEAR(theta[i], want, 1e-15);
    EXPECT_NEAR(theta[i], 1.0 - c.learning_rate * std::copysign(1.0, g[i]), c.learning_rate * c.adam_eps / std::abs(g[i]) * 1.01);
  }
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  TrainConfig c;
  std::vector<double> theta{0.3, -0.7};
  AdamState st{{0.0, 0.0}, {0.0, 0.0}, 0};
  const std::vector<double> zero{0.0, 0.0};
  adam_step(theta, st, zero, c);
  EXPECT_EQ(theta[0], 0.3);
  EXPECT_EQ(theta[1], -0.7);
  st.m = {0.5, -0.2};
  st.v = {0.04, 0.01};
  std::vector<double> before = theta;
  adam_step(theta, st, zero, c);
  EXPECT_DOUBLE_EQ(st.m[0], 0.9 * 0.5);
  EXPECT_DOUBLE_EQ(st.v[1], 0.999 * 0.01);
  // Nonzero first moment still moves theta; only a zero gradient on fresh
  // moments is a no-op.
  EXPECT_NE(theta[0], before[0]);
}

TEST(Adam, RejectsMismatchedBuffers) {
  std::vector<double> theta{1.0, 2.0};
  AdamState st = AdamState::zeros(3);
  const std::vector<double> g{0.1, 0.1};
  try {
    adam_step(theta, st, g, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

namespace {

// Independent straight-line Adam on L = 1/2 theta^2 (gradient = theta),
// bias corrections from running products rather than pow.
std::vector<std::vector<double>> reference_adam_trace(std::vector<double> th, int steps) {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m(th.size(), 0.0), v(th.size(), 0.0);
  double p1 = 1.0, p2 = 1.0;
  std::vector<std::vector<double>> out;
  for (int t = 0; t < steps; ++t) {
    p1 *= b1;
    p2 *= b2;
    for (std::size_t i = 0; i < th.size(); ++i) {
      const double g = th[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - p1);
      const double vh = v[i] / (1 - p2);
      th[i] = th[i] - lr * mh / (std::sqrt(vh) + eps);
    }
    out.push_back(th);
  }
  return out;
}

std::vector<double> library_adam_norms(std::vector<double> th, int steps, std::vector<std::vector<double>>* trace) {
  TrainConfig c;
  c.learning_rate = 0.1;
  AdamState st = AdamState::zeros(th.size());
  std::vector<double> norms;
  for (int t = 0; t < steps; ++t) {
    const std::vector<double> g = th;
    adam_step(th, st, g, c);
    if (trace) trace->push_back(th);
    double n = 0;
    for (double x : th) n += x * x;
    norms.push_back(std::sqrt(n));
  }
  return norms;
}

}  // namespace

TEST(Adam, QuadraticMatchesReferenceTrace) {
  const std::vector<double> start{1.0, -0.5, 2.0};
  std::vector<std::vector<double>> got;
  library_adam_norms(start, 100, &got);
  const auto want = reference_adam_trace(start, 100);
  for (int t = 0; t < 100; ++t)
    for (std::size_t i = 0; i < start.size(); ++i) EXPECT_NEAR(got[t][i], want[t][i], 1e-12);
}

// Warmup taken as the first-moment time constant 1 / (1 - beta1) = 10 steps.
TEST(Adam, QuadraticMagnitudeStrictlyDecreasesAfterWarmup) {
  const auto norms = library_adam_norms({1.0}, 100, nullptr);
  for (std::size_t t = 11; t < norms.size(); ++t) EXPECT_LT(norms[t], norms[t - 1]) << "step " << t + 1;
}

// Successive local maxima of |theta| shrink: the oscillation is damped.
TEST(Adam, QuadraticOscillationPeaksShrink) {
  const auto norms = library_adam_norms({1.0}, 100, nullptr);
  std::vector<double> peaks;
  for (std::size_t t = 1; t + 1 < norms.size(); ++t)
    if (norms[t] > norms[t - 1] && norms[t] >= norms[t + 1]) peaks.push_back(norms[t]);
  ASSERT_GE(peaks.size(), 2u);
  for (std::size_t i = 1; i < peaks.size(); ++i) EXPECT_LT(peaks[i], peaks[i - 1]);
  EXPECT_LT(norms.back(), 0.05);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.adam_beta2 = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.adam_eps = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.metric_stride = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Train, ZeroEpochsLeavesNetworkUnchanged) {
  const pde::PdeProblem p = pde::poisson_problem(pde::PoissonMode::Benchmark);
  const std::vector<std::size_t> w{1, 8, 1};
  nn::Network net = nn::init_he(w, nn::Activation::tanh(), 1);
  const nn::Network before = net;
  const auto recs = train(net, p, pde::make_samples(p, 2, 10, 1), TrainConfig{});
  EXPECT_TRUE(recs.empty());
  EXPECT_TRUE(net == before);
}

TEST(Train, DeterministicAndEmitsOnStride) {
  const pde::PdeProblem p = pde::diffusion_problem();
  const std::vector<std::size_t> w{2, 12, 12, 1};
  const pde::SampleSet s = pde::make_samples(p, 10, 30, 4);
  TrainConfig c;
  c.epochs = 25;
  c.metric_stride = 10;
  c.learning_rate = 1e-3;
  c.record_wall_time = false;
  auto run = [&](std::ostringstream& csv) {
    nn::Network net = nn::init_he(w, nn::Activation::gaussian(0.2), 9, {.equilibrate_inner = true});
    std::vector<RunRecord> streamed;
    const auto recs = train(net, p, s, c, [&](const RunRecord& r) { streamed.push_back(r); });
    EXPECT_EQ(recs.size(), streamed.size());
    write_metrics_header(csv, net.depth());
    for (const auto& r : recs) write_metrics_row(csv, r);
    std::ostringstream ck;
    nn::save_checkpoint(ck, net);
    return std::make_pair(recs, ck.str());
  };
  std::ostringstream a, b;
  const auto [ra, ca] = run(a);
  const auto [rb, cb] = run(b);
  ASSERT_EQ(ra.size(), 3u);
  EXPECT_EQ(ra[0].epoch, 10u);
  EXPECT_EQ(ra[1].epoch, 20u);
  EXPECT_EQ(ra[2].epoch, 25u);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(ca, cb);
  for (const RunRecord& r : ra) {
    EXPECT_GE(r.loss_total, 0.0);
    EXPECT_EQ(r.loss_total, r.loss_boundary + r.loss_residual);
    EXPECT_GE(r.rel_l2_test_error, 0.0);
    ASSERT_EQ(r.per_layer_condition.size(), 3u);
    for (double k : r.per_layer_condition) EXPECT_GE(k, 1.0);
  }
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
            "epoch,loss_total,loss_boundary,loss_residual,l2_train,rel_l2_test,kappa_l1,kappa_l2,kappa_l3,seconds");
}

TEST(Train, EquilibratesAfterEveryStep) {
  const pde::PdeProblem p = pde::poisson_problem(pde::PoissonMode::Benchmark);
  const std::vector<std::size_t> w{1, 10, 10, 10, 1};
  nn::Network net = nn::init_he(w, nn::Activation::gaussian(0.3), 2, {.equilibrate_inner = true});
  TrainConfig c;
  c.epochs = 3;
  c.learning_rate = 1e-2;
  train(net, p, pde::make_samples(p, 2, 20, 1), c);
  for (std::size_t k = 1; k + 1 < net.depth(); ++k) {
    const Eigen::MatrixXd a = net.effective_weights(k);
    for (Eigen::Index i = 0; i < a.cols(); ++i) EXPECT_NEAR(a.col(i).norm(), 1.0, 1e-12);
  }
}

TEST(Train, LearningRateTooLargeAbortsWithLastGoodNetwork) {
  const pde::PdeProblem p = pde::poisson_problem(pde::PoissonMode::Benchmark);
  const std::vector<std::size_t> w{1, 8, 1};
  nn::Network net = nn::init_he(w, nn::Activation::sine(1.0), 1);
  TrainConfig c;
  c.epochs = 50;
  c.learning_rate = 1e300;
  c.metric_stride = 1;
  try {
    train(net, p, pde::make_samples(p, 2, 10, 1), c);
    FAIL() << "expected NonFiniteLoss";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteLoss);
    ASSERT_EQ(e.where().size(), 1u);
    EXPECT_GE(e.where()[0], 1u);
  }
  for (double t : net.parameters()) EXPECT_TRUE(std::isfinite(t));
  EXPECT_TRUE(std::isfinite(composite_loss(net, p, pde::make_samples(p, 2, 10, 1)).total));
}

TEST(Train, NtkGapMonitorHoldsDuringTraining) {
  const pde::PdeProblem p = pde::diffusion_problem();
  const std::vector<std::size_t> w{2, 10, 10, 1};
  nn::Network net = nn::init_he(w, nn::Activation::gaussian(0.3), 5, {.equilibrate_inner = true});
  TrainConfig c;
  c.epochs = 20;
  c.metric_stride = 5;
  c.learning_rate = 1e-3;
  c.monitor_ntk_gap = true;
  for (const auto& r : train(net, p, pde::make_samples(p, 12, 20, 3), c)) {
    ASSERT_TRUE(r.ntk_gap_slack.has_value());
    EXPECT_GE(*r.ntk_gap_slack, -1e-8);
  }
}

TEST(TestErrors, ExactNetAndZeroNet) {
  const pde::PdeProblem lin = linear_problem();
  const std::size_t counts[] = {101};
  const TestErrors e = test_errors(identity_line(1.0, 0.0), lin, counts);
  EXPECT_EQ(e.l2_abs, 0.0);
  EXPECT_EQ(e.l2_rel, 0.0);
  const TestErrors z = test_errors(identity_line(0.0, 0.0), pde::poisson_problem(pde::PoissonMode::Benchmark));
  EXPECT_NEAR(z.l2_rel, 1.0, 1e-15);
}

TEST(TestErrors, MatchesDoubleLoop) {
  const pde::PdeProblem p = pde::diffusion_problem();
  const std::vector<std::size_t> w{2, 16, 1};
  const nn::Network net = nn::init_he(w, nn::Activation::tanh(), 6);
  const std::size_t counts[] = {33, 17};
  const TestErrors e = test_errors(net, p, counts);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < 33; ++i)
    for (std::size_t j = 0; j < 17; ++j) {
      const std::vector<double> x{-1.0 + 2.0 * static_cast<double>(i) / 32.0, static_cast<double>(j) / 16.0};
      const double ue = p.exact(x);
      const double d = nn::forward(net, x)[0] - ue;
      num += d * d;
      den += ue * ue;
    }
  EXPECT_NEAR(e.l2_abs, std::sqrt(num), 1e-12 * std::sqrt(num));
  EXPECT_NEAR(e.l2_rel, std::sqrt(num / den), 1e-12 * std::sqrt(num / den));
}

TEST(TestErrors, NoExactSolution) {
  pde::PdeProblem p = linear_problem();
  p.exact = nullptr;
  const std::size_t counts[] = {5};
  try {
    test_errors(identity_line(1, 0), p, counts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoExactSolution);
  }
}

TEST(WeightCondition, OrthogonalLayerIsOne) {
  Rng rng(2);
  Eigen::MatrixXd g(6, 6);
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  std::vector<nn::Layer> layers{make_layer(q, Eigen::VectorXd::Zero(6), nn::Activation::tanh()),
                                make_layer(Eigen::MatrixXd::Ones(6, 1), Eigen::VectorXd::Zero(1), nn::Activation::identity())};
  const nn::Network net(std::move(layers), false, std::nullopt, 6);
  EXPECT_NEAR(weight_condition_track(net).raw[0], 1.0, 1e-12);
}

TEST(WeightCondition, ScaleInvariantAndSingularIsInfinite) {
  const std::vector<std::size_t> w{3, 7, 7, 1};
  nn::Network net = nn::init_he(w, nn::Activation::tanh(), 4);
  const double k = weight_condition_track(net).raw[1];
  net.mutable_layer(1).weights *= 10.0;
  EXPECT_NEAR(weight_condition_track(net).raw[1], k, 1e-10 * k);
  net.mutable_layer(1).weights.col(2) = net.mutable_layer(1).weights.col(3);
  EXPECT_TRUE(std::isinf(weight_condition_track(net).raw[1]));
}

// Effective (equilibrated) inner layers against random positive diagonal
// rescalings of the same rows.
TEST(WeightCondition, EquilibratedBeatsRandomDiagonalScaling) {
  const std::vector<std::size_t> w{2, 24, 24, 24, 1};
  Rng rng(17);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const nn::Network net = nn::init_he(w, nn::Activation::gaussian(0.2), seed, {.equilibrate_inner = true});
    const LayerConditions c = weight_condition_track(net);
    for (std::size_t k = 1; k + 1 < net.depth(); ++k) {
      const Eigen::MatrixXd wt = net.layer(k).weights.transpose();
      for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd d(wt.rows());
        for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = std::pow(10.0, rng.uniform(-2.0, 2.0));
        const double kd = linalg::condition_number(linalg::Matrix::from_eigen(d.asDiagonal() * wt));
        EXPECT_LE(c.effective[k], kd * (1 + 1e-12)) << "layer " << k;
      }
    }
  }
}

TEST(WeightCondition, EquilibratedWithinRowNormEnvelope) {
  const std::vector<std::size_t> w{2, 20, 20, 20, 1};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const nn::Network net = nn::init_he(w, nn::Activation::tanh(), seed, {.equilibrate_inner = true});
    const LayerConditions c = weight_condition_track(net);
    for (std::size_t k = 1; k + 1 < net.depth(); ++k) {
      const Eigen::VectorXd norms = net.layer(k).weights.colwise().norm();
      EXPECT_LE(c.effective[k], c.raw[k] * norms.maxCoeff() / norms.minCoeff() * (1 + 1e-12));
    }
  }
}

TEST(HessianVector, QuadraticIsExact) {
  Eigen::MatrixXd a(3, 3);
  a << 4, 1, 0, 1, 3, -1, 0, -1, 2;
  const LossClosure q = [&](std::span<const double> th, std::vector<double>* g) {
    const Eigen::Map<const Eigen::VectorXd> t(th.data(), 3);
    if (g) {
      const Eigen::VectorXd at = a * t;
      g->assign(at.data(), at.data() + 3);
    }
    return 0.5 * t.dot(a * t);
  };
  const std::vector<double> theta{0.3, -1.2, 0.8};
  std::vector<double> v{1.0, 2.0, 2.0};
  for (double& x : v) x /= 3.0;
  const auto hv = hessian_vector(theta, q, v, 1e-3);
  const Eigen::VectorXd want = a * Eigen::Map<const Eigen::VectorXd>(v.data(), 3);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(hv[i], want(i), 1e-12);
}

TEST(HessianVector, SymmetricOnRandomNet) {
  const pde::PdeProblem p = pde::burgers_problem();
  const std::vector<std::size_t> w{2, 10, 10, 1};
  const nn::Network net = nn::init_he(w, nn::Activation::tanh(), 3);
  const pde::SampleSet s = pde::make_samples(p, 10, 30, 1);
  const LossClosure loss = make_loss_closure(net, p, s);
  const std::vector<double> theta = net.parameters();
  Rng rng(4);
  auto unit = [&] {
    std::vector<double> v(theta.size());
    double n = 0;
    for (double& x : v) {
      x = rng.normal();
      n += x * x;
    }
    for (double& x : v) x /= std::sqrt(n);
    return v;
  };
  for (int trial = 0; trial < 5; ++trial) {
    const auto v = unit(), u = unit();
    const double h = default_hvp_step(theta);
    const auto hv = hessian_vector(theta, loss, v, h);
    const auto hu = hessian_vector(theta, loss, u, h);
    double a = 0, b = 0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      a += hv[i] * u[i];
      b += hu[i] * v[i];
    }
    EXPECT_NEAR(a, b, 1e-4 * std::max(std::abs(a), std::abs(b)));
  }
}

TEST(HessianVector, RejectsNonUnitDirection) {
  const LossClosure q = [](std::span<const double>, std::vector<double>* g) {
    if (g) *g = {0.0, 0.0};
    return 0.0;
  };
  const std::vector<double> theta{0, 0};
  EXPECT_THROW(hessian_vector(theta, q, std::vector<double>{1e-9, 0.0}, 1e-3), Error);
  EXPECT_THROW(hessian_vector(theta, q, std::vector<double>{1.0, 0.0}, 0.0), Error);
}

TEST(Landscape, QuadraticMatchesClosedForm) {
  const double a1 = 5.0, a2 = 2.0;
  const LossClosure q = [&](std::span<const double> th, std::vector<double>* g) {
    if (g) *g = {a1 * th[0], a2 * th[1]};
    return 0.5 * (a1 * th[0] * th[0] + a2 * th[1] * th[1]);
  };
  const std::vector<double> theta{0.0, 0.0};
  LandscapeConfig c;
  c.half_width = 1.5;
  c.grid_points = 7;
  c.hvp_step = 1e-3;
  const LandscapeSlice s = landscape_slice(theta, q, c);
  EXPECT_NEAR(s.eig1, a1, 1e-8);
  EXPECT_NEAR(s.eig2, a2, 1e-8);
  ASSERT_EQ(s.grid.size(), 49u);
  for (const auto& p : s.grid) EXPECT_NEAR(p.loss, 0.5 * (a1 * p.alpha * p.alpha + a2 * p.beta * p.beta), 1e-8);
  const auto& center = s.grid[24];
  EXPECT_EQ(center.alpha, 0.0);
  EXPECT_EQ(center.beta, 0.0);
  EXPECT_EQ(center.loss, s.center_loss);
}

TEST(Landscape, DirectionsOrthonormalOnNetwork) {
  const pde::PdeProblem p = pde::poisson_problem(pde::PoissonMode::Benchmark);
  const std::vector<std::size_t> w{1, 8, 8, 1};
  const nn::Network net = nn::init_he(w, nn::Activation::gaussian(0.3), 2);
  const pde::SampleSet s = pde::make_samples(p, 2, 20, 1);
  LandscapeConfig c;
  c.grid_points = 5;
  c.half_width = 0.1;
  c.lanczos_iters = 12;
  const std::vector<double> theta = net.parameters();
  const LossClosure loss = make_loss_closure(net, p, s);
  const LandscapeSlice sl = landscape_slice(theta, loss, c);
  double n1 = 0, n2 = 0, d = 0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    n1 += sl.direction1[i] * sl.direction1[i];
    n2 += sl.direction2[i] * sl.direction2[i];
    d += sl.direction1[i] * sl.direction2[i];
  }
  EXPECT_NEAR(n1, 1.0, 1e-8);
  EXPECT_NEAR(n2, 1.0, 1e-8);
  EXPECT_NEAR(d, 0.0, 1e-8);
  EXPECT_GE(sl.eig1, sl.eig2);
  EXPECT_EQ(sl.grid[12].loss, sl.center_loss);
  EXPECT_EQ(sl.center_loss, composite_loss(net, p, s).total);

  std::ostringstream csv, js;
  write_landscape_csv(csv, sl);
  write_landscape_json(js, sl);
  EXPECT_EQ(csv.str().substr(0, 15), "alpha,beta,loss");
  const auto j = nlohmann::json::parse(js.str());
  for (const char* key : {"eig1", "eig2", "center_loss"}) EXPECT_TRUE(j.contains(key));
}

TEST(Landscape, EvenGridRejected) {
  const LossClosure q = [](std::span<const double>, std::vector<double>* g) {
    if (g) *g = {0.0, 0.0};
    return 0.0;
  };
  LandscapeConfig c;
  c.grid_points = 4;
  EXPECT_THROW(landscape_slice(std::vector<double>{0, 0}, q, c), Error);
}
