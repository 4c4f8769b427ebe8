#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "areapo/errors.hpp"
#include "areapo/nn.hpp"

using namespace areapo;
using namespace areapo::nn;

namespace {

Eigen::MatrixXd randn(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = g(rng);
  return m;
}

Mlp<double> random_net(const std::vector<int>& sizes, std::mt19937_64& rng) {
  Mlp<double> net(sizes);
  for (int i = 0; i < net.n_layers(); ++i) {
    net.weight(i) = randn(sizes[i + 1], sizes[i], rng, 0.7);
    net.bias(i) = randn(sizes[i + 1], 1, rng, 0.3);
  }
  return net;
}

// Straight-line evaluation of one sample, written without Eigen products.
std::vector<double> direct_eval(const Mlp<double>& net, std::vector<double> x) {
  for (int l = 0; l < net.n_layers(); ++l) {
    std::vector<double> y(static_cast<std::size_t>(net.weight(l).rows()));
    for (std::size_t r = 0; r < y.size(); ++r) {
      double acc = net.bias(l)(static_cast<Eigen::Index>(r));
      for (std::size_t c = 0; c < x.size(); ++c)
        acc += net.weight(l)(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * x[c];
      y[r] = (l + 1 < net.n_layers() && acc < 0) ? 0.0 : acc;
    }
    x = std::move(y);
  }
  return x;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7}); }

}  // namespace

TEST(Mlp, ZeroNetworkOutputsZero) {
  Mlp<double> net({4, 8, 3});
  std::mt19937_64 rng(1);
  EXPECT_EQ(net.forward(randn(4, 5, rng)), Eigen::MatrixXd::Zero(3, 5));
}

TEST(Mlp, IdentityLayerEchoesInput) {
  Mlp<double> net({3, 3});
  net.weight(0) = Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd x = (Eigen::MatrixXd(3, 2) << 1, -2, 3, -4, 5, -6).finished();
  EXPECT_EQ(net.forward(x), x);
}

TEST(Mlp, MatchesDirectEvaluation) {
  std::mt19937_64 rng(2);
  const Mlp<double> net = random_net({4, 7, 5, 2}, rng);
  const Eigen::MatrixXd x = randn(4, 6, rng);
  const Eigen::MatrixXd y = net.forward(x);
  for (int c = 0; c < 6; ++c) {
    const auto ref = direct_eval(net, {x(0, c), x(1, c), x(2, c), x(3, c)});
    for (int r = 0; r < 2; ++r) EXPECT_NEAR(y(r, c), ref[r], 1e-12);
  }
}

TEST(Mlp, ShapeMismatchRejected) {
  Mlp<double> net({4, 2});
  EXPECT_THROW(net.forward(Eigen::MatrixXd::Zero(3, 1)), InvalidInput);
  EXPECT_THROW(Mlp<double>({4}), InvalidInput);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (const auto& sizes : {std::vector<int>{4, 8, 1}, std::vector<int>{4, 16, 16, 2}}) {
    Mlp<double> net = random_net(sizes, rng);
    const Eigen::MatrixXd x = randn(4, 5, rng);
    const Eigen::MatrixXd dy = randn(sizes.back(), 5, rng);
    Mlp<double>::Cache cache;
    net.forward(x, &cache);
    Eigen::MatrixXd dx;
    const Eigen::VectorXd g = Mlp<double>::flatten(net.backward(cache, dy, &dx));
    const Eigen::VectorXd theta = net.flatten();
    const double h = 1e-5;
    double worst = 0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Mlp<double> q = net;
      Eigen::VectorXd t = theta;
      t(i) += h;
      q.assign(t);
      const double fp = q.forward(x).cwiseProduct(dy).sum();
      t(i) -= 2 * h;
      q.assign(t);
      const double fm = q.forward(x).cwiseProduct(dy).sum();
      worst = std::max(worst, rel_err(g(i), (fp - fm) / (2 * h)));
    }
    EXPECT_LT(worst, 1e-4);
    double worst_x = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const double num = (net.forward(xp).cwiseProduct(dy).sum() - net.forward(xm).cwiseProduct(dy).sum()) / (2 * h);
      worst_x = std::max(worst_x, rel_err(dx(i), num));
    }
    EXPECT_LT(worst_x, 1e-4);
  }
}

TEST(Mlp, ZeroOutputGradientGivesZeroGradients) {
  std::mt19937_64 rng(4);
  const Mlp<double> net = random_net({4, 6, 2}, rng);
  Mlp<double>::Cache cache;
  net.forward(randn(4, 3, rng), &cache);
  const Eigen::VectorXd g = Mlp<double>::flatten(net.backward(cache, Eigen::MatrixXd::Zero(2, 3)));
  EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, SingleLayerWeightGradientIsOuterProduct) {
  std::mt19937_64 rng(5);
  const Mlp<double> net = random_net({3, 2}, rng);
  const Eigen::MatrixXd x = randn(3, 1, rng), dy = randn(2, 1, rng);
  Mlp<double>::Cache cache;
  net.forward(x, &cache);
  const auto g = net.backward(cache, dy);
  EXPECT_LT((g.weights[0] - dy * x.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((g.biases[0] - dy).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Mlp, StaleCacheRejected) {
  std::mt19937_64 rng(6);
  Mlp<double> net = random_net({2, 3, 1}, rng);
  Mlp<double>::Cache cache;
  net.forward(randn(2, 1, rng), &cache);
  net.bias(0)(0) += 1.0;
  EXPECT_THROW(net.backward(cache, Eigen::MatrixXd::Ones(1, 1)), InvalidInput);
}

TEST(Mlp, FlattenAssignRoundTrip) {
  std::mt19937_64 rng(7);
  const Mlp<double> a = random_net({4, 5, 2}, rng);
  Mlp<double> b({4, 5, 2});
  b.assign(a.flatten());
  EXPECT_EQ(b.flatten(), a.flatten());
  EXPECT_EQ(a.parameter_count(), 4 * 5 + 5 + 5 * 2 + 2);
  EXPECT_THROW(b.assign(Eigen::VectorXd::Zero(3)), InvalidInput);
}

TEST(Mlp, OrthogonalInitHasScaledOrthonormalRows) {
  std::mt19937_64 rng(8);
  Mlp<double> net({4, 16, 16, 1});
  net.init_orthogonal(rng, std::sqrt(2.0), 0.01);
  const Eigen::MatrixXd w0 = net.weight(0);  // 16 x 4: orthonormal columns
  EXPECT_LT((w0.transpose() * w0 - 2.0 * Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::MatrixXd w1 = net.weight(1);
  EXPECT_LT((w1.transpose() * w1 - 2.0 * Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(net.weight(2).norm(), 0.01, 1e-12);
  EXPECT_EQ(net.bias(0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Policy, LogProbAtMeanClosedForm) {
  std::mt19937_64 rng(9);
  const GaussianPolicy pi = GaussianPolicy::create(4, {8}, -1.0, rng);
  const Eigen::VectorXd obs = randn(4, 1, rng);
  const double mu = policy_mean(pi, obs);
  EXPECT_NEAR(log_prob(pi, obs, mu), -0.5 * std::log(2 * M_PI) + 1.0, 1e-14);
  EXPECT_EQ(pi.log_std, -1.0);
}

TEST(Policy, DegenerateStdSamplesTheClampedMean) {
  std::mt19937_64 rng(10);
  GaussianPolicy pi = GaussianPolicy::create(4, {8}, -20.0, rng);
  pi.mean_net.bias(1)(0) = 3.0;  // mean well outside the action range
  const Eigen::VectorXd obs = randn(4, 1, rng);
  const PolicySample s = policy_sample(pi, obs, rng);
  EXPECT_EQ(s.action, 1.0);
  EXPECT_NEAR(s.pre_squash, policy_mean(pi, obs), 1e-7);
  EXPECT_NEAR(s.log_prob, gaussian_log_density(s.pre_squash, policy_mean(pi, obs), -20.0), 1e-9);
  EXPECT_EQ(policy_action(pi, obs), 1.0);
}

TEST(Policy, SampleMomentsAndEntropy) {
  std::mt19937_64 rng(11);
  const GaussianPolicy pi = GaussianPolicy::create(4, {8}, -1.0, rng);
  const Eigen::VectorXd obs = randn(4, 1, rng);
  const double mu = policy_mean(pi, obs);
  const int n = 100000;
  double s = 0, ss = 0, nll = 0;
  for (int k = 0; k < n; ++k) {
    const PolicySample x = policy_sample(pi, obs, rng);
    s += x.pre_squash;
    ss += x.pre_squash * x.pre_squash;
    nll -= x.log_prob;
    EXPECT_LE(std::abs(x.action), 1.0);
  }
  const double mean = s / n, sd = std::sqrt(ss / n - mean * mean);
  EXPECT_NEAR(mean, mu, 0.01 * std::max(std::abs(mu), std::exp(-1.0)));
  EXPECT_NEAR(sd, std::exp(-1.0), 0.01 * std::exp(-1.0));
  EXPECT_NEAR(nll / n, gaussian_entropy(-1.0), 0.01 * std::abs(gaussian_entropy(-1.0)));
}

TEST(Policy, DensityIntegratesToOne) {
  // 40-point Gauss-Hermite rule via Golub-Welsch.
  const int n = 40;
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) j(i, i - 1) = j(i - 1, i) = std::sqrt(i / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  const Eigen::VectorXd nodes = es.eigenvalues();
  const Eigen::VectorXd weights = std::sqrt(M_PI) * es.eigenvectors().row(0).transpose().array().square();
  for (double log_std : {-1.0, 0.3, -2.5}) {
    const double mean = 0.37, sigma = std::exp(log_std);
    double total = 0;
    for (int i = 0; i < n; ++i) {
      // int f(u) du with u = mean + sqrt(2) sigma x and weight exp(-x^2).
      const double u = mean + std::sqrt(2.0) * sigma * nodes(i);
      const double x2 = nodes(i) * nodes(i);
      total += weights(i) * std::exp(gaussian_log_density(u, mean, log_std) + x2) * std::sqrt(2.0) * sigma;
    }
    EXPECT_NEAR(total, 1.0, 1e-6) << log_std;
  }
}

TEST(Policy, BatchLogProbAndRatioIdentity) {
  std::mt19937_64 rng(12);
  const GaussianPolicy pi = GaussianPolicy::create(4, {16, 16}, -1.0, rng);
  const Eigen::MatrixXd obs = randn(4, 32, rng);
  const auto samples = policy_sample_batch(pi, obs, rng);
  Eigen::RowVectorXd pre(32), old(32);
  for (int i = 0; i < 32; ++i) {
    pre(i) = samples[i].pre_squash;
    old(i) = samples[i].log_prob;
  }
  const LogProbBatch b = log_prob_batch(pi, obs, pre);
  EXPECT_LT(((b.log_prob - old).array().exp() - 1.0).abs().maxCoeff(), 1e-12);
  for (int i = 0; i < 32; ++i) EXPECT_NEAR(b.log_prob(i), log_prob(pi, obs.col(i), pre(i)), 1e-12);
}

TEST(Policy, SameSeedSameSamples) {
  std::mt19937_64 r1(13), r2(13);
  const GaussianPolicy a = GaussianPolicy::create(4, {8}, -1.0, r1);
  const GaussianPolicy b = GaussianPolicy::create(4, {8}, -1.0, r2);
  EXPECT_EQ(a.flatten(), b.flatten());
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Ones(4, 3);
  const auto sa = policy_sample_batch(a, obs, r1), sb = policy_sample_batch(b, obs, r2);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(sa[i].pre_squash, sb[i].pre_squash);
}

TEST(Policy, LogProbGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  GaussianPolicy pi = GaussianPolicy::create(4, {16, 16}, -0.7, rng);
  pi.mean_net.weight(2) *= 50.0;
  const Eigen::MatrixXd obs = randn(4, 10, rng);
  const Eigen::RowVectorXd pre = randn(1, 10, rng), w = randn(1, 10, rng);
  const Eigen::VectorXd g = log_prob_gradient(pi, log_prob_batch(pi, obs, pre), pre, w);
  const Eigen::VectorXd theta = pi.flatten();
  ASSERT_EQ(g.size(), theta.size());
  const double h = 1e-5;
  double worst_net = 0, worst_std = 0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    GaussianPolicy q = pi;
    Eigen::VectorXd t = theta;
    t(i) += h;
    q.assign(t);
    const double fp = log_prob_batch(q, obs, pre).log_prob.dot(w);
    t(i) -= 2 * h;
    q.assign(t);
    const double fm = log_prob_batch(q, obs, pre).log_prob.dot(w);
    const double e = rel_err(g(i), (fp - fm) / (2 * h));
    if (i + 1 == theta.size())
      worst_std = e;
    else
      worst_net = std::max(worst_net, e);
  }
  EXPECT_LT(worst_net, 1e-4);
  EXPECT_LT(worst_std, 1e-4);
}

TEST(TanhPolicy, SampleIsSquashedAndDensityHasJacobian) {
  std::mt19937_64 rng(21);
  const GaussianPolicy pi = GaussianPolicy::create(4, {8}, -0.4, rng, Squash::Tanh);
  EXPECT_EQ(pi.squash, Squash::Tanh);
  const Eigen::MatrixXd obs = randn(4, 64, rng);
  const auto samples = policy_sample_batch(pi, obs, rng);
  for (int i = 0; i < 64; ++i) {
    const auto& x = samples[i];
    const double mu = policy_mean(pi, obs.col(i));
    EXPECT_DOUBLE_EQ(x.action, std::tanh(x.pre_squash));
    const double t = std::tanh(x.pre_squash);
    EXPECT_NEAR(x.log_prob, gaussian_log_density(x.pre_squash, mu, -0.4) - std::log(1.0 - t * t), 1e-9);
    EXPECT_NEAR(log_prob(pi, obs.col(i), x.pre_squash), x.log_prob, 1e-12);
  }
  EXPECT_DOUBLE_EQ(policy_action(pi, obs.col(0)), std::tanh(policy_mean(pi, obs.col(0))));
}

TEST(TanhPolicy, JacobianStableInTheTails) {
  std::mt19937_64 rng(22);
  const GaussianPolicy pi = GaussianPolicy::create(4, {8}, 0.0, rng, Squash::Tanh);
  const Eigen::VectorXd obs = randn(4, 1, rng);
  const double mu = policy_mean(pi, obs);
  for (double u : {25.0, -40.0, 400.0}) {
    const double lp = log_prob(pi, obs, u);
    ASSERT_TRUE(std::isfinite(lp)) << u;
    // 1 - tanh(u)^2 = 4 e^{-2|u|} / (1 + e^{-2|u|})^2
    EXPECT_NEAR(lp, gaussian_log_density(u, mu, 0.0) + 2.0 * std::abs(u) - std::log(4.0), 1e-6 * std::abs(lp));
  }
}

TEST(TanhPolicy, SquashedDensityIntegratesToOneOnActionRange) {
  std::mt19937_64 rng(23);
  for (double log_std : {-1.0, 0.0}) {
    const GaussianPolicy pi = GaussianPolicy::create(4, {8}, log_std, rng, Squash::Tanh);
    const Eigen::VectorXd obs = randn(4, 1, rng);
    const int n = 200000;
    double total = 0;
    for (int k = 0; k < n; ++k) {
      const double a = -1.0 + (k + 0.5) * 2.0 / n;
      total += std::exp(log_prob(pi, obs, std::atanh(a))) * 2.0 / n;
    }
    EXPECT_NEAR(total, 1.0, 1e-4) << log_std;
  }
}

TEST(TanhPolicy, EntropyBoundedByUniformWhileClampIsNot) {
  // The uniform law on [-1, 1] has the largest entropy, ln 2.
  std::mt19937_64 rng(24);
  for (double log_std : {0.0, 2.0, 5.0}) {
    GaussianPolicy tanh_pi = GaussianPolicy::create(4, {8}, log_std, rng, Squash::Tanh);
    GaussianPolicy clamp_pi = tanh_pi;
    clamp_pi.squash = Squash::Clamp;
    const Eigen::MatrixXd obs = Eigen::MatrixXd::Zero(4, 20000);
    double h_tanh = 0, h_clamp = 0;
    for (const auto& x : policy_sample_batch(tanh_pi, obs, rng)) h_tanh -= x.log_prob;
    for (const auto& x : policy_sample_batch(clamp_pi, obs, rng)) h_clamp -= x.log_prob;
    h_tanh /= obs.cols();
    h_clamp /= obs.cols();
    EXPECT_LT(h_tanh, std::log(2.0) + 0.02) << log_std;
    EXPECT_NEAR(h_clamp, gaussian_entropy(log_std), 0.05) << log_std;
  }
}

TEST(TanhPolicy, GradientIgnoresParameterFreeJacobian) {
  std::mt19937_64 rng(25);
  GaussianPolicy pi = GaussianPolicy::create(4, {16}, -0.5, rng, Squash::Tanh);
  pi.mean_net.weight(1) *= 50.0;
  const Eigen::MatrixXd obs = randn(4, 8, rng);
  const Eigen::RowVectorXd pre = randn(1, 8, rng), w = randn(1, 8, rng);
  const Eigen::VectorXd g = log_prob_gradient(pi, log_prob_batch(pi, obs, pre), pre, w);
  const Eigen::VectorXd theta = pi.flatten();
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    GaussianPolicy q = pi;
    Eigen::VectorXd t = theta;
    t(i) += h;
    q.assign(t);
    const double fp = log_prob_batch(q, obs, pre).log_prob.dot(w);
    t(i) -= 2 * h;
    q.assign(t);
    const double fm = log_prob_batch(q, obs, pre).log_prob.dot(w);
    EXPECT_LT(rel_err(g(i), (fp - fm) / (2 * h)), 1e-4) << i;
  }
}

TEST(Critic, TwoHeadsWithUnitOutputGain) {
  std::mt19937_64 rng(15);
  const Critic c = Critic::create(4, {32, 32}, rng);
  EXPECT_EQ(c.net.output_size(), 2);
  const Eigen::MatrixXd w = c.net.weight(2);  // 2 x 32, orthonormal rows
  EXPECT_LT((w * w.transpose() - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(c.values(Eigen::MatrixXd::Zero(4, 3)).rows(), 2);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  OptimizerState opt = OptimizerState::zeros(3);
  Eigen::VectorXd p(3);
  p << 1, -2, 3;
  const Eigen::VectorXd before = p;
  optimizer_step(opt, p, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.step, 1);
}

TEST(Adam, ClipsGlobalNormToTen) {
  OptimizerState opt = OptimizerState::zeros(2);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
  const Eigen::VectorXd g = Eigen::Vector2d(12.0, 16.0);  // norm 20
  const OptimizerReport r = optimizer_step(opt, p, g, 10.0);
  EXPECT_EQ(r.grad_norm, 20.0);
  EXPECT_EQ(r.clip_scale, 0.5);
  EXPECT_NEAR(opt.m(0), 0.1 * 6.0, 1e-15);
  EXPECT_NEAR(opt.m(1), 0.1 * 8.0, 1e-15);
}

TEST(Adam, TwoStepHandRecurrence) {
  AdamConfig cfg;
  OptimizerState opt = OptimizerState::zeros(1, cfg);
  Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 0.5);
  double m = 0, v = 0, x = 0.5;
  for (int t = 1; t <= 2; ++t) {
    optimizer_step(opt, p, Eigen::VectorXd::Ones(1));
    m = 0.9 * m + 0.1;
    v = 0.999 * v + 0.001;
    const double mhat = m / (1 - std::pow(0.9, t)), vhat = v / (1 - std::pow(0.999, t));
    x -= 5e-4 * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(p(0), x, 1e-15) << "step " << t;
  }
}

TEST(Adam, NonFiniteGradientAbortsWithoutMutation) {
  OptimizerState opt = OptimizerState::zeros(2);
  Eigen::VectorXd p = Eigen::Vector2d(1.0, 2.0);
  optimizer_step(opt, p, Eigen::Vector2d(0.1, 0.2));
  const OptimizerState saved = opt;
  const Eigen::VectorXd before = p;
  EXPECT_THROW(optimizer_step(opt, p, Eigen::Vector2d(NAN, 0.0)), NumericalError);
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.m, saved.m);
  EXPECT_EQ(opt.v, saved.v);
  EXPECT_EQ(opt.step, saved.step);
}
