#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "volrl/common.hpp"
#include "volrl/policy.hpp"

namespace {

using volrl::Mat;
using volrl::Policy;
using volrl::Real;
using volrl::Vec;

Vec make_phi(std::initializer_list<Real> xs) {
  Vec phi(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (Real x : xs) phi[i++] = x;
  return phi;
}

Vec random_theta(int dim, std::uint64_t seed, Real scale) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<Real> unif(-scale, scale);
  Vec t(dim);
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = unif(gen);
  return t;
}

// Central difference of log pi(a | phi) in theta; oracle for score().
Vec fd_log_prob_grad(const Policy& pol, const Vec& phi, int action, Real h) {
  Policy probe = pol;
  Vec g(pol.param_dim());
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    Vec th = pol.theta();
    th[k] += h;
    probe.set_theta(th);
    Real fp = std::log(probe.action_probs(phi)[action]);
    th[k] -= 2.0 * h;
    probe.set_theta(th);
    Real fm = std::log(probe.action_probs(phi)[action]);
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

TEST(PolicyConstruction, ShapesAndRejections) {
  Policy sm = Policy::softmax(3, 2);
  EXPECT_EQ(sm.param_dim(), 6);
  EXPECT_EQ(sm.feature_dim(), 3);
  EXPECT_EQ(sm.action_count(), 2);
  EXPECT_FALSE(sm.has_bias());

  Policy smb = Policy::softmax(3, 2, true);
  EXPECT_EQ(smb.param_dim(), 8);
  EXPECT_TRUE(smb.has_bias());

  Policy ga = Policy::gaussian(3, 0.5);
  EXPECT_EQ(ga.param_dim(), 3);
  EXPECT_DOUBLE_EQ(ga.sigma(), 0.5);
  Policy gab = Policy::gaussian(3, 0.5, true);
  EXPECT_EQ(gab.param_dim(), 4);

  EXPECT_THROW(Policy::softmax(0, 2), volrl::ValidationError);
  EXPECT_THROW(Policy::softmax(3, 1), volrl::ValidationError);
  EXPECT_THROW(Policy::gaussian(0, 0.5), volrl::ValidationError);
  EXPECT_THROW(Policy::gaussian(3, 0.0), volrl::ValidationError);
  EXPECT_THROW(sm.set_theta(Vec::Zero(5)), volrl::ValidationError);
}

TEST(Softmax, ZeroThetaIsUniform) {
  Policy pol = Policy::softmax(2, 4);
  Vec probs = pol.action_probs(make_phi({0.3, -1.2}));
  for (int a = 0; a < 4; ++a) EXPECT_NEAR(probs[a], 0.25, 1e-15);
  EXPECT_NEAR(probs.sum(), 1.0, 1e-15);
}

// [DERIVED] two actions, one feature: logits (0.3 x, -0.2 x) at x = 1.5.
TEST(Softmax, ProbabilitiesMatchClosedForm) {
  Policy pol = Policy::softmax(1, 2);
  Vec th(2);
  th << 0.3, -0.2;
  pol.set_theta(th);
  Vec probs = pol.action_probs(make_phi({1.5}));
  Real z = std::exp(0.45) + std::exp(-0.3);
  EXPECT_NEAR(probs[0], std::exp(0.45) / z, 1e-15);
  EXPECT_NEAR(probs[1], std::exp(-0.3) / z, 1e-15);
}

TEST(Softmax, ScoreMatchesIndicatorFormAndLogProbGradient) {
  Policy pol = Policy::softmax(2, 3, true);
  pol.set_theta(random_theta(pol.param_dim(), 11, 0.8));
  Vec phi = make_phi({0.7, -0.4});
  Vec x = pol.aug(phi);
  Vec probs = pol.action_probs(phi);

  for (int a = 0; a < 3; ++a) {
    Vec score = pol.score(phi, a);
    for (int i = 0; i < 3; ++i) {
      Real coef = (i == a ? 1.0 : 0.0) - probs[i];
      Vec block = score.segment(static_cast<Eigen::Index>(i) * x.size(),
                                x.size());
      EXPECT_LE((block - coef * x).cwiseAbs().maxCoeff(), 1e-14);
    }
    Vec fd = fd_log_prob_grad(pol, phi, a, 1e-6);
    EXPECT_LE((score - fd).cwiseAbs().maxCoeff(), 1e-8);
  }
  EXPECT_THROW(pol.score(phi, 3), volrl::ValidationError);
}

// [TRIVIAL] E_pi[score] = 0 for any exponential-family policy.
TEST(Softmax, ScoreExpectationVanishes) {
  Policy pol = Policy::softmax(3, 3);
  pol.set_theta(random_theta(pol.param_dim(), 5, 1.0));
  Vec phi = make_phi({0.2, 0.9, -0.5});
  Vec probs = pol.action_probs(phi);
  Vec mean = Vec::Zero(pol.param_dim());
  for (int a = 0; a < 3; ++a) mean += probs[a] * pol.score(phi, a);
  EXPECT_LE(mean.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Softmax, SampleFrequenciesMatchProbabilities) {
  Policy pol = Policy::softmax(1, 3);
  Vec th(3);
  th << 0.9, 0.0, -0.6;
  pol.set_theta(th);
  Vec phi = make_phi({1.0});
  Vec probs = pol.action_probs(phi);

  std::mt19937_64 gen(2718);
  const int n = 30000;
  Vec counts = Vec::Zero(3);
  for (int i = 0; i < n; ++i) counts[pol.sample_discrete(phi, gen)] += 1.0;
  for (int a = 0; a < 3; ++a) {
    Real freq = counts[a] / n;
    Real se = std::sqrt(probs[a] * (1.0 - probs[a]) / n);
    EXPECT_LE(std::abs(freq - probs[a]), 4.0 * se) << "action " << a;
  }
}

TEST(Gaussian, MeanScoreAndMoments) {
  Policy pol = Policy::gaussian(2, 0.7, true);
  pol.set_theta(random_theta(pol.param_dim(), 21, 0.5));
  Vec phi = make_phi({0.4, -1.1});
  Vec x = pol.aug(phi);
  Real mu = pol.theta().dot(x);
  EXPECT_NEAR(pol.mean_action(phi), mu, 1e-15);

  // score = (a - mu) / sigma^2 * x, checked against the closed form.
  Real action = mu + 0.9;
  Vec score = pol.score(phi, action);
  EXPECT_LE((score - (0.9 / 0.49) * x).cwiseAbs().maxCoeff(), 1e-13);

  std::mt19937_64 gen(31415);
  const int n = 20000;
  Real sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    Real a = pol.sample_continuous(phi, gen);
    sum += a;
    sum_sq += (a - mu) * (a - mu);
  }
  Real mean = sum / n;
  Real var = sum_sq / n;
  EXPECT_LE(std::abs(mean - mu), 4.0 * 0.7 / std::sqrt(Real(n)));
  EXPECT_LE(std::abs(var - 0.49), 4.0 * 0.49 * std::sqrt(2.0 / n));
}

// [DERIVED] for both families the information matrix equals the score
// covariance E_a[score score'], which is assembled here independently.
TEST(ObservedInformation, MatchesScoreCovariance) {
  Policy sm = Policy::softmax(2, 3);
  sm.set_theta(random_theta(sm.param_dim(), 9, 0.7));
  Vec phi = make_phi({0.8, -0.3});
  Vec probs = sm.action_probs(phi);
  Mat cov = Mat::Zero(sm.param_dim(), sm.param_dim());
  for (int a = 0; a < 3; ++a) {
    Vec sc = sm.score(phi, a);
    cov += probs[a] * sc * sc.transpose();
  }
  Mat info = sm.observed_information(phi);
  EXPECT_LE((info - cov).cwiseAbs().maxCoeff(), 1e-12);

  Policy ga = Policy::gaussian(2, 0.5);
  Vec x = ga.aug(phi);
  Mat expected = x * x.transpose() / 0.25;
  EXPECT_LE((ga.observed_information(phi) - expected).cwiseAbs().maxCoeff(),
            1e-13);
}

TEST(Kl, ClosedFormsAndCompatibilityChecks) {
  Vec phi = make_phi({1.0, 0.5});

  Policy p = Policy::softmax(2, 3);
  p.set_theta(random_theta(p.param_dim(), 3, 0.6));
  EXPECT_EQ(p.kl(p, phi), 0.0);

  Policy q = p;
  q.set_theta(random_theta(q.param_dim(), 4, 0.6));
  Vec pp = p.action_probs(phi), qq = q.action_probs(phi);
  Real direct = 0.0;
  for (int a = 0; a < 3; ++a) direct += pp[a] * std::log(pp[a] / qq[a]);
  EXPECT_NEAR(p.kl(q, phi), direct, 1e-14);
  EXPECT_GE(p.kl(q, phi), 0.0);

  // [DERIVED] Gaussian KL with shared sigma: (mu1 - mu2)^2 / (2 sigma^2).
  Policy g1 = Policy::gaussian(2, 0.5);
  Policy g2 = g1;
  Vec t1(2), t2(2);
  t1 << 0.3, -0.1;
  t2 << -0.2, 0.4;
  g1.set_theta(t1);
  g2.set_theta(t2);
  Real dmu = (t1 - t2).dot(phi);
  EXPECT_NEAR(g1.kl(g2, phi), dmu * dmu / 0.5, 1e-14);

  Policy g3 = Policy::gaussian(2, 0.9);
  EXPECT_THROW(g1.kl(g3, phi), volrl::ValidationError);
  EXPECT_THROW(p.kl(g1, phi), volrl::ValidationError);

  std::vector<Vec> states = {phi, make_phi({-0.6, 0.2}),
                             make_phi({0.1, 0.1})};
  Real expect_max = 0.0;
  for (const Vec& s : states) expect_max = std::max(expect_max, p.kl(q, s));
  EXPECT_DOUBLE_EQ(p.kl_max(q, states), expect_max);
  EXPECT_THROW(p.kl_max(q, {}), volrl::ValidationError);
}

// [DERIVED] matrix-free product against the explicitly averaged Fisher
// matrix built from observed_information.
TEST(FisherVectorProduct, MatchesExplicitMatrix) {
  std::vector<Vec> states = {make_phi({0.9, -0.2}), make_phi({-0.4, 0.7}),
                             make_phi({0.05, 1.1})};
  for (int which : {0, 1}) {
    Policy pol = which == 0 ? Policy::softmax(2, 3, true)
                            : Policy::gaussian(2, 0.6, true);
    pol.set_theta(random_theta(pol.param_dim(), 40 + which, 0.5));
    Mat fisher = Mat::Zero(pol.param_dim(), pol.param_dim());
    for (const Vec& s : states) fisher += pol.observed_information(s);
    fisher /= static_cast<Real>(states.size());

    Vec v = random_theta(pol.param_dim(), 77 + which, 1.0);
    const Real damping = 1e-3;
    Vec fv = pol.fisher_vector_product(states, v, damping);
    Vec expected = fisher * v + damping * v;
    EXPECT_LE((fv - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
  Policy pol = Policy::softmax(2, 2);
  EXPECT_THROW(pol.fisher_vector_product({}, Vec::Zero(4)),
               volrl::ValidationError);
  EXPECT_THROW(pol.fisher_vector_product(states, Vec::Zero(3)),
               volrl::ValidationError);
}

// [DERIVED] symmetric binary softmax at theta = 0 with a unit feature:
// psi = sqrt(1/2), kappa = 1/2, and the categorical covariance
// [[1/4, -1/4], [-1/4, 1/4]] has spectral norm 1/2, so xi = 1/2.
TEST(SmoothingConstants, SymmetricBinaryClosedForm) {
  Policy pol = Policy::softmax(1, 2);
  std::vector<Vec> states = {make_phi({1.0})};
  volrl::SmoothingConstants c = pol.smoothing_constants(states);
  EXPECT_NEAR(c.psi, std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(c.kappa, 0.5, 1e-12);
  EXPECT_NEAR(c.xi, 0.5, 1e-12);

  volrl::SmoothingConstants doubled = pol.smoothing_constants(states, 2.0);
  EXPECT_NEAR(doubled.psi, 2.0 * c.psi, 1e-12);
  EXPECT_NEAR(doubled.kappa, 2.0 * c.kappa, 1e-12);
  EXPECT_NEAR(doubled.xi, 2.0 * c.xi, 1e-12);
  EXPECT_THROW(pol.smoothing_constants(states, 0.5), volrl::ValidationError);
  EXPECT_THROW(pol.smoothing_constants({}), volrl::ValidationError);
}

TEST(SmoothingConstants, UniformBoundsDominatePointwise) {
  std::mt19937_64 gen(123);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Policy pol = Policy::softmax(3, 3);
    pol.set_theta(random_theta(pol.param_dim(), seed, 1.5));
    std::vector<Vec> states;
    for (int k = 0; k < 8; ++k) {
      Vec phi(3);
      for (int i = 0; i < 3; ++i) phi[i] = gauss(gen);
      phi /= phi.norm();
      states.push_back(phi);
    }
    volrl::SmoothingConstants point = pol.smoothing_constants(states);
    volrl::SmoothingConstants uni = pol.uniform_smoothing_constants(1.0);
    EXPECT_NEAR(uni.psi, std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(uni.kappa, 2.0, 1e-15);
    EXPECT_NEAR(uni.xi, 0.5, 1e-15);
    EXPECT_GE(uni.psi + 1e-12, point.psi);
    EXPECT_GE(uni.kappa + 1e-12, point.kappa);
    EXPECT_GE(uni.xi + 1e-12, point.xi);
  }

  // [DERIVED] Gaussian closed forms at b = 2, sigma = 0.5.
  Policy ga = Policy::gaussian(3, 0.5);
  volrl::SmoothingConstants gc = ga.uniform_smoothing_constants(2.0);
  EXPECT_NEAR(gc.psi, 4.0 * std::sqrt(2.0 / M_PI), 1e-14);
  EXPECT_NEAR(gc.kappa, 16.0, 1e-14);
  EXPECT_NEAR(gc.xi, 16.0, 1e-14);
  EXPECT_THROW(ga.uniform_smoothing_constants(0.0), volrl::ValidationError);
}

TEST(Checkpoint, RoundTripsAllFieldsExactly) {
  const std::string path = "policy_roundtrip_test.txt";
  Policy pol = Policy::softmax(3, 2, true);
  pol.set_theta(random_theta(pol.param_dim(), 55, 1.3));
  pol.save(path);
  Policy back = Policy::load(path);
  EXPECT_EQ(back.kind(), pol.kind());
  EXPECT_EQ(back.feature_dim(), 3);
  EXPECT_EQ(back.action_count(), 2);
  EXPECT_TRUE(back.has_bias());
  EXPECT_EQ((back.theta() - pol.theta()).cwiseAbs().maxCoeff(), 0.0);

  Policy ga = Policy::gaussian(2, 0.37);
  ga.set_theta(random_theta(ga.param_dim(), 56, 0.4));
  ga.save(path);
  Policy ga_back = Policy::load(path);
  EXPECT_EQ(ga_back.kind(), volrl::PolicyKind::gaussian_linear);
  EXPECT_DOUBLE_EQ(ga_back.sigma(), 0.37);
  EXPECT_EQ((ga_back.theta() - ga.theta()).cwiseAbs().maxCoeff(), 0.0);
  std::remove(path.c_str());
}

TEST(Checkpoint, RejectsMissingOrMalformedFiles) {
  EXPECT_THROW(Policy::load("no_such_checkpoint_file.txt"),
               volrl::ValidationError);
  const std::string path = "policy_bad_header_test.txt";
  std::ofstream(path) << "not-a-checkpoint 9\n";
  EXPECT_THROW(Policy::load(path), volrl::ValidationError);
  std::remove(path.c_str());
}

}  // namespace
