#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "volrl/common.hpp"
#include "volrl/numerics.hpp"

namespace {

using volrl::Mat;
using volrl::Real;
using volrl::Vec;

TEST(IncompleteBeta, MatchesSmallIntegerClosedForms) {
  // I_x(1,1) = x, I_x(2,1) = x^2, I_x(1,2) = 1 - (1-x)^2.
  for (Real x : {0.05, 0.3, 0.77, 0.99}) {
    EXPECT_NEAR(volrl::regularized_incomplete_beta(1.0, 1.0, x), x, 1e-14);
    EXPECT_NEAR(volrl::regularized_incomplete_beta(2.0, 1.0, x), x * x,
                1e-14);
    EXPECT_NEAR(volrl::regularized_incomplete_beta(1.0, 2.0, x),
                1.0 - (1.0 - x) * (1.0 - x), 1e-14);
  }
}

TEST(IncompleteBeta, SymmetryIdentity) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<Real> ux(0.01, 0.99);
  std::uniform_real_distribution<Real> uab(0.5, 20.0);
  for (int k = 0; k < 200; ++k) {
    Real x = ux(gen), a = uab(gen), b = uab(gen);
    Real s = volrl::regularized_incomplete_beta(a, b, x) +
             volrl::regularized_incomplete_beta(b, a, 1.0 - x);
    EXPECT_NEAR(s, 1.0, 1e-12) << "a=" << a << " b=" << b << " x=" << x;
  }
}

TEST(IncompleteBeta, RejectsBadArguments) {
  EXPECT_THROW(volrl::regularized_incomplete_beta(0.0, 1.0, 0.5),
               volrl::ValidationError);
  EXPECT_THROW(volrl::regularized_incomplete_beta(1.0, 1.0, 1.5),
               volrl::ValidationError);
}

TEST(FDistribution, CdfAtOneWithEqualDofsIsHalf) {
  for (Real d : {1.0, 2.0, 5.0, 17.0, 40.0})
    EXPECT_NEAR(volrl::f_cdf(1.0, d, d), 0.5, 1e-12);
}

TEST(FDistribution, QuantileMatchesSquaredTQuantile) {
  // An F(1, nu) variable is the square of a t(nu) variable, so the 0.95
  // F-quantile equals the squared two-sided-0.95 t-quantile. The t
  // quantile comes from an independent quadrature of the t density.
  Real t975 = oracles::t_quantile(0.975, 10.0);
  Real f95 = volrl::f_quantile(0.95, 1.0, 10.0);
  EXPECT_NEAR(f95, t975 * t975, 1e-6 * f95);
}

TEST(FDistribution, QuantileRoundTrip) {
  for (Real p : {0.01, 0.5, 0.99}) {
    Real q = volrl::f_quantile(p, 3.0, 40.0);
    EXPECT_NEAR(volrl::f_cdf(q, 3.0, 40.0), p, 1e-8);
  }
}

TEST(FDistribution, QuantileMonotoneInP) {
  Real prev = 0.0;
  for (Real p : {0.05, 0.2, 0.5, 0.8, 0.95, 0.999}) {
    Real q = volrl::f_quantile(p, 4.0, 12.0);
    EXPECT_GT(q, prev);
    prev = q;
  }
}

TEST(FDistribution, QuantileRejectsPOutsideOpenUnitInterval) {
  EXPECT_THROW(volrl::f_quantile(0.0, 3.0, 40.0), volrl::ValidationError);
  EXPECT_THROW(volrl::f_quantile(1.0, 3.0, 40.0), volrl::ValidationError);
  EXPECT_THROW(volrl::f_quantile(-0.2, 3.0, 40.0), volrl::ValidationError);
}

TEST(SampleCovariance, IdenticalVectorsGiveZeroMatrixAndZeroNorm) {
  Mat x(5, 3);
  for (int i = 0; i < 5; ++i) x.row(i) << 1.0, -2.0, 0.5;
  Mat s = volrl::sample_covariance(x);
  ASSERT_EQ(s.rows(), 3);
  ASSERT_EQ(s.cols(), 3);
  EXPECT_EQ(s.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(volrl::spectral_norm(s), 0.0);
}

TEST(SampleCovariance, UsesDivisorN) {
  Mat x(2, 1);
  x << 0.0, 2.0;
  Mat s = volrl::sample_covariance(x);
  // mean 1, deviations -1 and +1, divisor 2.
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
}

TEST(SampleCovariance, RejectsFewerThanTwoVectors) {
  Mat x(1, 3);
  x << 1.0, 2.0, 3.0;
  EXPECT_THROW(volrl::sample_covariance(x), volrl::ValidationError);
}

Mat random_psd(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<Real> nd(0.0, 1.0);
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = nd(gen);
  return a * a.transpose();
}

TEST(SpectralNorm, DiagonalCase) {
  Mat d = Mat::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  EXPECT_NEAR(volrl::spectral_norm(d), 3.0, 1e-10);
}

TEST(SpectralNorm, MatchesJacobiOracleOnRandomPsd) {
  for (std::uint64_t seed : {3u, 17u, 51u, 99u, 123u}) {
    Mat psd = random_psd(10, seed);
    Real ours = volrl::spectral_norm(psd);
    Real oracle = oracles::jacobi_max_abs_eig(psd);
    EXPECT_NEAR(ours, oracle, 1e-8 * oracle) << "seed=" << seed;
  }
}

TEST(SpectralNorm, NeverExceedsGershgorinBound) {
  for (std::uint64_t seed : {5u, 21u, 77u}) {
    Mat psd = random_psd(8, seed);
    Real bound = psd.cwiseAbs().rowwise().sum().maxCoeff();
    EXPECT_LE(volrl::spectral_norm(psd), bound + 1e-12);
  }
}

TEST(SpectralNorm, RejectsNonSquareInput) {
  Mat x(2, 3);
  x.setZero();
  EXPECT_THROW(volrl::spectral_norm(x), volrl::ValidationError);
}

}  // namespace
