#pragma once
// Scalar special functions and small matrix utilities backing the
// confidence machinery: regularized incomplete beta, F-distribution
// cdf/quantile, sample covariance, spectral norm by power iteration.

#include <cmath>
#include <limits>
#include <random>

#include "volrl/common.hpp"

namespace volrl {

namespace detail {

inline Real log_beta(Real a, Real b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for the incomplete beta (modified Lentz).
// Convergence requires x < (a+1)/(a+b+2); the caller applies the
// symmetry transform otherwise.
inline Real beta_cf(Real a, Real b, Real x) {
  constexpr Real tiny = 1e-300;
  constexpr Real eps = 1e-15;
  const int max_iter = 500;

  Real qab = a + b, qap = a + 1.0, qam = a - 1.0;
  Real c = 1.0;
  Real d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  Real h = d;
  for (int m = 1; m <= max_iter; ++m) {
    Real m2 = 2.0 * m;
    Real aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    Real del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/** Regularized incomplete beta I_x(a, b).
 *  Continued-fraction evaluation with the symmetry transform
 *  I_x(a,b) = 1 - I_{1-x}(b,a) for the slow-convergence half.
 *  Accuracy ~1e-14 relative; the symmetry identity holds to 1e-12.
 *  \pre a > 0, b > 0, x in [0, 1]. */
inline Real regularized_incomplete_beta(Real a, Real b, Real x) {
  require(a > 0.0 && b > 0.0, "incomplete beta: a, b must be positive");
  require(x >= 0.0 && x <= 1.0, "incomplete beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  Real front = std::exp(a * std::log(x) + b * std::log1p(-x) -
                        detail::log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * detail::beta_cf(a, b, x) / a;
  Real front_sym = std::exp(b * std::log1p(-x) + a * std::log(x) -
                            detail::log_beta(b, a));
  return 1.0 - front_sym * detail::beta_cf(b, a, 1.0 - x) / b;
}

/** Density of the F distribution with (d1, d2) degrees of freedom. */
inline Real f_pdf(Real x, Real d1, Real d2) {
  require(d1 > 0.0 && d2 > 0.0, "f_pdf: degrees of freedom must be positive");
  if (x <= 0.0) return 0.0;
  Real lg = 0.5 * d1 * std::log(d1) + 0.5 * d2 * std::log(d2) +
            (0.5 * d1 - 1.0) * std::log(x) -
            0.5 * (d1 + d2) * std::log(d2 + d1 * x) -
            detail::log_beta(0.5 * d1, 0.5 * d2);
  return std::exp(lg);
}

/** Cdf of the F distribution via the incomplete beta. */
inline Real f_cdf(Real x, Real d1, Real d2) {
  require(d1 > 0.0 && d2 > 0.0, "f_cdf: degrees of freedom must be positive");
  if (x <= 0.0) return 0.0;
  Real y = d1 * x / (d1 * x + d2);
  return regularized_incomplete_beta(0.5 * d1, 0.5 * d2, y);
}

/** Quantile of the F distribution: smallest x with f_cdf(x) >= p.
 *  Newton iterations safeguarded by a bracketing bisection; round-trips
 *  with f_cdf to 1e-8 over p in [1e-6, 1 - 1e-6].
 *  \pre p in (0, 1). */
inline Real f_quantile(Real p, Real d1, Real d2) {
  require(d1 > 0.0 && d2 > 0.0,
          "f_quantile: degrees of freedom must be positive");
  require(p > 0.0 && p < 1.0, "f_quantile: p outside (0, 1)");

  Real lo = 0.0, hi = 1.0;
  while (f_cdf(hi, d1, d2) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw NumericalError("f_quantile: bracket overflow");
  }
  Real x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    Real c = f_cdf(x, d1, d2);
    if (c > p)
      hi = x;
    else
      lo = x;
    Real err = c - p;
    if (std::abs(err) < 1e-13) break;
    Real dens = f_pdf(x, d1, d2);
    Real step = (dens > 0.0) ? err / dens : 0.0;
    Real xn = x - step;
    // Bisect whenever Newton escapes the bracket.
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (std::abs(xn - x) < 1e-14 * (1.0 + std::abs(x))) {
      x = xn;
      break;
    }
    x = xn;
  }
  return x;
}

/** Covariance of the rows of `samples`, divisor N (maximum-likelihood
 *  normalization; the confidence bound expects this form).
 *  \pre at least two rows. */
inline Mat sample_covariance(const Mat& samples) {
  require(samples.rows() >= 2, "sample_covariance: need at least 2 samples");
  const auto n = samples.rows();
  Eigen::RowVectorXd mean = samples.colwise().mean();
  Mat centered = samples.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<Real>(n);
}

/** Largest eigenvalue of a symmetric positive semidefinite matrix by
 *  power iteration. Deterministic: fixed-seed start vector, relative
 *  tolerance 1e-10, hard iteration cap.
 *  \throws NumericalError if the iteration stalls without converging. */
inline Real spectral_norm(const Mat& a, Real rel_tol = 1e-10,
                          int max_iter = 50000) {
  require(a.rows() == a.cols(), "spectral_norm: matrix must be square");
  const auto n = a.rows();
  if (n == 0) return 0.0;

  std::mt19937_64 gen(0x9e3779b9ULL);
  std::uniform_real_distribution<Real> unif(-1.0, 1.0);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = unif(gen);
  v.normalize();

  Real lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vec w = a * v;
    Real norm = w.norm();
    if (norm == 0.0) return 0.0;  // started in the null space of a PSD map
    w /= norm;
    Real next = w.dot(a * w);
    if (!std::isfinite(next))
      throw NumericalError("spectral_norm: non-finite iterate");
    if (std::abs(next - lambda) <= rel_tol * std::max(1.0, std::abs(next))) {
      return next;
    }
    lambda = next;
    v = w;
  }
  throw NumericalError("spectral_norm: power iteration did not converge");
}

}  // namespace volrl
