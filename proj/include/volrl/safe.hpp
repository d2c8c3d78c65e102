#pragma once
// Guaranteed-improvement machinery: the smoothness bound L on the
// objective Hessian, the F-distribution confidence radius on the gradient
// estimate, the derived step size / batch size, and the ascent loop that
// grows its batch until the confidence premise holds.
//
// All constants here are deliberately conservative; the point is that
//   Delta eta >= ||grad_hat||^2 / (8 L)
// holds with probability 1 - delta per step, not that steps are large.

#include <cmath>
#include <cstdio>
#include <limits>

#include "volrl/common.hpp"
#include "volrl/gradients.hpp"
#include "volrl/numerics.hpp"
#include "volrl/optimizers.hpp"
#include "volrl/policy.hpp"
#include "volrl/sampling.hpp"

namespace volrl {

/** Exact supremum of |r - lambda (r - j)^2| over r in [-r_max, r_max]:
 *  the larger endpoint value, or the interior stationary value
 *  |j + 1/(4 lambda)| when r = j + 1/(2 lambda) falls inside. Reduces to
 *  r_max at lambda = 0. */
inline Real c_bound(Real r_max, Real lambda, Real j) {
  require(r_max > 0.0, "c_bound: r_max must be positive");
  require(lambda >= 0.0, "c_bound: lambda must be nonnegative");
  auto phi = [&](Real r) { return std::abs(r - lambda * (r - j) * (r - j)); };
  Real c = std::max(phi(r_max), phi(-r_max));
  if (lambda > 0.0) {
    Real stat = j + 1.0 / (2.0 * lambda);
    if (stat > -r_max && stat < r_max)
      c = std::max(c, std::abs(j + 1.0 / (4.0 * lambda)));
  }
  return c;
}

/** c_bound maximized over every attainable mean |j| <= r_max; valid for
 *  any policy, equals r_max + 4 lambda r_max^2. */
inline Real c_bound_uniform(Real r_max, Real lambda) {
  require(r_max > 0.0, "c_bound_uniform: r_max must be positive");
  require(lambda >= 0.0, "c_bound_uniform: lambda must be nonnegative");
  return r_max + 4.0 * lambda * r_max * r_max;
}

/** Smoothness bound on the objective Hessian:
 *  L = c/(1-gamma)^2 (2 gamma psi^2/(1-gamma) + kappa + xi)
 *      + 2 r_max^2 psi^2 / (1-gamma)^3. */
inline Real l_bound(Real c, Real gamma, const SmoothingConstants& sc,
                    Real r_max) {
  check_gamma(gamma);
  require(c > 0.0 && r_max > 0.0, "l_bound: c and r_max must be positive");
  Real om = 1.0 - gamma;
  return c / (om * om) *
             (2.0 * gamma * sc.psi * sc.psi / om + sc.kappa + sc.xi) +
         2.0 * r_max * r_max * sc.psi * sc.psi / (om * om * om);
}

struct SafeMetaParams {
  SmoothingConstants smoothing;  // policy-class constants behind l_bound
  Real c_bound = 0.0;            // sup of the transformed reward
  Real l_bound = 0.0;            // Hessian bound L
  Real eps_delta = 0.0;          // F-bound confidence radius (sqrt-N scaled)
  Real alpha_star = 0.0;         // 1 / (2 L); alpha_star * l_bound == 0.5
  long long n_star = 0;          // ceil(4 eps_delta^2 / ||grad_hat||^2)
  Real delta = 0.0;              // confidence level the radius was built at
  Real grad_norm = 0.0;
  Real cov_norm = 0.0;           // ||S||, divisor-N sample covariance
  Real f_value = 0.0;            // F_{1-delta}(m, N-m) quantile
};

/** Step size and required batch size from per-trajectory gradient samples
 *  (rows) at confidence 1 - delta under smoothness bound l.
 *  eps_delta = sqrt( N m / (N - m) ||S|| F_{1-delta}(m, N-m) ), so that
 *  ||grad_hat - grad|| <= eps_delta / sqrt(N) with probability 1 - delta.
 *  \pre more samples than parameters, N >= m + 2. */
inline SafeMetaParams safe_meta_params(const Mat& grad_samples, Real delta,
                                       Real l) {
  const long long n = grad_samples.rows();
  const long long m = grad_samples.cols();
  require(m >= 1, "safe_meta_params: empty parameter vector");
  require(n > m, "safe_meta_params: need more samples than parameters");
  require(n >= m + 2, "safe_meta_params: need at least m + 2 samples");
  require(delta > 0.0 && delta < 1.0, "safe_meta_params: delta outside (0,1)");
  require(l > 0.0, "safe_meta_params: smoothness bound must be positive");

  SafeMetaParams out;
  out.l_bound = l;
  out.delta = delta;
  out.alpha_star = 1.0 / (2.0 * l);
  Vec ghat = grad_samples.colwise().mean();
  out.grad_norm = ghat.norm();
  Mat s = sample_covariance(grad_samples);
  out.cov_norm = spectral_norm(s);
  out.f_value = f_quantile(1.0 - delta, static_cast<Real>(m),
                           static_cast<Real>(n - m));
  out.eps_delta = std::sqrt(static_cast<Real>(n) * static_cast<Real>(m) /
                            static_cast<Real>(n - m) * out.cov_norm *
                            out.f_value);
  if (out.grad_norm == 0.0) {
    out.n_star = std::numeric_limits<long long>::max();
    return out;
  }
  Real ratio = 4.0 * out.eps_delta * out.eps_delta /
               (out.grad_norm * out.grad_norm);
  if (ratio >= 9.0e18)
    out.n_star = std::numeric_limits<long long>::max();
  else
    out.n_star =
        std::max<long long>(1, static_cast<long long>(std::ceil(ratio)));
  return out;
}

/** As above, with the smoothness bound assembled in place: c from the
 *  transformed-reward sup at the current mean j_current, L from the
 *  policy-class smoothing constants. */
inline SafeMetaParams safe_meta_params(const Mat& grad_samples,
                                       const SmoothingConstants& smoothing,
                                       Real r_max, Real gamma, Real lambda,
                                       Real j_current, Real delta) {
  Real c = c_bound(r_max, lambda, j_current);
  Real l = l_bound(c, gamma, smoothing, r_max);
  SafeMetaParams out = safe_meta_params(grad_samples, delta, l);
  out.smoothing = smoothing;
  out.c_bound = c;
  return out;
}

/** Guaranteed-improvement ascent. Each iteration grows the batch until
 *  N >= N* (or batch_cap, in which case the confidence premise may not
 *  hold and the logged step is best-effort), then takes the fixed step
 *  alpha* = 1/(2L) along the gradient estimate. L uses parameter-free
 *  smoothness constants and the worst-case reward span, so it upper
 *  bounds the Hessian along the whole update path.
 *  Logged columns: grad_norm = ||grad_hat||, accepted_step_size = alpha*,
 *  kl_step = eps_delta / sqrt(N) (the realized confidence radius). */
template <EnvironmentLike E>
TrainLog safe_vola_pg(const E& env, Policy& policy, const TrainConfig& cfg) {
  cfg.validate();
  require(policy.kind() == PolicyKind::softmax_linear,
          "safe_vola_pg: softmax policy required");
  const int m = policy.param_dim();
  require(cfg.batch_cap >= m + 2,
          "safe_vola_pg: batch_cap below the minimum sample size");
  SmoothingConstants sc =
      policy.uniform_smoothing_constants(cfg.feature_norm_bound);
  Real c = c_bound_uniform(env.r_max(), cfg.lambda);
  Real l = l_bound(c, cfg.gamma, sc, env.r_max());

  TrainLog log;
  for (int it = 0; it < cfg.iterations; ++it) {
    detail::StopWatch watch(cfg.timing);
    int n = std::max(m + 2, cfg.batch_size);
    Batch batch;
    SafeMetaParams meta;
    for (;;) {
      batch = collect(env, policy, n, cfg.horizon, mix_seed(cfg.seed, it),
                      cfg.jobs);
      Mat samples = pgt_sample_matrix(batch, policy, cfg.gamma, cfg.lambda);
      meta = safe_meta_params(samples, cfg.delta, l);
      if (n >= meta.n_star) break;
      if (n >= cfg.batch_cap) {
        std::fprintf(stderr,
                     "safe_vola_pg: iter %d: required batch %lld exceeds cap "
                     "%d, stepping without the confidence premise\n",
                     it, meta.n_star, cfg.batch_cap);
        break;
      }
      long long next = std::max<long long>(n + 1, (3LL * n) / 2);
      next = std::min<long long>(next, meta.n_star);
      n = static_cast<int>(std::min<long long>(next, cfg.batch_cap));
    }
    Mat samples = pgt_sample_matrix(batch, policy, cfg.gamma, cfg.lambda);
    Vec ghat = samples.colwise().mean();
    policy.set_theta(policy.theta() + meta.alpha_star * ghat);

    TrainRow row = detail::batch_row(it, batch, cfg.gamma, cfg.lambda);
    row.grad_norm = ghat.norm();
    row.accepted_step_size = meta.alpha_star;
    row.kl_step = meta.eps_delta / std::sqrt(static_cast<Real>(n));
    row.wall_time = watch.seconds();
    log.rows.push_back(row);
  }
  return log;
}

}  // namespace volrl
