#pragma once
// Monte Carlo gradient estimators for eta = J - lambda * nu2 on collected
// batches, in two classical shapes:
//
//  * grad_eta_pgt: per-step score times discounted tail of the transformed
//    reward r~_t = r_t - lambda * c_T * (r_t - J_hat)^2, with
//    c_T = (1-gamma)/(1-gamma^T) and J_hat from the same batch. Assembled
//    internally as grad_J - lambda * grad_nu2 over shared trajectories and
//    shared J_hat, so that lambda-linearity holds bit-exactly.
//  * grad_eta_gpomdp: causal form with an optional per-timestep,
//    per-component variance-minimizing baseline.
//
// Both estimate the gradient of the truncated objective scaled by 1/c_T
// (the raw discounted-sum scale the update rules consume).

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "volrl/common.hpp"
#include "volrl/policy.hpp"
#include "volrl/sampling.hpp"

namespace volrl {

struct PgtParts {
  Vec grad_j;
  Vec grad_nu2;
  Real j_hat = 0.0;
};

enum class GradForm { pgt, gpomdp };

struct GradEstimate {
  Vec vector;                     // estimated gradient of eta, length m
  int n_used = 0;                 // trajectories consumed
  Real lambda = 0.0;
  GradForm form = GradForm::pgt;
  Real j_used = 0.0;              // center inside the squared term
};

namespace detail {

// Score of step t, zero on padded steps.
inline Vec step_score(const Trajectory& tr, const Policy& policy, int t) {
  if (t >= tr.valid_len) return Vec::Zero(policy.param_dim());
  return policy.score(Vec(tr.states.row(t).transpose()), tr.actions[t]);
}

// PGT accumulation for one per-step reward functional u(i, t).
template <class RewardFn>
Vec pgt_accumulate(const Batch& batch, const Policy& policy,
                   Real gamma, RewardFn&& u) {
  const int m = policy.param_dim();
  const int horizon = batch.horizon;
  Vec total = Vec::Zero(m);
  std::vector<Real> tail(horizon);
  for (int i = 0; i < batch.size(); ++i) {
    const Trajectory& tr = batch.trajs[i];
    Real acc = 0.0;
    for (int t = horizon - 1; t >= 0; --t) {
      acc = u(i, t) + gamma * acc;
      tail[t] = acc;
    }
    Real g = 1.0;
    Vec contrib = Vec::Zero(m);
    for (int t = 0; t < tr.valid_len; ++t) {
      contrib += g * tail[t] * step_score(tr, policy, t);
      g *= gamma;
    }
    total += contrib;
  }
  return total / batch.size();
}

}  // namespace detail

/** The two PGT component estimates sharing trajectories and J_hat:
 *  grad_j from raw rewards, grad_nu2 from c_T * (r - J_hat)^2.
 *  By default J_hat comes from the same batch (single sampling); passing
 *  j_hat decouples the center, e.g. one estimated on disjoint batches or
 *  an exact value in bias studies. */
inline PgtParts grad_eta_pgt_parts(const Batch& batch, const Policy& policy,
                                   Real gamma,
                                   std::optional<Real> j_hat = std::nullopt) {
  require(batch.size() > 0, "grad_eta_pgt: empty batch");
  PgtParts parts;
  parts.j_hat = j_hat ? *j_hat : estimate_j(batch, gamma);
  Real c = truncation_norm(gamma, batch.horizon);
  parts.grad_j = detail::pgt_accumulate(
      batch, policy, gamma,
      [&](int i, int t) { return batch.trajs[i].rewards[t]; });
  parts.grad_nu2 = detail::pgt_accumulate(
      batch, policy, gamma, [&](int i, int t) {
        Real d = batch.trajs[i].rewards[t] - parts.j_hat;
        return c * d * d;
      });
  return parts;
}

inline GradEstimate grad_eta_pgt(const Batch& batch, const Policy& policy,
                                 Real gamma, Real lambda,
                                 std::optional<Real> j_hat = std::nullopt) {
  PgtParts parts = grad_eta_pgt_parts(batch, policy, gamma, j_hat);
  GradEstimate out;
  out.vector = parts.grad_j - lambda * parts.grad_nu2;
  out.n_used = batch.size();
  out.lambda = lambda;
  out.form = GradForm::pgt;
  out.j_used = parts.j_hat;
  return out;
}

/** Causal estimator: sum_t (sum_{h<=t} score_h) (gamma^t r~_t - b_t).
 *  With `baseline` the b_t are the per-timestep per-component ratios
 *  E[(sum score)^2 gamma^t r~_t] / E[(sum score)^2] estimated from the
 *  batch; without, b = 0 and the estimator matches PGT in expectation. */
inline GradEstimate grad_eta_gpomdp(const Batch& batch, const Policy& policy,
                                    Real gamma, Real lambda,
                                    bool baseline = false,
                                    std::optional<Real> j_hat = std::nullopt) {
  require(batch.size() > 0, "grad_eta_gpomdp: empty batch");
  const int m = policy.param_dim();
  const int horizon = batch.horizon;
  Real c = truncation_norm(gamma, batch.horizon);
  Real center = j_hat ? *j_hat : estimate_j(batch, gamma);
  auto transformed = [&](int i, int t) {
    Real r = batch.trajs[i].rewards[t];
    Real d = r - center;
    return r - lambda * c * d * d;
  };

  Mat b = Mat::Zero(horizon, m);
  if (baseline) {
    Mat num = Mat::Zero(horizon, m);
    Mat den = Mat::Zero(horizon, m);
    for (int i = 0; i < batch.size(); ++i) {
      Vec cum = Vec::Zero(m);
      Real g = 1.0;
      for (int t = 0; t < horizon; ++t) {
        cum += detail::step_score(batch.trajs[i], policy, t);
        Vec cum2 = cum.array().square().matrix();
        num.row(t) += (cum2 * (g * transformed(i, t))).transpose();
        den.row(t) += cum2.transpose();
        g *= gamma;
      }
    }
    for (int t = 0; t < horizon; ++t)
      for (int k = 0; k < m; ++k)
        b(t, k) = den(t, k) > 0.0 ? num(t, k) / den(t, k) : 0.0;
  }

  Vec total = Vec::Zero(m);
  for (int i = 0; i < batch.size(); ++i) {
    Vec cum = Vec::Zero(m);
    Real g = 1.0;
    Vec contrib = Vec::Zero(m);
    for (int t = 0; t < horizon; ++t) {
      cum += detail::step_score(batch.trajs[i], policy, t);
      contrib += cum.cwiseProduct(
          (Vec::Constant(m, g * transformed(i, t)) - b.row(t).transpose()));
      g *= gamma;
    }
    total += contrib;
  }
  GradEstimate out;
  out.vector = total / batch.size();
  out.n_used = batch.size();
  out.lambda = lambda;
  out.form = GradForm::gpomdp;
  out.j_used = center;
  return out;
}

/** Per-trajectory PGT gradient samples, one row per trajectory, sharing
 *  the batch J_hat: row i = grad_J_i - lambda * grad_nu2_i. The row mean
 *  is the PGT estimate; the row covariance feeds the confidence bound. */
inline Mat pgt_sample_matrix(const Batch& batch, const Policy& policy,
                             Real gamma, Real lambda,
                             std::optional<Real> j_hat = std::nullopt) {
  require(batch.size() > 0, "pgt_sample_matrix: empty batch");
  const int m = policy.param_dim();
  const int horizon = batch.horizon;
  Real c = truncation_norm(gamma, horizon);
  Real center = j_hat ? *j_hat : estimate_j(batch, gamma);
  Mat samples(batch.size(), m);
  std::vector<Real> tail_j(horizon), tail_v(horizon);
  for (int i = 0; i < batch.size(); ++i) {
    const Trajectory& tr = batch.trajs[i];
    Real acc_j = 0.0, acc_v = 0.0;
    for (int t = horizon - 1; t >= 0; --t) {
      Real r = tr.rewards[t];
      Real d = r - center;
      acc_j = r + gamma * acc_j;
      acc_v = c * d * d + gamma * acc_v;
      tail_j[t] = acc_j;
      tail_v[t] = acc_v;
    }
    Vec row = Vec::Zero(m);
    Real g = 1.0;
    for (int t = 0; t < tr.valid_len; ++t) {
      row += g * (tail_j[t] - lambda * tail_v[t]) *
             detail::step_score(tr, policy, t);
      g *= gamma;
    }
    samples.row(i) = row.transpose();
  }
  return samples;
}

/** Central finite differences of an arbitrary scalar objective. */
inline Vec finite_diff_grad(const std::function<Real(const Vec&)>& f,
                            const Vec& theta, Real h = 1e-5) {
  require(h > 0.0, "finite_diff_grad: step must be positive");
  Vec g(theta.size());
  Vec t = theta;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Real orig = t[k];
    t[k] = orig + h;
    Real fp = f(t);
    t[k] = orig - h;
    Real fm = f(t);
    t[k] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalError("finite_diff_grad: non-finite objective value");
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace volrl
