#pragma once
// Exact parameter gradient and Hessian of eta = J - lambda * nu2 for a
// softmax policy with one-hot state features (tabular parameterization,
// theta indexed [action * n_states + state]). Built from the closed-form
// policy-gradient expression with normalized occupancy:
//   grad eta [(a, s)] = d(s) pi(a|s) (Q^lambda(s,a) - V^lambda(s)),
// and the Hessian assembled from exact grad-Q / grad-X linear solves. A
// central finite-difference fallback over the exact gradient is exposed
// for cross-checking.

#include <vector>

#include "volrl/common.hpp"
#include "volrl/exact_dp.hpp"
#include "volrl/mdp.hpp"
#include "volrl/policy.hpp"

namespace volrl {

enum class HessianMode { analytic, finite_diff };

inline void check_tabular_policy(const TabularMdp& mdp, const Policy& p) {
  require(p.kind() == PolicyKind::softmax_linear && !p.has_bias() &&
              p.feature_dim() == mdp.n_states &&
              p.action_count() == mdp.n_actions,
          "exact gradients: unsupported configuration, need a bias-free "
          "softmax policy on one-hot state features");
}

/** Action-probability table pi(s, a) induced by a tabular softmax policy. */
inline Mat policy_table(const TabularMdp& mdp, const Policy& p) {
  check_tabular_policy(mdp, p);
  Mat pi(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    Vec phi = Vec::Zero(mdp.n_states);
    phi[s] = 1.0;
    pi.row(s) = p.action_probs(phi).transpose();
  }
  return pi;
}

inline Vec exact_gradient_j(const TabularMdp& mdp, const Policy& p,
                            Real gamma) {
  check_tabular_policy(mdp, p);
  Mat pi = policy_table(mdp, p);
  Occupancy occ = occupancy(mdp, pi, gamma);
  ValueTables t = value_tables(mdp, pi, gamma);
  const int n = mdp.n_states, na = mdp.n_actions;
  Vec g = Vec::Zero(p.param_dim());
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < na; ++a)
      g[a * n + s] = occ.d[s] * pi(s, a) * (t.q(s, a) - t.v[s]);
  return g;
}

inline Vec exact_gradient_eta(const TabularMdp& mdp, const Policy& p,
                              Real gamma, Real lambda) {
  check_tabular_policy(mdp, p);
  Mat pi = policy_table(mdp, p);
  Occupancy occ = occupancy(mdp, pi, gamma);
  ValueTables t = value_tables(mdp, pi, gamma);
  const int n = mdp.n_states, na = mdp.n_actions;
  Vec g = Vec::Zero(p.param_dim());
  for (int s = 0; s < n; ++s) {
    Real v_lam = t.v[s] - lambda * t.w[s];
    for (int a = 0; a < na; ++a) {
      Real q_lam = t.q(s, a) - lambda * t.x(s, a);
      g[a * n + s] = occ.d[s] * pi(s, a) * (q_lam - v_lam);
    }
  }
  return g;
}

/** Hessian of eta. Analytic mode differentiates the policy-gradient
 *  expression exactly (grad-Q and grad-X via one shared factorization);
 *  finite_diff mode central-differences the exact gradient, h = 1e-5. */
inline Mat hessian_eta(const TabularMdp& mdp, const Policy& p, Real gamma,
                       Real lambda,
                       HessianMode mode = HessianMode::analytic) {
  check_tabular_policy(mdp, p);
  const int n = mdp.n_states, na = mdp.n_actions;
  const int m = p.param_dim();

  if (mode == HessianMode::finite_diff) {
    const Real h = 1e-5;
    Mat hess(m, m);
    Policy pp = p;
    for (int k = 0; k < m; ++k) {
      Vec th = p.theta();
      th[k] += h;
      pp.set_theta(th);
      Vec gp = exact_gradient_eta(mdp, pp, gamma, lambda);
      th[k] -= 2.0 * h;
      pp.set_theta(th);
      Vec gm = exact_gradient_eta(mdp, pp, gamma, lambda);
      hess.col(k) = (gp - gm) / (2.0 * h);
    }
    return 0.5 * (hess + hess.transpose());
  }

  Mat pi = policy_table(mdp, p);
  Occupancy occ = occupancy(mdp, pi, gamma);
  ValueTables t = value_tables(mdp, pi, gamma);
  Vec grad_j = exact_gradient_j(mdp, p, gamma);

  // Parameter derivatives of Q and X. Perturbing theta[(i, sk)] tilts
  // pi(.|sk), so (d P_sa Q)[(s,a)] = P(sk|s,a) pi(i|sk) (Q(sk,i) - V(sk)).
  Eigen::PartialPivLU<Mat> lu(detail::sa_operator(mdp, pi, gamma));
  Mat rhs_q(n * na, m), rhs_x(n * na, m);
  for (int i = 0; i < na; ++i)
    for (int sk = 0; sk < n; ++sk) {
      int k = i * n + sk;
      Real dq_k = pi(sk, i) * (t.q(sk, i) - t.v[sk]);
      Real dx_k = pi(sk, i) * (t.x(sk, i) - t.w[sk]);
      for (int s = 0; s < n; ++s)
        for (int a = 0; a < na; ++a) {
          Real pt = mdp.trans[a](s, sk);
          rhs_q(s * na + a, k) = gamma * pt * dq_k;
          rhs_x(s * na + a, k) = gamma * pt * dx_k;
        }
    }
  // X's integrand also moves through J: d (R - J)^2 = -2 (R - J) dJ.
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < na; ++a)
      rhs_x.row(s * na + a) +=
          -2.0 * (mdp.reward(s, a) - t.j) * grad_j.transpose();
  Mat dq = lu.solve(rhs_q);
  Mat dx = lu.solve(rhs_x);
  Mat dq_lam = dq - lambda * dx;  // rows indexed (s, a), columns by theta

  Mat hess = Mat::Zero(m, m);
  for (int s = 0; s < n; ++s) {
    // Within-state curvature block.
    Vec adv(na);
    for (int a = 0; a < na; ++a)
      adv[a] = (t.q(s, a) - lambda * t.x(s, a)) -
               (t.v[s] - lambda * t.w[s]);
    for (int a1 = 0; a1 < na; ++a1)
      for (int a2 = 0; a2 < na; ++a2) {
        Real coef = -pi(s, a1) * pi(s, a2) * (adv[a1] + adv[a2]);
        if (a1 == a2) coef += pi(s, a1) * adv[a1];
        hess(a1 * n + s, a2 * n + s) += occ.d[s] * coef;
      }
    // Score times grad-Q^lambda, symmetrized.
    Vec dv_bar = Vec::Zero(m);
    for (int a = 0; a < na; ++a)
      dv_bar += pi(s, a) * dq_lam.row(s * na + a).transpose();
    for (int a1 = 0; a1 < na; ++a1) {
      Vec row = occ.d[s] * pi(s, a1) *
                (dq_lam.row(s * na + a1).transpose() - dv_bar);
      hess.row(a1 * n + s) += row.transpose();
      hess.col(a1 * n + s) += row;
    }
  }
  hess -= 2.0 * lambda * grad_j * grad_j.transpose();
  return hess;
}

}  // namespace volrl
