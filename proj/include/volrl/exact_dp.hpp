#pragma once
// Exact solvers on tabular MDPs under a fixed stochastic policy table:
// discounted occupancy, action-value and per-step-volatility tables,
// mean/volatility/variance statistics, advantage decompositions, the
// performance-difference identity, and the trust-region surrogate bound.
//
// Conventions, used consistently everywhere:
//  * occupancy d is normalized (sums to 1): d = (1-gamma) mu' (I-gamma P)^-1
//  * J and nu2 are per-step quantities: J = E_{d,pi}[R],
//    nu2 = E_{d,pi}[(R-J)^2]; eta = J - lambda nu2
//  * Q, V, X, W are unnormalized discounted sums; sigma2 is the variance
//    of the unnormalized return from the initial distribution.
//
// Linear systems use dense partial-pivot LU; intended scale is a few
// hundred states at most.

#include <cmath>
#include <limits>
#include <vector>

#include "volrl/common.hpp"
#include "volrl/mdp.hpp"

namespace volrl {

struct Occupancy {
  Vec d;       // d(s), discounted state occupancy from mu, sums to 1
  Mat d_cond;  // row s: occupancy conditioned on starting in s
};

struct ValueTables {
  Mat q;  // Q(s,a)
  Mat x;  // X(s,a), discounted sum of (R - J)^2 along the path
  Vec v;  // V(s)  = E_pi Q
  Vec w;  // W(s)  = E_pi X
  Real j = 0.0;
};

struct PerfStats {
  Real j = 0.0;
  Real nu2 = 0.0;     // per-step reward volatility
  Real sigma2 = 0.0;  // return variance (unnormalized returns)
  Real m2 = 0.0;      // second moment E_{d,pi}[R^2]
  Real eta = 0.0;     // j - lambda * nu2
};

struct PerfDifference {
  Real lhs = 0.0;         // eta_new - eta_old
  Real rhs = 0.0;         // advantage form, equal to lhs up to rounding
  Real rhs_linear = 0.0;  // E_{d_new, pi_new}[A^lambda_old] alone; lhs >= this
};

struct SurrogateBound {
  Real l_lambda = 0.0;
  Real epsilon = 0.0;
  Real kl_max = 0.0;
  Real bound_rhs = 0.0;  // l_lambda - 2 gamma eps / (1-gamma) * kl_max
};

inline void check_gamma(Real gamma) {
  require(gamma >= 0.0 && gamma < 1.0, "gamma outside [0, 1)");
}

inline void check_policy_table(const TabularMdp& mdp, const Mat& pi) {
  require(pi.rows() == mdp.n_states && pi.cols() == mdp.n_actions,
          "policy table shape mismatch");
  constexpr Real tol = 1e-12;
  for (int s = 0; s < mdp.n_states; ++s) {
    require(std::abs(pi.row(s).sum() - 1.0) <= tol,
            "policy table row does not sum to 1");
    require(pi.row(s).minCoeff() >= 0.0, "negative action probability");
  }
}

/** State transition matrix under pi: P(s, s') = sum_a pi(a|s) P(s'|s,a). */
inline Mat state_transition(const TabularMdp& mdp, const Mat& pi) {
  Mat p = Mat::Zero(mdp.n_states, mdp.n_states);
  for (int a = 0; a < mdp.n_actions; ++a)
    p += pi.col(a).asDiagonal() * mdp.trans[a];
  return p;
}

inline Vec policy_reward(const TabularMdp& mdp, const Mat& pi) {
  return (pi.array() * mdp.reward.array()).rowwise().sum().matrix();
}

/** Normalized discounted occupancy, plus per-start conditionals. */
inline Occupancy occupancy(const TabularMdp& mdp, const Mat& pi, Real gamma) {
  check_policy_table(mdp, pi);
  check_gamma(gamma);
  const int n = mdp.n_states;
  Mat p = state_transition(mdp, pi);
  Mat m = Mat::Identity(n, n) - gamma * p;
  Eigen::PartialPivLU<Mat> lu(m);
  Occupancy occ;
  occ.d = lu.transpose().solve(mdp.mu);
  occ.d *= 1.0 - gamma;
  occ.d_cond = (1.0 - gamma) * lu.inverse();
  return occ;
}

/** Per-step expected reward under the occupancy measure. */
inline Real j_value(const TabularMdp& mdp, const Mat& pi, Real gamma) {
  Occupancy occ = occupancy(mdp, pi, gamma);
  return occ.d.dot(policy_reward(mdp, pi));
}

namespace detail {

// (I - gamma * P_sa) over state-action pairs, index s * A + a.
inline Mat sa_operator(const TabularMdp& mdp, const Mat& pi, Real gamma) {
  const int n = mdp.n_states, na = mdp.n_actions;
  Mat m = Mat::Identity(n * na, n * na);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < na; ++a)
      for (int t = 0; t < n; ++t) {
        Real pt = mdp.trans[a](s, t);
        if (pt == 0.0) continue;
        for (int b = 0; b < na; ++b)
          m(s * na + a, t * na + b) -= gamma * pt * pi(t, b);
      }
  return m;
}

inline Mat unflatten(const Vec& flat, int n, int na) {
  Mat out(n, na);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < na; ++a) out(s, a) = flat[s * na + a];
  return out;
}

inline Vec flatten(const Mat& table) {
  Vec out(table.rows() * table.cols());
  for (int s = 0; s < table.rows(); ++s)
    for (int a = 0; a < table.cols(); ++a)
      out[s * table.cols() + a] = table(s, a);
  return out;
}

}  // namespace detail

/** Action values: Q = R + gamma P_sa Q. */
inline Mat solve_q(const TabularMdp& mdp, const Mat& pi, Real gamma) {
  check_policy_table(mdp, pi);
  check_gamma(gamma);
  Eigen::PartialPivLU<Mat> lu(detail::sa_operator(mdp, pi, gamma));
  Vec q = lu.solve(detail::flatten(mdp.reward));
  return detail::unflatten(q, mdp.n_states, mdp.n_actions);
}

/** Per-step volatility values: X = (R - J)^2 + gamma P_sa X. */
inline Mat solve_x(const TabularMdp& mdp, const Mat& pi, Real gamma) {
  check_policy_table(mdp, pi);
  check_gamma(gamma);
  Real j = j_value(mdp, pi, gamma);
  Mat g = (mdp.reward.array() - j).square().matrix();
  Eigen::PartialPivLU<Mat> lu(detail::sa_operator(mdp, pi, gamma));
  Vec x = lu.solve(detail::flatten(g));
  return detail::unflatten(x, mdp.n_states, mdp.n_actions);
}

/** Q, X and their policy averages V, W with one factorization. */
inline ValueTables value_tables(const TabularMdp& mdp, const Mat& pi,
                                Real gamma) {
  check_policy_table(mdp, pi);
  check_gamma(gamma);
  ValueTables t;
  t.j = j_value(mdp, pi, gamma);
  Eigen::PartialPivLU<Mat> lu(detail::sa_operator(mdp, pi, gamma));
  t.q = detail::unflatten(lu.solve(detail::flatten(mdp.reward)),
                          mdp.n_states, mdp.n_actions);
  Mat g = (mdp.reward.array() - t.j).square().matrix();
  t.x = detail::unflatten(lu.solve(detail::flatten(g)), mdp.n_states,
                          mdp.n_actions);
  t.v = (pi.array() * t.q.array()).rowwise().sum().matrix();
  t.w = (pi.array() * t.x.array()).rowwise().sum().matrix();
  return t;
}

/** J, nu2, sigma2, second moment, and eta at the given lambda.
 *  sigma2 comes from the return second-moment recursion
 *    U = R^2 + 2 gamma R (P_sa Q) + gamma^2 P_sa U,
 *  so no simulation is involved anywhere. */
inline PerfStats perf_stats(const TabularMdp& mdp, const Mat& pi, Real gamma,
                            Real lambda) {
  check_policy_table(mdp, pi);
  check_gamma(gamma);
  Occupancy occ = occupancy(mdp, pi, gamma);
  PerfStats st;
  Vec r_pi = policy_reward(mdp, pi);
  st.j = occ.d.dot(r_pi);
  Real nu2 = 0.0, m2 = 0.0;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      Real w = occ.d[s] * pi(s, a);
      Real r = mdp.reward(s, a);
      nu2 += w * (r - st.j) * (r - st.j);
      m2 += w * r * r;
    }
  st.nu2 = nu2;
  st.m2 = m2;
  st.eta = st.j - lambda * st.nu2;

  // Return variance from mu.
  const int n = mdp.n_states, na = mdp.n_actions;
  Eigen::PartialPivLU<Mat> lu_q(detail::sa_operator(mdp, pi, gamma));
  Vec q = lu_q.solve(detail::flatten(mdp.reward));
  Mat q_tab = detail::unflatten(q, n, na);
  Vec v = (pi.array() * q_tab.array()).rowwise().sum().matrix();
  // E_{s',a'} Q after (s,a).
  Mat pq(n, na);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < na; ++a) pq(s, a) = mdp.trans[a].row(s).dot(v);
  Mat rhs = (mdp.reward.array().square() +
             2.0 * gamma * mdp.reward.array() * pq.array())
                .matrix();
  Eigen::PartialPivLU<Mat> lu_u(
      detail::sa_operator(mdp, pi, gamma * gamma));
  Vec u = lu_u.solve(detail::flatten(rhs));
  Mat u_tab = detail::unflatten(u, n, na);
  Real second = mdp.mu.dot(
      (pi.array() * u_tab.array()).rowwise().sum().matrix());
  Real mean = mdp.mu.dot(v);
  st.sigma2 = second - mean * mean;
  return st;
}

/** Plain advantage A(s,a) = Q - V. */
inline Mat advantage_plain(const TabularMdp& mdp, const Mat& pi, Real gamma) {
  ValueTables t = value_tables(mdp, pi, gamma);
  return t.q - t.v * Mat::Ones(1, mdp.n_actions);
}

/** Volatility-adjusted advantage A(s,a) = (Q - lambda X) - (V - lambda W). */
inline Mat advantage_lambda(const TabularMdp& mdp, const Mat& pi, Real gamma,
                            Real lambda) {
  ValueTables t = value_tables(mdp, pi, gamma);
  Mat qa = t.q - lambda * t.x;
  Vec va = t.v - lambda * t.w;
  return qa - va * Mat::Ones(1, mdp.n_actions);
}

/** Both sides of the performance-difference identity:
 *    eta_new - eta_old = E_{d_new, pi_new}[A^lambda_old]
 *                        + lambda (E_{d_new, pi_new}[A_old])^2,
 *  with normalized occupancies; the bracketed expectation equals
 *  J_new - J_old. The two sides agree to rounding (~1e-12). */
inline PerfDifference perf_difference(const TabularMdp& mdp, const Mat& pi_old,
                                      const Mat& pi_new, Real gamma,
                                      Real lambda) {
  PerfStats st_old = perf_stats(mdp, pi_old, gamma, lambda);
  PerfStats st_new = perf_stats(mdp, pi_new, gamma, lambda);
  ValueTables t = value_tables(mdp, pi_old, gamma);
  Mat a_lam = (t.q - lambda * t.x) -
              (t.v - lambda * t.w) * Mat::Ones(1, mdp.n_actions);
  Mat a_plain = t.q - t.v * Mat::Ones(1, mdp.n_actions);
  Occupancy occ_new = occupancy(mdp, pi_new, gamma);
  Real adv_term = 0.0, mean_adv = 0.0;
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) {
      Real w = occ_new.d[s] * pi_new(s, a);
      adv_term += w * a_lam(s, a);
      mean_adv += w * a_plain(s, a);
    }
  PerfDifference out;
  out.lhs = st_new.eta - st_old.eta;
  out.rhs_linear = adv_term;
  out.rhs = adv_term + lambda * mean_adv * mean_adv;
  return out;
}

inline Real kl_categorical(const Vec& p, const Vec& q) {
  Real kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<Real>::infinity();
    kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(kl, 0.0);
}

/** Trust-region surrogate and its guarantee:
 *    l_lambda  = eta_old + E_{d_old, pi_new}[A^lambda_old]
 *    epsilon   = max_{s,a} |A^lambda_old(s, a)|
 *    bound_rhs = l_lambda - 2 gamma epsilon / (1 - gamma) * kl_max
 *  with kl_max = max_s KL(pi_old(.|s) || pi_new(.|s)). Epsilon must range
 *  over actions, not just states: the coupling argument pays one total
 *  variation factor for trajectory disagreement and one for the advantage
 *  magnitude, and only then does Pinsker turn TV^2 into a linear KL penalty.
 *  The state-max of the expected advantage is itself O(TV), which supports
 *  only a sqrt(KL) penalty and is violated on nearby pairs. eta_new should
 *  dominate bound_rhs; the verify suite reports any violation. */
inline SurrogateBound surrogate_and_bound(const TabularMdp& mdp,
                                          const Mat& pi_old, const Mat& pi_new,
                                          Real gamma, Real lambda) {
  check_policy_table(mdp, pi_new);
  PerfStats st_old = perf_stats(mdp, pi_old, gamma, lambda);
  Mat a_lam = advantage_lambda(mdp, pi_old, gamma, lambda);
  Occupancy occ_old = occupancy(mdp, pi_old, gamma);
  SurrogateBound out;
  Real surr = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) {
    Real exp_adv = 0.0;
    for (int a = 0; a < mdp.n_actions; ++a)
      exp_adv += pi_new(s, a) * a_lam(s, a);
    surr += occ_old.d[s] * exp_adv;
    for (int a = 0; a < mdp.n_actions; ++a)
      out.epsilon = std::max(out.epsilon, std::abs(a_lam(s, a)));
    out.kl_max = std::max(
        out.kl_max,
        kl_categorical(pi_old.row(s).transpose(), pi_new.row(s).transpose()));
  }
  out.l_lambda = st_old.eta + surr;
  out.bound_rhs =
      out.l_lambda - 2.0 * gamma * out.epsilon / (1.0 - gamma) * out.kl_max;
  return out;
}

/** Expected discounted sum recursion y = g_pi + gamma P y, two routes:
 *  a direct linear solve, and the conditional-occupancy quadrature
 *  y(s) = (1/(1-gamma)) sum_s' d_cond(s, s') g_pi(s'). Both are exposed
 *  so each can check the other. `g_state` is already policy-averaged. */
inline Vec solve_recursion_linear(const TabularMdp& mdp, const Mat& pi,
                                  Real gamma, const Vec& g_state) {
  check_policy_table(mdp, pi);
  check_gamma(gamma);
  require(g_state.size() == mdp.n_states, "solve_recursion: size mismatch");
  Mat m = Mat::Identity(mdp.n_states, mdp.n_states) -
          gamma * state_transition(mdp, pi);
  return Eigen::PartialPivLU<Mat>(m).solve(g_state);
}

inline Vec solve_recursion_occupancy(const TabularMdp& mdp, const Mat& pi,
                                     Real gamma, const Vec& g_state) {
  check_policy_table(mdp, pi);
  check_gamma(gamma);
  require(g_state.size() == mdp.n_states, "solve_recursion: size mismatch");
  Occupancy occ = occupancy(mdp, pi, gamma);
  return (occ.d_cond * g_state) / (1.0 - gamma);
}

/** E_tau[sum_t gamma^t f(s_t, a_t)] for an arbitrary per-pair integrand. */
inline Real exp_disc_sum(const TabularMdp& mdp, const Mat& pi, Real gamma,
                         const Mat& f_sa) {
  require(f_sa.rows() == mdp.n_states && f_sa.cols() == mdp.n_actions,
          "exp_disc_sum: integrand shape mismatch");
  Vec f_state = (pi.array() * f_sa.array()).rowwise().sum().matrix();
  return mdp.mu.dot(solve_recursion_linear(mdp, pi, gamma, f_state));
}

}  // namespace volrl
