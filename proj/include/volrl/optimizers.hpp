#pragma once
// Policy-update loops over the sampling and gradient machinery:
//
//  * vola_pg          fixed-step ascent on the volatility-penalized return
//  * trvo             trust-region update on the volatility-adjusted
//                     advantage (CG direction + backtracking line search)
//  * trvo_penalty     exact tabular variant ascending the surrogate minus
//                     the KL penalty term, monotone in the true objective
//  * trpo_exp         trust-region on exponential-utility-transformed
//                     rewards (risk aversion without a volatility term)
//  * mean_variance_pg REINFORCE on mean minus return-variance
//
// Every loop emits the same TrainLog row per iteration. wall_time is
// populated only when timing is enabled so that default CSV bodies are
// byte-identical across identical invocations.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "volrl/common.hpp"
#include "volrl/environment.hpp"
#include "volrl/exact_dp.hpp"
#include "volrl/exact_grad.hpp"
#include "volrl/gradients.hpp"
#include "volrl/policy.hpp"
#include "volrl/sampling.hpp"

namespace volrl {

enum class Estimator { pgt, gpomdp, gpomdp_baseline };

struct TrainRow {
  int iter = 0;
  Real j_hat = 0.0;
  Real nu2_hat = 0.0;
  Real sigma2_hat = 0.0;
  Real eta_hat = 0.0;
  Real grad_norm = 0.0;
  Real kl_step = 0.0;
  Real accepted_step_size = 0.0;
  Real wall_time = 0.0;
};

struct TrainLog {
  std::vector<TrainRow> rows;

  void write_csv(const std::string& path, std::uint64_t seed,
                 const std::string& config_hash) const {
    std::ofstream out(path);
    require(out.good(), "train log: cannot open " + path);
    out << "# seed=" << seed << " config_hash=" << config_hash
        << " version=" << kArtifactVersion << "\n";
    out << "iter,j_hat,nu2_hat,sigma2_hat,eta_hat,grad_norm,kl_step,"
           "accepted_step_size,wall_time\n";
    char buf[512];
    for (const TrainRow& r : rows) {
      std::snprintf(buf, sizeof(buf),
                    "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    r.iter, r.j_hat, r.nu2_hat, r.sigma2_hat, r.eta_hat,
                    r.grad_norm, r.kl_step, r.accepted_step_size,
                    r.wall_time);
      out << buf;
    }
    require(out.good(), "train log: write failed for " + path);
  }
};

struct TrainConfig {
  Real gamma = 0.99;
  Real lambda = 0.0;
  int iterations = 100;
  int batch_size = 100;
  int horizon = 0;  // 0: environment's own horizon
  Real step_size = 0.1;
  Estimator estimator = Estimator::pgt;
  // Trust-region knobs.
  Real kl_radius = 0.01;
  int cg_iters = 10;
  Real cg_damping = 1e-3;
  Real backtrack_coef = 0.8;
  int backtrack_steps = 10;
  // Exponential-utility risk parameter.
  Real exp_c = 0.01;
  // Safe-update knobs.
  Real delta = 0.1;
  int batch_cap = 4096;
  Real feature_norm_bound = 1.0;
  // Penalty-mode inner ascent.
  int penalty_inner_iters = 25;
  std::uint64_t seed = 0;
  bool timing = false;
  int jobs = 1;  // collection threads; results do not depend on it

  void validate() const {
    require(gamma >= 0.0 && gamma < 1.0, "train: gamma outside [0, 1)");
    require(jobs >= 1, "train: jobs must be positive");
    require(lambda >= 0.0, "train: lambda must be nonnegative");
    require(iterations > 0 && batch_size > 0,
            "train: iterations and batch_size must be positive");
    require(step_size >= 0.0, "train: step_size must be nonnegative");
    require(kl_radius >= 0.0, "train: kl_radius must be nonnegative");
    require(cg_iters > 0 && backtrack_steps > 0,
            "train: cg_iters and backtrack_steps must be positive");
    require(cg_damping >= 0.0, "train: cg_damping must be nonnegative");
    require(backtrack_coef > 0.0 && backtrack_coef < 1.0,
            "train: backtrack_coef outside (0, 1)");
    require(delta > 0.0 && delta < 1.0, "train: delta outside (0, 1)");
  }
};

namespace detail {

class StopWatch {
 public:
  explicit StopWatch(bool enabled) : enabled_(enabled) { reset(); }
  void reset() { start_ = std::chrono::steady_clock::now(); }
  Real seconds() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<Real>(std::chrono::steady_clock::now() -
                                       start_)
        .count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

inline TrainRow batch_row(int iter, const Batch& batch, Real gamma,
                          Real lambda) {
  TrainRow row;
  row.iter = iter;
  row.j_hat = estimate_j(batch, gamma);
  row.nu2_hat = estimate_volatility(batch, gamma, row.j_hat, row.j_hat);
  row.sigma2_hat = batch.size() >= 2 ? estimate_sigma(batch, gamma) : 0.0;
  row.eta_hat = row.j_hat - lambda * row.nu2_hat;
  return row;
}

}  // namespace detail

/** Conjugate gradient for SPD operators given as a product callback.
 *  Returns the iterate when the residual drops below tol or the
 *  iteration budget runs out; bails out early on a non-positive
 *  curvature direction (operator not SPD to working precision). */
inline Vec conjugate_gradient(const std::function<Vec(const Vec&)>& apply,
                              const Vec& b, int iters, Real tol = 1e-10) {
  Vec x = Vec::Zero(b.size());
  Vec r = b;
  Vec p = b;
  Real rs = r.dot(r);
  for (int i = 0; i < iters && std::sqrt(rs) > tol; ++i) {
    Vec ap = apply(p);
    Real curv = p.dot(ap);
    if (!(curv > 0.0)) break;
    Real alpha = rs / curv;
    x += alpha * p;
    r -= alpha * ap;
    Real rs_next = r.dot(r);
    p = r + (rs_next / rs) * p;
    rs = rs_next;
  }
  return x;
}

/** Fixed-step stochastic ascent on eta_hat. */
template <EnvironmentLike E>
TrainLog vola_pg(const E& env, Policy& policy, const TrainConfig& cfg) {
  cfg.validate();
  TrainLog log;
  for (int it = 0; it < cfg.iterations; ++it) {
    detail::StopWatch watch(cfg.timing);
    Batch batch = collect(env, policy, cfg.batch_size, cfg.horizon,
                          mix_seed(cfg.seed, it), cfg.jobs);
    Vec g;
    switch (cfg.estimator) {
      case Estimator::pgt:
        g = grad_eta_pgt(batch, policy, cfg.gamma, cfg.lambda).vector;
        break;
      case Estimator::gpomdp:
        g = grad_eta_gpomdp(batch, policy, cfg.gamma, cfg.lambda, false)
                .vector;
        break;
      case Estimator::gpomdp_baseline:
        g = grad_eta_gpomdp(batch, policy, cfg.gamma, cfg.lambda, true)
                .vector;
        break;
    }
    if (!g.allFinite())
      throw NumericalError("vola_pg: non-finite gradient estimate");
    policy.set_theta(policy.theta() + cfg.step_size * g);
    TrainRow row = detail::batch_row(it, batch, cfg.gamma, cfg.lambda);
    row.grad_norm = g.norm();
    row.accepted_step_size = cfg.step_size;
    row.wall_time = watch.seconds();
    log.rows.push_back(row);
  }
  return log;
}

namespace detail {

// Shared body of trvo and trpo_exp. `transform`, when present, maps every
// collected reward before any estimation (and `saturated` counts clamped
// evaluations).
template <EnvironmentLike E>
TrainLog trust_region_core(const E& env, Policy& policy,
                           const TrainConfig& cfg, Real lambda,
                           const std::function<Real(Real)>* transform) {
  cfg.validate();
  TrainLog log;
  for (int it = 0; it < cfg.iterations; ++it) {
    StopWatch watch(cfg.timing);
    Batch batch = collect(env, policy, cfg.batch_size, cfg.horizon,
                          mix_seed(cfg.seed, it), cfg.jobs);
    if (transform)
      for (Trajectory& tr : batch.trajs)
        for (int t = 0; t < tr.valid_len; ++t)
          tr.rewards[t] = (*transform)(tr.rewards[t]);

    const int horizon = batch.horizon;
    const int n = batch.size();
    Real c = truncation_norm(cfg.gamma, horizon);
    Real j_hat = estimate_j(batch, cfg.gamma);

    // Discounted reward-to-go of the transformed reward, then a
    // per-timestep batch-mean baseline.
    Mat togo(n, horizon);
    for (int i = 0; i < n; ++i) {
      Real acc = 0.0;
      for (int t = horizon - 1; t >= 0; --t) {
        Real r = batch.trajs[i].rewards[t];
        Real d = r - j_hat;
        acc = (r - lambda * c * d * d) + cfg.gamma * acc;
        togo(i, t) = acc;
      }
    }
    Vec base = togo.colwise().mean();
    Mat adv = togo.rowwise() - base.transpose();

    // Surrogate gradient, visited states, and old action probabilities.
    std::vector<Vec> states;
    std::vector<Vec> old_probs;
    std::vector<int> acts;
    std::vector<Real> weights;  // gamma^t * advantage / n
    Vec g = Vec::Zero(policy.param_dim());
    for (int i = 0; i < n; ++i) {
      const Trajectory& tr = batch.trajs[i];
      Real gt = 1.0;
      for (int t = 0; t < tr.valid_len; ++t) {
        Vec phi = tr.states.row(t).transpose();
        Real w = c * gt * adv(i, t) / n;
        g += w * policy.score(phi, tr.actions[t]);
        states.push_back(phi);
        old_probs.push_back(policy.action_probs(phi));
        acts.push_back(tr.actions[t]);
        weights.push_back(w);
        gt *= cfg.gamma;
      }
    }

    TrainRow row = batch_row(it, batch, cfg.gamma, lambda);
    row.grad_norm = g.norm();
    row.wall_time = watch.seconds();

    auto fvp = [&](const Vec& v) {
      return policy.fisher_vector_product(states, v, cfg.cg_damping);
    };
    Vec dir = conjugate_gradient(fvp, g, cfg.cg_iters);
    Real curv = dir.allFinite() ? dir.dot(fvp(dir)) : 0.0;
    if (!(curv > 0.0)) {
      // CG gave no usable direction; fall back to the raw gradient so the
      // step still points uphill, and flag the event.
      std::fprintf(stderr,
                   "trvo: iter %d: CG direction unusable, falling back to "
                   "gradient step\n",
                   it);
      dir = g;
      curv = dir.dot(fvp(dir));
      if (!(curv > 0.0) || !dir.allFinite()) {
        log.rows.push_back(row);  // degenerate curvature, skip the update
        continue;
      }
    }
    Real beta = std::sqrt(2.0 * cfg.kl_radius / curv);

    auto surrogate_gain = [&](const Policy& cand) {
      KahanSum acc;
      for (size_t k = 0; k < states.size(); ++k) {
        Real ratio =
            cand.action_probs(states[k])[acts[k]] / old_probs[k][acts[k]];
        acc.add(weights[k] * (ratio - 1.0));
      }
      return acc.value();
    };
    auto sampled_kl = [&](const Policy& cand) {
      KahanSum acc;
      for (size_t k = 0; k < states.size(); ++k)
        acc.add(kl_categorical(old_probs[k], cand.action_probs(states[k])));
      return acc.value() / static_cast<Real>(states.size());
    };

    Policy cand = policy;
    Real step = beta;
    for (int bt = 0; bt < cfg.backtrack_steps; ++bt) {
      cand.set_theta(policy.theta() + step * dir);
      Real kl = sampled_kl(cand);
      if (kl <= cfg.kl_radius && surrogate_gain(cand) > 0.0) {
        policy.set_theta(cand.theta());
        row.kl_step = kl;
        row.accepted_step_size = step;
        break;
      }
      step *= cfg.backtrack_coef;
    }
    log.rows.push_back(row);
  }
  return log;
}

}  // namespace detail

/** Trust-region update on the volatility-adjusted advantage: natural
 *  direction from CG on the sampled Fisher system, then the largest
 *  backtracked step with positive surrogate gain and sampled KL within
 *  kl_radius. */
template <EnvironmentLike E>
TrainLog trvo(const E& env, Policy& policy, const TrainConfig& cfg) {
  return detail::trust_region_core(env, policy, cfg, cfg.lambda, nullptr);
}

/** Saturating exponential-utility transform (1 - exp(-c r)) / c.
 *  Exponents are clamped at 700 to stay finite; `saturated` counts the
 *  clamped evaluations. */
inline Real exp_utility_transform(Real r, Real c, long* saturated = nullptr) {
  require(c > 0.0, "exp_utility_transform: c must be positive");
  Real x = -c * r;
  if (x > 700.0) {
    x = 700.0;
    if (saturated) ++*saturated;
  }
  return -std::expm1(x) / c;
}

/** Trust-region ascent on exponential-utility-transformed rewards
 *  (lambda is forced to 0: risk aversion enters through the transform).
 *  Logged statistics refer to the transformed reward. */
template <EnvironmentLike E>
TrainLog trpo_exp(const E& env, Policy& policy, const TrainConfig& cfg) {
  long saturated = 0;
  std::function<Real(Real)> tf = [&](Real r) {
    return exp_utility_transform(r, cfg.exp_c, &saturated);
  };
  TrainLog log = detail::trust_region_core(env, policy, cfg, 0.0, &tf);
  if (saturated > 0)
    std::cerr << "trpo_exp: exponential utility saturated " << saturated
              << " evaluations; rewards too negative for c=" << cfg.exp_c
              << "\n";
  return log;
}

/** Exact tabular trust-region variant: each iteration ascends
 *    f(theta) = eta_k + E_{d_k, pi_theta}[A^lambda_k]
 *               - 2 gamma / (1-gamma) * eps_k * klmax(theta)
 *  with eps_k = max_{s,a} |A^lambda_k(s, a)|, by numeric gradient ascent,
 *  and accepts only if f improves on f(theta_k) = eta_k. f(theta) is
 *  exactly the certified lower bound on eta(theta), so accepted iterates
 *  satisfy eta_{k+1} >= eta_k; the log makes this checkable because every
 *  row carries exact DP statistics. */
inline TrainLog trvo_penalty(const TabularMdp& mdp, Policy& policy,
                             const TrainConfig& cfg) {
  cfg.validate();
  check_tabular_policy(mdp, policy);
  TrainLog log;
  const Real pen_coef = 2.0 * cfg.gamma / (1.0 - cfg.gamma);
  for (int it = 0; it < cfg.iterations; ++it) {
    detail::StopWatch watch(cfg.timing);
    Mat pi_k = policy_table(mdp, policy);
    PerfStats st = perf_stats(mdp, pi_k, cfg.gamma, cfg.lambda);
    Occupancy occ = occupancy(mdp, pi_k, cfg.gamma);
    Mat a_lam = advantage_lambda(mdp, pi_k, cfg.gamma, cfg.lambda);
    const Real eps_k = a_lam.cwiseAbs().maxCoeff();

    Policy probe = policy;
    auto bound_value = [&](const Vec& theta) {
      probe.set_theta(theta);
      Mat pi_t = policy_table(mdp, probe);
      Real surr = 0.0, klmax = 0.0;
      for (int s = 0; s < mdp.n_states; ++s) {
        Real exp_adv = 0.0;
        for (int a = 0; a < mdp.n_actions; ++a)
          exp_adv += pi_t(s, a) * a_lam(s, a);
        surr += occ.d[s] * exp_adv;
        klmax = std::max(klmax,
                         kl_categorical(pi_k.row(s).transpose(),
                                        pi_t.row(s).transpose()));
      }
      return st.eta + surr - pen_coef * eps_k * klmax;
    };

    // Inner ascent on the bound, numeric gradient, backtracked steps.
    Vec theta = policy.theta();
    Real f_cur = bound_value(theta);  // equals st.eta at theta_k
    Real grad0_norm = 0.0;
    for (int inner = 0; inner < cfg.penalty_inner_iters; ++inner) {
      Vec g = finite_diff_grad(bound_value, theta, 1e-6);
      if (inner == 0) grad0_norm = g.norm();
      if (g.norm() < 1e-12) break;
      Real step = cfg.step_size;
      bool moved = false;
      for (int bt = 0; bt < 30; ++bt) {
        Real f_try = bound_value(theta + step * g);
        if (f_try > f_cur) {
          theta += step * g;
          f_cur = f_try;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }

    TrainRow row;
    row.iter = it;
    row.j_hat = st.j;
    row.nu2_hat = st.nu2;
    row.sigma2_hat = st.sigma2;
    row.eta_hat = st.eta;
    row.grad_norm = grad0_norm;
    if (f_cur > st.eta) {  // improved bound => guaranteed improvement
      Policy cand = policy;
      cand.set_theta(theta);
      Mat pi_new = policy_table(mdp, cand);
      Real klmax = 0.0;
      for (int s = 0; s < mdp.n_states; ++s)
        klmax = std::max(klmax,
                         kl_categorical(pi_k.row(s).transpose(),
                                        pi_new.row(s).transpose()));
      row.kl_step = klmax;
      row.accepted_step_size = (theta - policy.theta()).norm();
      policy.set_theta(theta);
    }
    row.wall_time = watch.seconds();
    log.rows.push_back(row);
  }
  return log;
}

/** REINFORCE on mean minus return variance. Per-trajectory score sums
 *  S_i and discounted returns G_i give
 *    g = (1/N) sum_i S_i [ G_i - lambda (G_i - Gbar)^2 ],
 *  unbiased for grad(E[G] - lambda Var[G]) since E[S] = 0, with exactly
 *  zero variance adjustment when returns are all equal. lambda = 0 is
 *  plain REINFORCE. */
template <EnvironmentLike E>
TrainLog mean_variance_pg(const E& env, Policy& policy,
                          const TrainConfig& cfg) {
  cfg.validate();
  require(cfg.batch_size >= 2,
          "mean_variance_pg: batch_size must be at least 2");
  TrainLog log;
  for (int it = 0; it < cfg.iterations; ++it) {
    detail::StopWatch watch(cfg.timing);
    Batch batch = collect(env, policy, cfg.batch_size, cfg.horizon,
                          mix_seed(cfg.seed, it), cfg.jobs);
    const int n = batch.size();
    std::vector<Real> g_ret(n);
    KahanSum mean_acc;
    for (int i = 0; i < n; ++i) {
      g_ret[i] = discounted_return(batch.trajs[i].rewards, cfg.gamma);
      mean_acc.add(g_ret[i]);
    }
    Real g_bar = mean_acc.value() / n;
    Vec g = Vec::Zero(policy.param_dim());
    for (int i = 0; i < n; ++i) {
      const Trajectory& tr = batch.trajs[i];
      Vec score_sum = Vec::Zero(policy.param_dim());
      for (int t = 0; t < tr.valid_len; ++t)
        score_sum += policy.score(Vec(tr.states.row(t).transpose()),
                                  tr.actions[t]);
      Real centered = g_ret[i] - g_bar;
      g += score_sum * (g_ret[i] - cfg.lambda * centered * centered);
    }
    g /= n;
    if (!g.allFinite())
      throw NumericalError("mean_variance_pg: non-finite gradient estimate");
    policy.set_theta(policy.theta() + cfg.step_size * g);
    TrainRow row = detail::batch_row(it, batch, cfg.gamma, cfg.lambda);
    row.grad_norm = g.norm();
    row.accepted_step_size = cfg.step_size;
    row.wall_time = watch.seconds();
    log.rows.push_back(row);
  }
  return log;
}

/** Exact exponential-utility comparison for a fixed tabular policy:
 *    lhs = -(1/c) log( (1-gamma) E_tau[ sum_t gamma^t exp(-c R_t) ] )
 *    rhs = J - (c/2) nu2
 *  The (1-gamma) inside the log cancels the policy-independent constant
 *  (equivalently: lhs is the entropic risk of the one-step reward under
 *  the normalized occupancy measure), so gap -> 0 as c -> 0 with an
 *  O(c^2) third-cumulant residual. */
struct ExpUtilityCheck {
  Real lhs = 0.0;
  Real rhs = 0.0;
  Real gap = 0.0;
};

inline ExpUtilityCheck check_exp_utility_approx(const TabularMdp& mdp,
                                                const Mat& pi, Real gamma,
                                                Real c) {
  require(c > 0.0, "check_exp_utility_approx: c must be positive");
  Mat f = (-c * mdp.reward.array()).exp().matrix();
  Real inner = (1.0 - gamma) * exp_disc_sum(mdp, pi, gamma, f);
  require(inner > 0.0, "check_exp_utility_approx: degenerate expectation");
  PerfStats st = perf_stats(mdp, pi, gamma, 0.0);
  ExpUtilityCheck out;
  out.lhs = -std::log(inner) / c;
  out.rhs = st.j - 0.5 * c * st.nu2;
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

inline std::vector<ExpUtilityCheck> check_exp_utility_approx(
    const TabularMdp& mdp, const Mat& pi, Real gamma,
    const std::vector<Real>& c_list) {
  std::vector<ExpUtilityCheck> out;
  out.reserve(c_list.size());
  for (Real c : c_list)
    out.push_back(check_exp_utility_approx(mdp, pi, gamma, c));
  return out;
}

}  // namespace volrl
