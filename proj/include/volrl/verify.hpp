#pragma once
// Theorem report: each suite sweeps a corpus of randomly generated
// tabular problems and records the worst observed violation of one
// identity or bound next to the tolerance it is held to.  A row passes
// when max_violation <= tolerance.  Signed checks (inequalities) report
// the signed excess, so a comfortably satisfied bound shows up negative.

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "volrl/common.hpp"
#include "volrl/environment.hpp"
#include "volrl/exact_dp.hpp"
#include "volrl/exact_grad.hpp"
#include "volrl/gradients.hpp"
#include "volrl/mdp.hpp"
#include "volrl/numerics.hpp"
#include "volrl/policy.hpp"
#include "volrl/safe.hpp"
#include "volrl/sampling.hpp"

namespace volrl {

struct VerifyRow {
  std::string theorem_id;
  long long instances = 0;
  Real max_violation = 0.0;
  Real tolerance = 0.0;
  bool pass = false;
};

namespace detail {

struct VerifyCase {
  TabularMdp mdp;
  Policy pol;
  Real gamma = 0.0;
  Real lambda = 0.0;
};

inline VerifyCase make_verify_case(std::uint64_t seed) {
  int n_states = 2 + static_cast<int>(seed % 7);
  int n_actions = 2 + static_cast<int>((seed / 7) % 3);
  const Real gammas[3] = {0.5, 0.9, 0.99};
  Policy pol = Policy::softmax(n_states, n_actions, /*bias=*/false);
  std::mt19937_64 gen(mix_seed(seed, 0x7e57));
  std::uniform_real_distribution<Real> u(-1.0, 1.0);
  Vec th = pol.theta();
  for (int i = 0; i < th.size(); ++i) th[i] = u(gen);
  pol.set_theta(th);
  return VerifyCase{build_random_tabular(n_states, n_actions, 1.0, seed),
                    std::move(pol), gammas[seed % 3], 0.5};
}

inline Policy perturb_policy(const Policy& pol, Real scale,
                             std::uint64_t seed) {
  Policy out = pol;
  std::mt19937_64 gen(mix_seed(seed, 0xbea7));
  std::uniform_real_distribution<Real> u(-1.0, 1.0);
  Vec th = out.theta();
  for (int i = 0; i < th.size(); ++i) th[i] += scale * u(gen);
  out.set_theta(th);
  return out;
}

inline VerifyRow finish_row(std::string id, long long instances, Real worst,
                            Real tol) {
  VerifyRow r;
  r.theorem_id = std::move(id);
  r.instances = instances;
  r.max_violation = worst;
  r.tolerance = tol;
  r.pass = worst <= tol;
  return r;
}

}  // namespace detail

/** Runs every suite over a corpus of `n_mdps` generated problems
 *  (seeds 0..n_mdps-1) and returns one row per suite. */
inline std::vector<VerifyRow> run_verify_suites(int n_mdps = 50) {
  require(n_mdps >= 1, "verify: need at least one instance");
  std::vector<detail::VerifyCase> corpus;
  corpus.reserve(static_cast<size_t>(n_mdps));
  for (int i = 0; i < n_mdps; ++i)
    corpus.push_back(detail::make_verify_case(static_cast<std::uint64_t>(i)));

  std::vector<VerifyRow> rows;
  const Real neg_inf = -std::numeric_limits<Real>::infinity();

  // sigma2 <= nu2 / (1-gamma)^2.
  {
    Real worst = neg_inf;
    for (const auto& c : corpus) {
      auto st = perf_stats(c.mdp, policy_table(c.mdp, c.pol), c.gamma, c.lambda);
      Real cap = st.nu2 / ((1.0 - c.gamma) * (1.0 - c.gamma));
      worst = std::max(worst, st.sigma2 - cap);
    }
    rows.push_back(detail::finish_row("sigma2_le_nu2_over_1mg2",
                                      corpus.size(), worst, 1e-9));
  }

  // nu2 = m2 - j^2.
  {
    Real worst = neg_inf;
    for (const auto& c : corpus) {
      auto st = perf_stats(c.mdp, policy_table(c.mdp, c.pol), c.gamma, c.lambda);
      worst = std::max(worst, std::abs(st.nu2 - (st.m2 - st.j * st.j)));
    }
    rows.push_back(detail::finish_row("nu2_eq_m2_minus_j2", corpus.size(),
                                      worst, 1e-10));
  }

  // Fixed-point residual of the X table and its contraction to nu2.
  {
    Real worst = neg_inf;
    for (const auto& c : corpus) {
      Mat pi = policy_table(c.mdp, c.pol);
      auto vt = value_tables(c.mdp, pi, c.gamma);
      int S = c.mdp.n_states, A = c.mdp.n_actions;
      for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
          Real rr = c.mdp.reward(s, a) - vt.j;
          Real next = 0.0;
          for (int s2 = 0; s2 < S; ++s2)
            next += c.mdp.trans[static_cast<size_t>(a)](s, s2) * vt.w[s2];
          worst = std::max(
              worst, std::abs(vt.x(s, a) - (rr * rr + c.gamma * next)));
        }
      Real nu2_from_w = (1.0 - c.gamma) * c.mdp.mu.dot(vt.w);
      auto st = perf_stats(c.mdp, pi, c.gamma, c.lambda);
      worst = std::max(worst, std::abs(st.nu2 - nu2_from_w));
    }
    rows.push_back(detail::finish_row("volatility_fixed_point",
                                      corpus.size(), worst, 1e-9));
  }

  // Linear-solve and occupancy routes for discounted accumulation agree.
  {
    Real worst = neg_inf;
    for (const auto& c : corpus) {
      Mat pi = policy_table(c.mdp, c.pol);
      Vec g = Vec::Zero(c.mdp.n_states);
      for (int s = 0; s < c.mdp.n_states; ++s)
        g[s] = pi.row(s).dot(c.mdp.reward.row(s));
      Vec a = solve_recursion_linear(c.mdp, pi, c.gamma, g);
      Vec b = solve_recursion_occupancy(c.mdp, pi, c.gamma, g);
      worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    rows.push_back(detail::finish_row("recursion_routes_agree",
                                      corpus.size(), worst, 1e-9));
  }

  // Performance-difference identity between two arbitrary policies.
  {
    Real worst = neg_inf;
    for (size_t i = 0; i < corpus.size(); ++i) {
      const auto& c = corpus[i];
      Policy other = detail::perturb_policy(c.pol, 0.8, i);
      auto pd = perf_difference(c.mdp, policy_table(c.mdp, c.pol),
                                policy_table(c.mdp, other), c.gamma, c.lambda);
      worst = std::max(worst, std::abs(pd.lhs - pd.rhs));
    }
    rows.push_back(detail::finish_row("perf_difference_identity",
                                      corpus.size(), worst, 1e-8));
  }

  // Surrogate lower bound: eta_new >= L_lambda - penalty at small KL.
  {
    Real worst = neg_inf;
    long long count = 0;
    for (size_t i = 0; i < corpus.size(); ++i) {
      const auto& c = corpus[i];
      Real scale = 0.3;
      Mat pi_old = policy_table(c.mdp, c.pol);
      for (int tries = 0; tries < 12; ++tries) {
        Policy cand = detail::perturb_policy(c.pol, scale, i + 1000);
        Mat pi_new = policy_table(c.mdp, cand);
        Real klmax = 0.0;
        for (int s = 0; s < c.mdp.n_states; ++s)
          klmax = std::max(klmax,
                           kl_categorical(pi_old.row(s).transpose(),
                                          pi_new.row(s).transpose()));
        if (klmax <= 0.1) {
          auto sb =
              surrogate_and_bound(c.mdp, pi_old, pi_new, c.gamma, c.lambda);
          Real eta_new = perf_stats(c.mdp, pi_new, c.gamma, c.lambda).eta;
          worst = std::max(worst, sb.bound_rhs - eta_new);
          ++count;
          break;
        }
        scale *= 0.5;
      }
    }
    rows.push_back(
        detail::finish_row("surrogate_lower_bound", count, worst, 1e-10));
  }

  // Closed-form gradient of eta against central differences.
  {
    Real worst = neg_inf;
    const Real h = 1e-5;
    for (const auto& c : corpus) {
      Vec g = exact_gradient_eta(c.mdp, c.pol, c.gamma, c.lambda);
      Policy probe = c.pol;
      Vec g_fd = finite_diff_grad(
          [&](const Vec& th) {
            probe.set_theta(th);
            return perf_stats(c.mdp, policy_table(c.mdp, probe), c.gamma,
                              c.lambda)
                .eta;
          },
          c.pol.theta(), h);
      Real denom = std::max<Real>(1.0, g_fd.cwiseAbs().maxCoeff());
      worst = std::max(worst, (g - g_fd).cwiseAbs().maxCoeff() / denom);
    }
    rows.push_back(detail::finish_row("gradient_matches_fd", corpus.size(),
                                      worst, 1e-6));
  }

  // Closed-form Hessian of eta against differenced exact gradients.
  {
    Real worst = neg_inf;
    long long count = 0;
    for (size_t i = 0; i < corpus.size(); i += 5) {
      const auto& c = corpus[i];
      Mat ha = hessian_eta(c.mdp, c.pol, c.gamma, c.lambda,
                           HessianMode::analytic);
      Mat hf = hessian_eta(c.mdp, c.pol, c.gamma, c.lambda,
                           HessianMode::finite_diff);
      Real denom = std::max<Real>(1.0, hf.cwiseAbs().maxCoeff());
      worst = std::max(worst, (ha - hf).cwiseAbs().maxCoeff() / denom);
      ++count;
    }
    rows.push_back(
        detail::finish_row("hessian_matches_fd", count, worst, 1e-6));
  }

  // Spectral norm of the Hessian stays below the smoothness constant L
  // built from the theta-free softmax constants.
  {
    Real worst = neg_inf;
    for (const auto& c : corpus) {
      Mat h = hessian_eta(c.mdp, c.pol, c.gamma, c.lambda,
                          HessianMode::analytic);
      Mat hs = 0.5 * (h + h.transpose());
      Real hn = spectral_norm(hs);
      auto sc = c.pol.uniform_smoothing_constants(1.0);
      Real cb = c_bound_uniform(c.mdp.r_max, c.lambda);
      Real l = l_bound(cb, c.gamma, sc, c.mdp.r_max);
      worst = std::max(worst, hn - l);
    }
    rows.push_back(detail::finish_row("hessian_norm_le_l", corpus.size(),
                                      worst, 1e-9));
  }

  // Exact ascent with alpha = 1/(2L) improves by at least |grad|^2/(4L).
  {
    Real worst = neg_inf;
    long long count = 0;
    for (size_t i = 0; i < corpus.size(); i += 10) {
      const auto& c = corpus[i];
      auto sc = c.pol.uniform_smoothing_constants(1.0);
      Real cb = c_bound_uniform(c.mdp.r_max, c.lambda);
      Real l = l_bound(cb, c.gamma, sc, c.mdp.r_max);
      Policy cur = c.pol;
      Real eta =
          perf_stats(c.mdp, policy_table(c.mdp, cur), c.gamma, c.lambda).eta;
      for (int step = 0; step < 25; ++step) {
        Vec g = exact_gradient_eta(c.mdp, cur, c.gamma, c.lambda);
        cur.set_theta(cur.theta() + g / (2.0 * l));
        Real eta2 =
            perf_stats(c.mdp, policy_table(c.mdp, cur), c.gamma, c.lambda).eta;
        worst = std::max(worst, g.squaredNorm() / (4.0 * l) - (eta2 - eta));
        eta = eta2;
        ++count;
      }
    }
    rows.push_back(
        detail::finish_row("ascent_guarantee", count, worst, 1e-10));
  }

  // The penalty scale really bounds |r - lambda (r - j)^2| on the grid.
  {
    Real worst = neg_inf;
    for (const auto& c : corpus) {
      Real j = perf_stats(c.mdp, policy_table(c.mdp, c.pol), c.gamma, c.lambda).j;
      Real cb = c_bound(c.mdp.r_max, c.lambda, j);
      for (int k = 0; k <= 4000; ++k) {
        Real r = -c.mdp.r_max + 2.0 * c.mdp.r_max * k / 4000.0;
        Real val = std::abs(r - c.lambda * (r - j) * (r - j));
        worst = std::max(worst, val - cb);
      }
    }
    rows.push_back(detail::finish_row("penalty_scale_bound",
                                      corpus.size(), worst, 1e-9));
  }

  // Regularized incomplete beta symmetry I_x(a,b) + I_{1-x}(b,a) = 1.
  {
    Real worst = neg_inf;
    long long count = 0;
    for (Real a : {0.5, 1.0, 2.5, 7.0, 30.0})
      for (Real b : {0.5, 1.5, 4.0, 12.0})
        for (Real x : {0.01, 0.2, 0.5, 0.8, 0.99}) {
          Real v = regularized_incomplete_beta(a, b, x) +
                   regularized_incomplete_beta(b, a, 1.0 - x) - 1.0;
          worst = std::max(worst, std::abs(v));
          ++count;
        }
    rows.push_back(
        detail::finish_row("beta_symmetry", count, worst, 1e-12));
  }

  // F quantile and cdf are inverses.
  {
    Real worst = neg_inf;
    long long count = 0;
    for (int d1 : {1, 2, 5, 10, 40})
      for (int d2 : {1, 3, 8, 25, 100})
        for (Real p : {0.01, 0.1, 0.5, 0.9, 0.99, 0.999}) {
          Real q = f_quantile(p, static_cast<Real>(d1),
                              static_cast<Real>(d2));
          Real back = f_cdf(q, static_cast<Real>(d1), static_cast<Real>(d2));
          worst = std::max(worst, std::abs(back - p));
          ++count;
        }
    rows.push_back(
        detail::finish_row("f_quantile_roundtrip", count, worst, 1e-10));
  }

  // Sampled objective gradient is linear in lambda, bit for bit.
  {
    Real worst = neg_inf;
    long long count = 0;
    for (size_t i = 0; i < corpus.size(); i += 5) {
      const auto& c = corpus[i];
      TabularEnv env(c.mdp);
      Batch batch = collect(env, c.pol, 16, 30, mix_seed(i, 0xf00d), 1);
      PgtParts parts = grad_eta_pgt_parts(batch, c.pol, c.gamma);
      Real lam = 0.7;
      Vec direct = grad_eta_pgt(batch, c.pol, c.gamma, lam).vector;
      Vec assembled = parts.grad_j - lam * parts.grad_nu2;
      worst = std::max(worst, (direct - assembled).cwiseAbs().maxCoeff());
      ++count;
    }
    rows.push_back(
        detail::finish_row("pgt_lambda_linearity", count, worst, 0.0));
  }

  return rows;
}

inline void write_verify_csv(const std::string& path,
                             const std::vector<VerifyRow>& rows,
                             std::uint64_t seed,
                             const std::string& config_hash) {
  std::ofstream out(path);
  require(out.good(), "verify: cannot open output " + path);
  out << "# seed=" << seed << " config_hash=" << config_hash
      << " version=" << kArtifactVersion << "\n";
  out << "theorem_id,instances,max_violation,tolerance,pass\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.theorem_id << "," << r.instances << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", r.max_violation);
    out << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", r.tolerance);
    out << buf << "," << (r.pass ? "true" : "false") << "\n";
  }
  require(out.good(), "verify: write failed for " + path);
}

/** True when every suite passed. */
inline bool all_pass(const std::vector<VerifyRow>& rows) {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return true;
}

}  // namespace volrl
