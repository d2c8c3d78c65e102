#pragma once
// Finite MDPs with explicit transition tensors, plus the two generators
// used throughout the test corpus: seeded random tabular instances and
// the two-cycle construction that separates per-step reward volatility
// from return variance.

#include <cmath>
#include <random>
#include <vector>

#include "volrl/common.hpp"

namespace volrl {

/** Finite MDP. trans[a](s, s') = P(s' | s, a); reward(s, a) is
 *  deterministic given the pair; mu is the initial state distribution.
 *  r_max is the declared reward bound: |reward| <= r_max everywhere. */
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Mat> trans;  // one n_states x n_states matrix per action
  Mat reward;              // n_states x n_actions
  Vec mu;                  // n_states
  Real r_max = 0.0;

  /** Enforces the structural invariants: row-stochastic transitions and
   *  initial distribution within 1e-12, nonnegative probabilities,
   *  rewards within the declared bound.
   *  \throws ValidationError naming the first violated constraint. */
  void validate() const {
    require(n_states > 0 && n_actions > 0, "mdp: empty state or action set");
    require(static_cast<int>(trans.size()) == n_actions,
            "mdp: one transition matrix per action required");
    require(reward.rows() == n_states && reward.cols() == n_actions,
            "mdp: reward table shape mismatch");
    require(mu.size() == n_states, "mdp: initial distribution size mismatch");
    constexpr Real tol = 1e-12;
    for (int a = 0; a < n_actions; ++a) {
      require(trans[a].rows() == n_states && trans[a].cols() == n_states,
              "mdp: transition matrix shape mismatch");
      for (int s = 0; s < n_states; ++s) {
        Real row_sum = trans[a].row(s).sum();
        require(std::abs(row_sum - 1.0) <= tol,
                "mdp: transition row does not sum to 1");
        require(trans[a].row(s).minCoeff() >= 0.0,
                "mdp: negative transition probability");
      }
    }
    require(std::abs(mu.sum() - 1.0) <= tol,
            "mdp: initial distribution does not sum to 1");
    require(mu.minCoeff() >= 0.0, "mdp: negative initial probability");
    require(reward.cwiseAbs().maxCoeff() <= r_max + tol,
            "mdp: reward exceeds declared bound");
  }
};

/** Random tabular MDP: transition rows drawn Dirichlet(1, ..., 1),
 *  rewards uniform on [-r_max, r_max], uniform initial distribution.
 *  Identical seeds produce identical instances. */
inline TabularMdp build_random_tabular(int n_states, int n_actions,
                                       Real r_max, std::uint64_t seed) {
  require(n_states > 0 && n_actions > 0,
          "build_random_tabular: sizes must be positive");
  require(r_max > 0.0, "build_random_tabular: r_max must be positive");
  std::mt19937_64 gen(mix_seed(seed, 0));
  std::uniform_real_distribution<Real> unif01(0.0, 1.0);

  TabularMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.r_max = r_max;
  m.trans.assign(n_actions, Mat::Zero(n_states, n_states));
  for (int a = 0; a < n_actions; ++a) {
    for (int s = 0; s < n_states; ++s) {
      // Dirichlet(1) row: normalized unit exponentials.
      Real total = 0.0;
      for (int t = 0; t < n_states; ++t) {
        Real e = -std::log(1.0 - unif01(gen));
        m.trans[a](s, t) = e;
        total += e;
      }
      m.trans[a].row(s) /= total;
    }
  }
  m.reward = Mat::Zero(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a)
      m.reward(s, a) = r_max * (2.0 * unif01(gen) - 1.0);
  m.mu = Vec::Constant(n_states, 1.0 / n_states);
  m.validate();
  return m;
}

/** Two interleaved deterministic reward cycles sharing a start hub.
 *
 *  Action 0 follows the low-volatility cycle (alternating rewards
 *  gamma + eps/2 and -1), action 1 the high-volatility cycle
 *  (10*gamma + eps and -10). Crossing between cycles costs -90.
 *  States: 0 hub, 1/2 low-cycle phases, 3/4 high-cycle phases.
 *
 *  Closed forms for the two pure stationary policies:
 *    J_low  = (eps/2) / (1 + gamma),   J_high = eps / (1 + gamma)
 *  and at eps = 0 the per-step reward volatilities are exactly
 *    nu2_low = gamma,   nu2_high = 100 * gamma   (ratio 100),
 *  while both cycles have zero return variance. The high cycle earns
 *  more on average for eps > 0 but is 100x more volatile, so the
 *  preferred cycle flips as the volatility penalty grows. */
inline TabularMdp two_cycle_mdp(Real eps, Real gamma) {
  require(gamma > 0.0 && gamma < 1.0, "two_cycle_mdp: gamma outside (0, 1)");
  require(eps >= 0.0, "two_cycle_mdp: eps must be nonnegative");
  const Real r_low_up = gamma + 0.5 * eps;
  const Real r_high_up = 10.0 * gamma + eps;
  const Real r_cross = -90.0;
  require(r_high_up <= 90.0, "two_cycle_mdp: eps too large for reward bound");

  TabularMdp m;
  m.n_states = 5;
  m.n_actions = 2;
  m.r_max = 90.0;
  m.trans.assign(2, Mat::Zero(5, 5));
  m.reward = Mat::Zero(5, 2);
  m.mu = Vec::Zero(5);
  m.mu[0] = 1.0;

  auto arc = [&](int action, int from, int to, Real r) {
    m.trans[action](from, to) = 1.0;
    m.reward(from, action) = r;
  };
  // Staying on a cycle alternates its two phases; the hub enters either
  // cycle at the earning phase.
  arc(0, 0, 2, r_low_up);
  arc(0, 1, 2, r_low_up);
  arc(0, 2, 1, -1.0);
  arc(1, 0, 4, r_high_up);
  arc(1, 3, 4, r_high_up);
  arc(1, 4, 3, -10.0);
  // Crossing lands on the other cycle's matching phase.
  arc(1, 1, 4, r_cross);
  arc(1, 2, 3, r_cross);
  arc(0, 3, 2, r_cross);
  arc(0, 4, 1, r_cross);
  m.validate();
  return m;
}

}  // namespace volrl
