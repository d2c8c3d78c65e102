#pragma once
// Environment contract shared by the samplers and optimizers, plus the
// adapter exposing a tabular MDP through it.
//
// An environment is a value type: copies evolve independently, which is
// what makes per-trajectory parallel collection deterministic. All
// randomness flows through the caller-supplied generator.

#include <concepts>
#include <random>

#include "volrl/common.hpp"
#include "volrl/mdp.hpp"

namespace volrl {

// info bit: the requested order exceeded available funds and was clamped.
inline constexpr unsigned kInfoClampedOrder = 1u;

struct EnvStep {
  Vec features;
  Real reward = 0.0;
  bool done = false;
  unsigned info = 0;
};

template <class E>
concept EnvironmentLike = requires(E e, std::mt19937_64& g, int a) {
  { e.reset(g) } -> std::convertible_to<Vec>;
  { e.step(a, g) } -> std::convertible_to<EnvStep>;
  { e.action_count() } -> std::convertible_to<int>;
  { e.feature_dim() } -> std::convertible_to<int>;
  { e.horizon() } -> std::convertible_to<int>;  // 0 when unbounded
  { e.r_max() } -> std::convertible_to<Real>;
};

/** Tabular MDP behind the sampling contract. Features are the one-hot
 *  state encoding; episodes never terminate on their own (horizon() == 0),
 *  truncation is the caller's business. */
class TabularEnv {
 public:
  explicit TabularEnv(TabularMdp mdp) : mdp_(std::move(mdp)) {
    mdp_.validate();
  }

  const TabularMdp& mdp() const { return mdp_; }
  int state() const { return state_; }

  Vec reset(std::mt19937_64& gen) {
    state_ = sample_categorical(mdp_.mu, gen);
    return one_hot(state_);
  }

  EnvStep step(int action, std::mt19937_64& gen) {
    require(action >= 0 && action < mdp_.n_actions,
            "tabular env: action out of range");
    EnvStep out;
    out.reward = mdp_.reward(state_, action);
    state_ =
        sample_categorical(mdp_.trans[action].row(state_).transpose(), gen);
    out.features = one_hot(state_);
    out.done = false;
    return out;
  }

  int action_count() const { return mdp_.n_actions; }
  int feature_dim() const { return mdp_.n_states; }
  int horizon() const { return 0; }
  Real r_max() const { return mdp_.r_max; }

 private:
  Vec one_hot(int s) const {
    Vec v = Vec::Zero(mdp_.n_states);
    v[s] = 1.0;
    return v;
  }

  TabularMdp mdp_;
  int state_ = 0;
};

}  // namespace volrl
