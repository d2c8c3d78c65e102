#pragma once
// Liquid/non-liquid portfolio allocation task. One liquid asset earning a
// small deterministic rate; non-liquid positions lock the prevailing rate
// at purchase, pay principal * rate^maturity when they mature, and can
// default at maturity. High average yield, lumpy cash flows: raising the
// volatility penalty should shrink the non-liquid allocation.

#include <cmath>
#include <random>
#include <vector>

#include "volrl/common.hpp"
#include "volrl/environment.hpp"

namespace volrl {

struct PortfolioConfig {
  int horizon = 50;        // episode length T
  Real r_liquid = 1.001;   // per-step liquid growth factor
  int maturity = 4;        // steps until a non-liquid block pays out
  Real r_nl_high = 2.0;    // non-liquid high rate
  Real r_nl_low = 1.1;     // non-liquid low rate
  int max_order = 10;      // units purchasable per step
  Real p_risk = 0.05;      // default probability, applied at maturity only
  Real p_switch = 0.1;     // per-step rate regime switch probability
  Real order_cost = 0.02;  // liquid cost per unit

  void validate() const {
    require(horizon > 0, "portfolio: horizon must be positive");
    require(maturity > 0, "portfolio: maturity must be positive");
    require(max_order >= 0, "portfolio: max_order must be nonnegative");
    require(order_cost > 0.0, "portfolio: order_cost must be positive");
    require(r_liquid > 0.0 && r_nl_high > 0.0 && r_nl_low > 0.0,
            "portfolio: rates must be positive");
    require(p_risk >= 0.0 && p_risk <= 1.0 && p_switch >= 0.0 &&
                p_switch <= 1.0,
            "portfolio: probabilities outside [0, 1]");
  }
};

/** Portfolio environment.
 *
 *  State (dimension maturity + 2):
 *    [0]               liquid wealth
 *    [1 .. maturity]   non-liquid principal maturing in 1..maturity steps
 *    [maturity + 1]    current non-liquid rate minus the running mean of
 *                      previously observed rates (0 on the first step)
 *
 *  Action k in {0..max_order} buys k units at order_cost each; orders
 *  beyond available liquid are clamped (kInfoClampedOrder). Step order is
 *  pinned: (1) age blocks, blocks reaching zero mature and pay
 *  principal * locked_rate^maturity into liquid, or zero on default;
 *  (2) purchase; (3) liquid interest; (4) rate switch draw. Reward is the
 *  step's liquid P&L (always-buy-0 first reward: 1.0 * (r_liquid - 1)).
 */
class PortfolioEnv {
 public:
  explicit PortfolioEnv(PortfolioConfig cfg = {}) : cfg_(cfg) {
    cfg_.validate();
    // One block matures per step at most, principal is capped by the
    // per-step budget, so one-step P&L admits a closed conservative bound.
    Real unit_budget = cfg_.max_order * cfg_.order_cost;
    Real payout_max =
        unit_budget * std::pow(cfg_.r_nl_high, cfg_.maturity);
    Real liquid_max = (1.0 + payout_max * cfg_.horizon) *
                      std::pow(cfg_.r_liquid, cfg_.horizon);
    r_max_ = payout_max + liquid_max * (cfg_.r_liquid - 1.0) + unit_budget;
  }

  const PortfolioConfig& config() const { return cfg_; }

  Vec reset(std::mt19937_64&) {
    liquid_ = 1.0;
    blocks_.assign(cfg_.maturity, Block{});
    rate_ = cfg_.r_nl_low;
    rate_sum_ = 0.0;
    rate_count_ = 0;
    t_ = 0;
    return features();
  }

  EnvStep step(int action, std::mt19937_64& gen) {
    require(action >= 0 && action <= cfg_.max_order,
            "portfolio env: order outside 0..max_order");
    require(t_ < cfg_.horizon, "portfolio env: episode already finished");
    EnvStep out;
    Real liquid_start = liquid_;
    std::uniform_real_distribution<Real> unif(0.0, 1.0);

    // 1. Age. blocks_[i] matures in i+1 steps; index 0 pays out now.
    Block due = blocks_.front();
    blocks_.erase(blocks_.begin());
    blocks_.push_back(Block{});
    if (due.principal > 0.0) {
      bool defaulted = unif(gen) < cfg_.p_risk;
      if (!defaulted)
        liquid_ += due.principal * std::pow(due.rate, cfg_.maturity);
    }

    // 2. Purchase at the current rate, clamped to available liquid.
    int affordable = static_cast<int>(
        std::floor(liquid_ / cfg_.order_cost + 1e-12));
    int k = std::min(action, affordable);
    if (k < action) out.info |= kInfoClampedOrder;
    if (k > 0) {
      liquid_ -= k * cfg_.order_cost;
      blocks_.back() = Block{k * cfg_.order_cost, rate_};
    }

    // 3. Interest on whatever liquid remains.
    liquid_ *= cfg_.r_liquid;

    // 4. Record the rate the agent acted under, then maybe switch regime.
    rate_sum_ += rate_;
    rate_count_ += 1;
    if (unif(gen) < cfg_.p_switch)
      rate_ = (rate_ == cfg_.r_nl_low) ? cfg_.r_nl_high : cfg_.r_nl_low;

    out.reward = liquid_ - liquid_start;
    t_ += 1;
    out.done = (t_ >= cfg_.horizon);
    out.features = features();
    return out;
  }

  int action_count() const { return cfg_.max_order + 1; }
  int feature_dim() const { return cfg_.maturity + 2; }
  int horizon() const { return cfg_.horizon; }
  Real r_max() const { return r_max_; }

  /** Book value of everything the agent owns: liquid plus outstanding
   *  principal. The conservation audit in the tests tracks this against
   *  the cash-flow ledger. */
  Real total_book_value() const {
    Real v = liquid_;
    for (const Block& b : blocks_) v += b.principal;
    return v;
  }

 private:
  struct Block {
    Real principal = 0.0;
    Real rate = 0.0;  // locked at purchase
  };

  Vec features() const {
    Vec x(cfg_.maturity + 2);
    x[0] = liquid_;
    for (int i = 0; i < cfg_.maturity; ++i) x[1 + i] = blocks_[i].principal;
    Real past_mean = (rate_count_ > 0) ? rate_sum_ / rate_count_ : rate_;
    x[cfg_.maturity + 1] = rate_ - past_mean;
    return x;
  }

  PortfolioConfig cfg_;
  Real r_max_ = 0.0;
  Real liquid_ = 1.0;
  std::vector<Block> blocks_;
  Real rate_ = 0.0;
  Real rate_sum_ = 0.0;
  int rate_count_ = 0;
  int t_ = 0;
};

}  // namespace volrl
