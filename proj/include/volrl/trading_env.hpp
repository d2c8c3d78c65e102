#pragma once
// Single-asset trading on a fixed price path. The agent holds a position
// in {-1, 0, +1}; each step the position earns the next raw price change
// and pays a proportional fee on position changes:
//   reward = pos * (p[i+1] - p[i]) - fee * |pos - prev_pos|.
// Episodes start at a uniformly drawn offset into the series.

#include <cmath>
#include <random>

#include "volrl/common.hpp"
#include "volrl/environment.hpp"
#include "volrl/prices.hpp"

namespace volrl {

struct TradingConfig {
  int window = 10;       // past percentage changes visible in the state
  int episode_len = 50;  // decisions per episode
  Real fee = 7e-5;       // cost per unit of position change

  void validate() const {
    require(window > 0, "trading: window must be positive");
    require(episode_len > 0, "trading: episode_len must be positive");
    require(fee >= 0.0, "trading: fee must be nonnegative");
  }
};

/** Trading environment.
 *
 *  State (dimension window + 2): the last `window` fractional price
 *  changes p[k]/p[k-1] - 1 ending at the current index, the previous
 *  position, and the fraction of the episode remaining. Action indices
 *  {0, 1, 2} map to positions {-1, 0, +1}.
 *
 *  \pre series length >= window + episode_len + 1, so every start drawn
 *  from [window, len - episode_len - 1] has a full feature window and a
 *  full episode of price changes ahead. */
class TradingEnv {
 public:
  TradingEnv(PriceSeries series, TradingConfig cfg = {})
      : series_(std::move(series)), cfg_(cfg) {
    cfg_.validate();
    series_.validate();
    require(series_.size() >= cfg_.window + cfg_.episode_len + 1,
            "trading env: price series shorter than window + episode + 1");
    Real max_move = 0.0;
    for (int i = 1; i < series_.size(); ++i)
      max_move = std::max(max_move, std::abs(series_.p[i] - series_.p[i - 1]));
    r_max_ = max_move + 2.0 * cfg_.fee;
  }

  const TradingConfig& config() const { return cfg_; }

  Vec reset(std::mt19937_64& gen) {
    int lo = cfg_.window;
    int hi = series_.size() - cfg_.episode_len - 1;  // inclusive
    std::uniform_real_distribution<Real> unif(0.0, 1.0);
    int span = hi - lo + 1;
    start_ = lo + std::min(span - 1,
                           static_cast<int>(std::floor(unif(gen) * span)));
    t_ = 0;
    prev_pos_ = 0;
    return features();
  }

  EnvStep step(int action, std::mt19937_64& gen) {
    (void)gen;  // price path is exogenous and fixed
    require(action >= 0 && action <= 2, "trading env: action outside {0,1,2}");
    require(t_ < cfg_.episode_len, "trading env: episode already finished");
    int pos = action - 1;
    int idx = start_ + t_;
    EnvStep out;
    out.reward = pos * (series_.p[idx + 1] - series_.p[idx]) -
                 cfg_.fee * std::abs(pos - prev_pos_);
    prev_pos_ = pos;
    t_ += 1;
    out.done = (t_ >= cfg_.episode_len);
    out.features = features();
    return out;
  }

  int action_count() const { return 3; }
  int feature_dim() const { return cfg_.window + 2; }
  int horizon() const { return cfg_.episode_len; }
  Real r_max() const { return r_max_; }

 private:
  Vec features() const {
    Vec x(cfg_.window + 2);
    int idx = start_ + t_;
    for (int k = 0; k < cfg_.window; ++k) {
      int i = idx - cfg_.window + 1 + k;
      x[k] = series_.p[i] / series_.p[i - 1] - 1.0;
    }
    x[cfg_.window] = static_cast<Real>(prev_pos_);
    x[cfg_.window + 1] =
        static_cast<Real>(cfg_.episode_len - t_) / cfg_.episode_len;
    return x;
  }

  PriceSeries series_;
  TradingConfig cfg_;
  Real r_max_ = 0.0;
  int start_ = 0;
  int t_ = 0;
  int prev_pos_ = 0;
};

}  // namespace volrl
