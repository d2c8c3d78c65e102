#pragma once
// Trajectory collection and the finite-horizon estimators.
//
// Determinism contract: trajectory i of a batch is generated from its own
// stream seeded mix_seed(master_seed, i) on a private copy of the
// environment, and estimator reductions run in fixed trajectory order with
// compensated summation. Results are therefore bit-identical across runs
// and across thread counts.
//
// Early termination: when an episode ends before the requested horizon the
// remaining steps are recorded as absorbing zero-reward steps (action -1,
// no score contribution) and the trajectory is flagged `padded`. The
// estimators treat those steps as real zero rewards of the absorbing
// state, which keeps every normalization constant horizon-shaped.
//
// All estimators share the truncation normalizer (1-gamma)/(1-gamma^T).

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "volrl/common.hpp"
#include "volrl/environment.hpp"
#include "volrl/policy.hpp"

namespace volrl {

struct Trajectory {
  Mat states;    // row t: features observed before action t
  IVec actions;  // -1 on padded steps
  Vec rewards;   // 0 on padded steps
  int valid_len = 0;
  bool padded = false;
  std::uint64_t seed = 0;
};

struct Batch {
  std::vector<Trajectory> trajs;
  int horizon = 0;
  std::uint64_t master_seed = 0;

  int size() const { return static_cast<int>(trajs.size()); }
};

inline Real truncation_norm(Real gamma, int horizon) {
  require(horizon > 0, "estimator: horizon must be positive");
  require(gamma >= 0.0 && gamma < 1.0, "estimator: gamma outside [0, 1)");
  if (gamma == 0.0) return 1.0;
  return (1.0 - gamma) / (1.0 - std::pow(gamma, horizon));
}

template <EnvironmentLike E>
Trajectory rollout(E env, const Policy& policy, int horizon,
                   std::uint64_t seed) {
  require(horizon > 0, "rollout: horizon must be positive");
  require(policy.kind() == PolicyKind::softmax_linear,
          "rollout: discrete environments need a softmax policy");
  require(policy.action_count() == env.action_count() &&
              policy.feature_dim() == env.feature_dim(),
          "rollout: policy does not match environment shape");
  std::mt19937_64 gen(seed);
  Trajectory tr;
  tr.seed = seed;
  tr.states = Mat::Zero(horizon, env.feature_dim());
  tr.actions = IVec::Constant(horizon, -1);
  tr.rewards = Vec::Zero(horizon);
  Vec phi = env.reset(gen);
  int t = 0;
  for (; t < horizon; ++t) {
    tr.states.row(t) = phi.transpose();
    int a = policy.sample_discrete(phi, gen);
    EnvStep st = env.step(a, gen);
    tr.actions[t] = a;
    tr.rewards[t] = st.reward;
    phi = st.features;
    if (st.done) {
      ++t;
      break;
    }
  }
  tr.valid_len = t;
  tr.padded = (t < horizon);
  if (tr.padded) {
    // Absorbing tail: repeat the terminal features for bookkeeping.
    for (int u = t; u < horizon; ++u) tr.states.row(u) = phi.transpose();
  }
  return tr;
}

/** Collects n trajectories of the given horizon (0 means the
 *  environment's own horizon). `jobs` only controls scheduling; the
 *  output is identical for any value. */
template <EnvironmentLike E>
Batch collect(const E& env, const Policy& policy, int n, int horizon,
              std::uint64_t master_seed, int jobs = 1) {
  require(n > 0, "collect: need at least one trajectory");
  int t_len = horizon > 0 ? horizon : env.horizon();
  require(t_len > 0, "collect: unbounded environment needs explicit horizon");
  Batch batch;
  batch.horizon = t_len;
  batch.master_seed = master_seed;
  batch.trajs.resize(n);
  auto work = [&](int lo, int hi) {
    for (int i = lo; i < hi; ++i)
      batch.trajs[i] =
          rollout(env, policy, t_len, mix_seed(master_seed, i));
  };
  if (jobs <= 1) {
    work(0, n);
    return batch;
  }
  int n_threads = std::min(jobs, n);
  std::vector<std::thread> threads;
  int chunk = (n + n_threads - 1) / n_threads;
  for (int w = 0; w < n_threads; ++w) {
    int lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back(work, lo, hi);
  }
  for (auto& th : threads) th.join();
  return batch;
}

/** sum_t gamma^t rewards[t], compensated. */
inline Real discounted_return(const Vec& rewards, Real gamma) {
  KahanSum acc;
  Real g = 1.0;
  for (Eigen::Index t = 0; t < rewards.size(); ++t) {
    acc.add(g * rewards[t]);
    g *= gamma;
  }
  return acc.value();
}

/** Normalized return estimate:
 *  (1-gamma)/(1-gamma^T) * (1/N) sum_i sum_t gamma^t r_t. */
inline Real estimate_j(const Batch& batch, Real gamma) {
  require(batch.size() > 0, "estimate_j: empty batch");
  Real c = truncation_norm(gamma, batch.horizon);
  KahanSum acc;
  for (const Trajectory& tr : batch.trajs)
    acc.add(discounted_return(tr.rewards, gamma));
  return c * acc.value() / batch.size();
}

/** Volatility estimate with caller-supplied centerings:
 *  (1-gamma)/(1-gamma^T) * (1/N) sum_i sum_t gamma^t (r_t - j1)(r_t - j2).
 *  Unbiased when j1 and j2 come from batches independent of this one;
 *  see estimate_volatility_single / _triple for the two sanctioned modes. */
inline Real estimate_volatility(const Batch& batch, Real gamma, Real j1,
                                Real j2) {
  require(batch.size() > 0, "estimate_volatility: empty batch");
  Real c = truncation_norm(gamma, batch.horizon);
  KahanSum acc;
  for (const Trajectory& tr : batch.trajs) {
    KahanSum inner;
    Real g = 1.0;
    for (Eigen::Index t = 0; t < tr.rewards.size(); ++t) {
      inner.add(g * (tr.rewards[t] - j1) * (tr.rewards[t] - j2));
      g *= gamma;
    }
    acc.add(inner.value());
  }
  return c * acc.value() / batch.size();
}

/** Single-batch mode: centers with this batch's own J estimate. Biased
 *  low by exactly Var(J_hat). */
inline Real estimate_volatility_single(const Batch& batch, Real gamma) {
  Real j = estimate_j(batch, gamma);
  return estimate_volatility(batch, gamma, j, j);
}

/** Independent-batches mode: j1 from d1, j2 from d2, volatility sums over
 *  d3. The three master seeds must be pairwise distinct; overlapping
 *  streams void the independence that makes this unbiased. */
inline Real estimate_volatility_triple(const Batch& d1, const Batch& d2,
                                       const Batch& d3, Real gamma) {
  require(d1.master_seed != d2.master_seed &&
              d1.master_seed != d3.master_seed &&
              d2.master_seed != d3.master_seed,
          "estimate_volatility_triple: batches must use distinct seeds");
  Real j1 = estimate_j(d1, gamma);
  Real j2 = estimate_j(d2, gamma);
  return estimate_volatility(d3, gamma, j1, j2);
}

/** Unbiased sample variance (divisor N-1) of the per-trajectory
 *  discounted returns. \pre at least two trajectories. */
inline Real estimate_sigma(const Batch& batch, Real gamma) {
  require(batch.size() >= 2, "estimate_sigma: need at least 2 trajectories");
  std::vector<Real> g(batch.size());
  KahanSum mean_acc;
  for (int i = 0; i < batch.size(); ++i) {
    g[i] = discounted_return(batch.trajs[i].rewards, gamma);
    mean_acc.add(g[i]);
  }
  Real mean = mean_acc.value() / batch.size();
  KahanSum var_acc;
  for (Real gi : g) var_acc.add((gi - mean) * (gi - mean));
  return var_acc.value() / (batch.size() - 1);
}

/** Plug-in second moment with the shared truncation normalizer. */
inline Real estimate_m2(const Batch& batch, Real gamma) {
  return estimate_volatility(batch, gamma, 0.0, 0.0);
}

/** J_hat - lambda * nu2_hat (single mode). */
inline Real estimate_eta(const Batch& batch, Real gamma, Real lambda) {
  return estimate_j(batch, gamma) -
         lambda * estimate_volatility_single(batch, gamma);
}

/** Writes the batch as CSV: metadata comment, header, then one row per
 *  executed step (padded steps are not exported). */
inline void export_csv(const Batch& batch, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "export_csv: cannot open " + path);
  out << "# seed=" << batch.master_seed << " horizon=" << batch.horizon
      << " version=" << kArtifactVersion << "\n";
  out << "traj_id,t,action,reward\n";
  char buf[64];
  for (int i = 0; i < batch.size(); ++i) {
    const Trajectory& tr = batch.trajs[i];
    for (int t = 0; t < tr.valid_len; ++t) {
      std::snprintf(buf, sizeof(buf), "%.17g", tr.rewards[t]);
      out << i << "," << t << "," << tr.actions[t] << "," << buf << "\n";
    }
  }
  require(out.good(), "export_csv: write failed for " + path);
}

}  // namespace volrl
