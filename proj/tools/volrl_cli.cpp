// Command-line front door: training runs, lambda sweeps producing
// Pareto CSVs, theorem verification, and synthetic price data.
//
// Exit codes: 0 success, 1 validation error, 2 numerical failure,
// 3 theorem violation (verify only). Files created by a failed run are
// removed so an output directory never holds partial artifacts.

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "volrl/config.hpp"
#include "volrl/environment.hpp"
#include "volrl/exact_dp.hpp"
#include "volrl/mdp.hpp"
#include "volrl/optimizers.hpp"
#include "volrl/policy.hpp"
#include "volrl/portfolio_env.hpp"
#include "volrl/prices.hpp"
#include "volrl/safe.hpp"
#include "volrl/sampling.hpp"
#include "volrl/trading_env.hpp"
#include "volrl/verify.hpp"

namespace fs = std::filesystem;
using namespace volrl;

namespace {

/** Deletes every registered file unless commit() ran first. */
class OutputTracker {
 public:
  ~OutputTracker() {
    if (committed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
  std::string add(const fs::path& p) {
    paths_.push_back(p);
    return p.string();
  }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

struct CliArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 1;
  std::string algo;
  std::string env_kind;
  std::string lambda_grid;
  std::string c_grid;
  bool timing = false;
  // gen-data locals
  int gen_n = 1000;
  Real gen_p0 = 100.0;
  Real gen_drift = 0.0;
  Real gen_vol = 0.01;
  bool gen_n_given = false, gen_p0_given = false;
  bool gen_drift_given = false, gen_vol_given = false;
  // verify locals
  int verify_mdps = 50;
};

/** Marks every documented key as seen so finish() flags only unknown
 *  keys, independent of which subcommand consumed what. */
void consume_known_keys(ConfigReader& r) {
  for (const char* k :
       {"kind", "epsilon", "n_states", "n_actions", "r_max", "mdp_seed",
        "horizon", "r_liquid", "maturity", "r_nl_high", "r_nl_low",
        "max_order", "p_risk", "p_switch", "order_cost", "prices", "window",
        "episode_len", "fee", "gbm_n", "gbm_p0", "gbm_drift", "gbm_vol",
        "gbm_seed"})
    r.has("env", k);
  for (const char* k : {"kind", "sigma", "bias", "init_scale"})
    r.has("policy", k);
  for (const char* k :
       {"algo", "gamma", "lambda", "iterations", "batch", "horizon",
        "step_size", "estimator", "kl_radius", "cg_iters", "cg_damping",
        "backtrack_coef", "backtrack_steps", "exp_c", "delta", "batch_cap",
        "feature_norm_bound", "penalty", "penalty_inner_iters", "seed"})
    r.has("train", k);
  for (const char* k : {"lambda_grid", "c_grid", "eval_batch"})
    r.has("sweep", k);
}

TrainConfig build_train_config(ConfigReader& r, const CliArgs& args) {
  TrainConfig tc;
  tc.gamma = r.get_real("train", "gamma", tc.gamma);
  tc.lambda = r.get_real("train", "lambda", tc.lambda);
  tc.iterations = r.get_int("train", "iterations", tc.iterations);
  tc.batch_size = r.get_int("train", "batch", tc.batch_size);
  tc.horizon = r.get_int("train", "horizon", tc.horizon);
  tc.step_size = r.get_real("train", "step_size", tc.step_size);
  std::string est = r.get_str("train", "estimator", "pgt");
  if (est == "pgt")
    tc.estimator = Estimator::pgt;
  else if (est == "gpomdp")
    tc.estimator = Estimator::gpomdp;
  else if (est == "gpomdp-baseline")
    tc.estimator = Estimator::gpomdp_baseline;
  else
    throw ValidationError("train.estimator must be one of pgt, gpomdp, "
                          "gpomdp-baseline");
  tc.kl_radius = r.get_real("train", "kl_radius", tc.kl_radius);
  tc.cg_iters = r.get_int("train", "cg_iters", tc.cg_iters);
  tc.cg_damping = r.get_real("train", "cg_damping", tc.cg_damping);
  tc.backtrack_coef = r.get_real("train", "backtrack_coef", tc.backtrack_coef);
  tc.backtrack_steps =
      r.get_int("train", "backtrack_steps", tc.backtrack_steps);
  tc.exp_c = r.get_real("train", "exp_c", tc.exp_c);
  tc.delta = r.get_real("train", "delta", tc.delta);
  tc.batch_cap = r.get_int("train", "batch_cap", tc.batch_cap);
  tc.feature_norm_bound =
      r.get_real("train", "feature_norm_bound", tc.feature_norm_bound);
  tc.penalty_inner_iters =
      r.get_int("train", "penalty_inner_iters", tc.penalty_inner_iters);
  tc.seed = args.seed_given ? args.seed : r.get_u64("train", "seed", 0);
  tc.timing = args.timing;
  tc.jobs = args.jobs;
  return tc;
}

struct EnvBundle {
  std::variant<TabularEnv, PortfolioEnv, TradingEnv> env;
  std::optional<TabularMdp> mdp;  // set for tabular kinds
  std::string kind;
  bool feature_based = false;  // portfolio/trading: default bias on
};

EnvBundle build_env(ConfigReader& r, const CliArgs& args, Real gamma) {
  std::string kind =
      args.env_kind.empty() ? r.get_str("env", "kind", "") : args.env_kind;
  require(!kind.empty(),
          "no environment selected: pass --env or set [env] kind");
  if (kind == "two-cycle") {
    TabularMdp mdp = two_cycle_mdp(r.get_real("env", "epsilon", 0.1), gamma);
    return EnvBundle{std::variant<TabularEnv, PortfolioEnv, TradingEnv>(
                         std::in_place_type<TabularEnv>, mdp),
                     mdp, kind, false};
  }
  if (kind == "random-tabular") {
    TabularMdp mdp = build_random_tabular(
        r.get_int("env", "n_states", 5), r.get_int("env", "n_actions", 3),
        r.get_real("env", "r_max", 1.0), r.get_u64("env", "mdp_seed", 0));
    return EnvBundle{std::variant<TabularEnv, PortfolioEnv, TradingEnv>(
                         std::in_place_type<TabularEnv>, mdp),
                     mdp, kind, false};
  }
  if (kind == "portfolio") {
    PortfolioConfig pc;
    pc.horizon = r.get_int("env", "horizon", pc.horizon);
    pc.r_liquid = r.get_real("env", "r_liquid", pc.r_liquid);
    pc.maturity = r.get_int("env", "maturity", pc.maturity);
    pc.r_nl_high = r.get_real("env", "r_nl_high", pc.r_nl_high);
    pc.r_nl_low = r.get_real("env", "r_nl_low", pc.r_nl_low);
    pc.max_order = r.get_int("env", "max_order", pc.max_order);
    pc.p_risk = r.get_real("env", "p_risk", pc.p_risk);
    pc.p_switch = r.get_real("env", "p_switch", pc.p_switch);
    pc.order_cost = r.get_real("env", "order_cost", pc.order_cost);
    return EnvBundle{std::variant<TabularEnv, PortfolioEnv, TradingEnv>(
                         std::in_place_type<PortfolioEnv>, pc),
                     std::nullopt, kind, true};
  }
  if (kind == "trading") {
    std::string src = r.get_str("env", "prices", "gbm");
    PriceSeries series =
        (src == "gbm")
            ? gen_gbm_prices(r.get_int("env", "gbm_n", 1000),
                             r.get_real("env", "gbm_p0", 100.0),
                             r.get_real("env", "gbm_drift", 0.0),
                             r.get_real("env", "gbm_vol", 0.01),
                             r.get_u64("env", "gbm_seed", 1))
            : load_prices_csv(src);
    TradingConfig tc;
    tc.window = r.get_int("env", "window", tc.window);
    tc.episode_len = r.get_int("env", "episode_len", tc.episode_len);
    tc.fee = r.get_real("env", "fee", tc.fee);
    return EnvBundle{std::variant<TabularEnv, PortfolioEnv, TradingEnv>(
                         std::in_place_type<TradingEnv>, std::move(series),
                         tc),
                     std::nullopt, kind, true};
  }
  throw ValidationError("unknown environment kind: " + kind +
                        " (expected two-cycle, portfolio, trading, "
                        "random-tabular)");
}

Policy build_policy(ConfigReader& r, const EnvBundle& eb,
                    std::uint64_t seed) {
  std::string kind = r.get_str("policy", "kind", "softmax");
  int fdim = 0, acts = 0;
  std::visit(
      [&](const auto& env) {
        fdim = env.feature_dim();
        acts = env.action_count();
      },
      eb.env);
  bool bias = r.get_bool("policy", "bias", eb.feature_based);
  r.get_real("policy", "sigma", 1.0);
  Policy pol = [&] {
    if (kind == "softmax") return Policy::softmax(fdim, acts, bias);
    if (kind == "gaussian")
      throw ValidationError(
          "policy.kind gaussian: the bundled environments are discrete; "
          "gaussian policies are for library-level analysis only");
    throw ValidationError("policy.kind must be softmax or gaussian");
  }();
  Real init_scale = r.get_real("policy", "init_scale", 0.0);
  require(init_scale >= 0.0, "policy.init_scale must be nonnegative");
  if (init_scale > 0.0) {
    std::mt19937_64 gen(mix_seed(seed, 0x5eed));
    std::uniform_real_distribution<Real> u(-init_scale, init_scale);
    Vec th = pol.theta();
    for (Eigen::Index i = 0; i < th.size(); ++i) th[i] = u(gen);
    pol.set_theta(th);
  }
  return pol;
}

std::string resolve_algo(ConfigReader& r, const CliArgs& args) {
  std::string algo =
      args.algo.empty() ? r.get_str("train", "algo", "") : args.algo;
  require(!algo.empty(), "no algorithm selected: pass --algo or set "
                         "[train] algo");
  for (const char* known :
       {"vola-pg", "trvo", "trpo-exp", "mean-variance", "safe-vola-pg"})
    if (algo == known) return algo;
  throw ValidationError("unknown algorithm: " + algo +
                        " (expected vola-pg, trvo, trpo-exp, mean-variance, "
                        "safe-vola-pg)");
}

TrainLog run_algo(EnvBundle& eb, Policy& pol, const std::string& algo,
                  const TrainConfig& tc, bool penalty) {
  if (penalty) {
    require(algo == "trvo", "train.penalty is a trvo mode");
    require(eb.mdp.has_value(),
            "train.penalty requires a tabular environment");
    return trvo_penalty(*eb.mdp, pol, tc);
  }
  return std::visit(
      [&](auto& env) -> TrainLog {
        if (algo == "vola-pg") return vola_pg(env, pol, tc);
        if (algo == "trvo") return trvo(env, pol, tc);
        if (algo == "trpo-exp") return trpo_exp(env, pol, tc);
        if (algo == "mean-variance") return mean_variance_pg(env, pol, tc);
        return safe_vola_pg(env, pol, tc);
      },
      eb.env);
}

struct EvalStats {
  Real j = 0.0, nu2 = 0.0, sigma2 = 0.0;
};

EvalStats eval_policy(const EnvBundle& eb, const Policy& pol, int n,
                      int horizon, Real gamma, std::uint64_t seed,
                      int jobs) {
  Batch batch = std::visit(
      [&](const auto& env) { return collect(env, pol, n, horizon, seed, jobs); },
      eb.env);
  EvalStats st;
  st.j = estimate_j(batch, gamma);
  st.nu2 = estimate_volatility_single(batch, gamma);
  st.sigma2 = estimate_sigma(batch, gamma);
  return st;
}

std::vector<Real> parse_grid(const std::string& text, const char* what) {
  std::vector<Real> out;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = volrl::detail::trim(item);
    require(!item.empty(), std::string(what) + ": empty grid element");
    try {
      size_t pos = 0;
      Real v = std::stod(item, &pos);
      require(pos == item.size(), std::string(what) + ": bad number " + item);
      out.push_back(v);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError(std::string(what) + ": bad number " + item);
    }
  }
  require(!out.empty(), std::string(what) + ": empty grid");
  return out;
}

int cmd_train(ConfigReader& reader, const CliArgs& args) {
  consume_known_keys(reader);
  reader.finish();
  TrainConfig tc = build_train_config(reader, args);
  std::string algo = resolve_algo(reader, args);
  bool penalty = reader.get_bool("train", "penalty", false);
  EnvBundle eb = build_env(reader, args, tc.gamma);
  Policy pol = build_policy(reader, eb, tc.seed);
  std::string hash = config_hash(reader.file());

  TrainLog log = run_algo(eb, pol, algo, tc, penalty);

  fs::create_directories(args.out_dir);
  OutputTracker tracker;
  log.write_csv(tracker.add(fs::path(args.out_dir) / "train_log.csv"),
                tc.seed, hash);
  pol.save(tracker.add(fs::path(args.out_dir) / "policy.txt"));
  tracker.commit();
  std::cout << "train: " << log.rows.size() << " iterations logged to "
            << args.out_dir << "\n";
  return 0;
}

struct FrontierRow {
  Real lambda_or_c = 0.0;
  Real j_hat = 0.0, nu2_hat = 0.0, sigma2_hat = 0.0, eta_hat = 0.0;
  int iterations = 0;
  std::uint64_t seed = 0;
};

void write_frontier_csv(const std::string& path,
                        const std::vector<FrontierRow>& rows,
                        std::uint64_t seed, const std::string& hash) {
  std::ofstream out(path);
  require(out.good(), "sweep: cannot open output " + path);
  out << "# seed=" << seed << " config_hash=" << hash
      << " version=" << kArtifactVersion << "\n";
  out << "lambda_or_c,j_hat,nu2_hat,sigma2_hat,eta_hat,iterations,seed\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%d,%llu\n",
                  r.lambda_or_c, r.j_hat, r.nu2_hat, r.sigma2_hat, r.eta_hat,
                  r.iterations,
                  static_cast<unsigned long long>(r.seed));
    out << buf;
  }
  require(out.good(), "sweep: write failed for " + path);
}

int cmd_sweep(ConfigReader& reader, const CliArgs& args) {
  consume_known_keys(reader);
  reader.finish();
  TrainConfig tc = build_train_config(reader, args);
  std::string algo = resolve_algo(reader, args);
  bool penalty = reader.get_bool("train", "penalty", false);

  std::string lg = args.lambda_grid.empty()
                       ? reader.get_str("sweep", "lambda_grid", "")
                       : args.lambda_grid;
  std::string cg = args.c_grid.empty()
                       ? reader.get_str("sweep", "c_grid", "")
                       : args.c_grid;
  require(lg.empty() != cg.empty(),
          "sweep: give exactly one of --lambda-grid / --c-grid (or the "
          "[sweep] equivalents)");
  bool c_mode = !cg.empty();
  require(!c_mode || algo == "trpo-exp",
          "sweep: --c-grid applies to trpo-exp only");
  require(c_mode || algo != "trpo-exp",
          "sweep: trpo-exp sweeps over --c-grid, not --lambda-grid");
  std::vector<Real> grid =
      parse_grid(c_mode ? cg : lg, c_mode ? "c_grid" : "lambda_grid");
  int eval_batch = reader.get_int("sweep", "eval_batch", 1000);
  require(eval_batch >= 2, "sweep.eval_batch must be at least 2");

  Real gamma = tc.gamma;
  EnvBundle eb0 = build_env(reader, args, gamma);
  Policy pol0 = build_policy(reader, eb0, tc.seed);
  std::string hash = config_hash(reader.file());
  std::uint64_t eval_seed = mix_seed(tc.seed, 0xea11);

  const size_t npts = grid.size();
  std::vector<FrontierRow> rows(npts);
  std::vector<TrainLog> logs(npts);
  std::vector<std::exception_ptr> errors(npts);

  // Grid points run in parallel; each point is internally sequential so
  // the artifacts do not depend on --jobs. Workers copy the prebuilt
  // bundle rather than re-reading the config (the reader is not
  // thread-safe).
  auto run_point = [&](size_t k) {
    try {
      EnvBundle eb = eb0;
      Policy pol = pol0;
      TrainConfig ptc = tc;
      ptc.jobs = 1;
      ptc.seed = mix_seed(tc.seed, 1000 + k);
      if (c_mode)
        ptc.exp_c = grid[k];
      else
        ptc.lambda = grid[k];
      logs[k] = run_algo(eb, pol, algo, ptc, penalty);
      EvalStats st = eval_policy(eb, pol, eval_batch, ptc.horizon, gamma,
                                 eval_seed, 1);
      FrontierRow row;
      row.lambda_or_c = grid[k];
      row.j_hat = st.j;
      row.nu2_hat = st.nu2;
      row.sigma2_hat = st.sigma2;
      row.eta_hat = c_mode ? st.j : st.j - ptc.lambda * st.nu2;
      row.iterations = static_cast<int>(logs[k].rows.size());
      row.seed = ptc.seed;
      rows[k] = row;
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };

  if (args.jobs <= 1) {
    for (size_t k = 0; k < npts; ++k) run_point(k);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (size_t k = next.fetch_add(1); k < npts; k = next.fetch_add(1))
        run_point(k);
    };
    size_t n_threads = std::min<size_t>(args.jobs, npts);
    std::vector<std::thread> threads;
    for (size_t w = 0; w < n_threads; ++w) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  for (size_t k = 0; k < npts; ++k)
    if (errors[k]) std::rethrow_exception(errors[k]);

  fs::create_directories(args.out_dir);
  OutputTracker tracker;
  write_frontier_csv(tracker.add(fs::path(args.out_dir) / "frontier.csv"),
                     rows, tc.seed, hash);
  for (size_t k = 0; k < npts; ++k)
    logs[k].write_csv(
        tracker.add(fs::path(args.out_dir) /
                    ("train_log_" + std::to_string(k) + ".csv")),
        rows[k].seed, hash);
  tracker.commit();
  std::cout << "sweep: " << npts << " frontier rows written to "
            << args.out_dir << "\n";
  return 0;
}

int cmd_verify(ConfigReader& reader, const CliArgs& args) {
  consume_known_keys(reader);
  reader.finish();
  require(args.verify_mdps >= 1, "verify: --mdps must be positive");
  std::string hash = config_hash(reader.file());
  std::vector<VerifyRow> rows = run_verify_suites(args.verify_mdps);

  fs::create_directories(args.out_dir);
  OutputTracker tracker;
  write_verify_csv(
      tracker.add(fs::path(args.out_dir) / "verify_report.csv"), rows,
      args.seed_given ? args.seed : 0, hash);
  tracker.commit();
  bool ok = all_pass(rows);
  for (const auto& r : rows)
    std::cout << (r.pass ? "pass " : "FAIL ") << r.theorem_id << " ("
              << r.instances << " instances, worst " << r.max_violation
              << " vs tol " << r.tolerance << ")\n";
  std::cout << (ok ? "verify: all suites passed\n"
                   : "verify: violations found\n");
  return ok ? 0 : 3;
}

int cmd_gen_data(ConfigReader& reader, const CliArgs& args) {
  consume_known_keys(reader);
  reader.finish();
  int n = args.gen_n_given ? args.gen_n : reader.get_int("env", "gbm_n", 1000);
  Real p0 =
      args.gen_p0_given ? args.gen_p0 : reader.get_real("env", "gbm_p0", 100.0);
  Real drift = args.gen_drift_given ? args.gen_drift
                                    : reader.get_real("env", "gbm_drift", 0.0);
  Real vol =
      args.gen_vol_given ? args.gen_vol : reader.get_real("env", "gbm_vol", 0.01);
  std::uint64_t seed =
      args.seed_given ? args.seed : reader.get_u64("env", "gbm_seed", 1);
  PriceSeries series = gen_gbm_prices(n, p0, drift, vol, seed);

  fs::create_directories(args.out_dir);
  OutputTracker tracker;
  std::string path = tracker.add(fs::path(args.out_dir) / "prices.csv");
  std::ofstream out(path);
  require(out.good(), "gen-data: cannot open " + path);
  out << "# seed=" << seed << " config_hash=" << config_hash(reader.file())
      << " version=" << kArtifactVersion << "\n";
  out << "price\n";
  char buf[64];
  for (Real p : series.p) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", p);
    out << buf;
  }
  require(out.good(), "gen-data: write failed for " + path);
  tracker.commit();
  std::cout << "gen-data: " << series.p.size() << " prices written to "
            << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volrl: mean-volatility risk-averse policy optimization"};
  app.require_subcommand(1);
  app.fallthrough();

  CliArgs args;
  app.add_option("--config", args.config_path, "Config file (key=value)");
  app.add_option("--out", args.out_dir, "Output directory");
  auto* seed_opt = app.add_option("--seed", args.seed, "Master seed");
  app.add_option("--jobs", args.jobs, "Parallel workers")
      ->check(CLI::PositiveNumber);
  app.add_option("--algo", args.algo,
                 "vola-pg | trvo | trpo-exp | mean-variance | safe-vola-pg");
  app.add_option("--env", args.env_kind,
                 "two-cycle | portfolio | trading | random-tabular");
  app.add_flag("--timing", args.timing,
               "Record wall time per iteration (off keeps logs bit-stable)");

  auto* train = app.add_subcommand("train", "Run one training job");
  auto* sweep =
      app.add_subcommand("sweep", "Trace a risk frontier over a grid");
  app.add_option("--lambda-grid", args.lambda_grid,
                 "Comma-separated lambda values (sweep)");
  app.add_option("--c-grid", args.c_grid,
                 "Comma-separated exp-utility c values (sweep, trpo-exp)");
  auto* verify =
      app.add_subcommand("verify", "Check every identity and bound suite");
  verify->add_option("--mdps", args.verify_mdps,
                     "Corpus size (seeds 0..n-1)");
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic price CSV");
  auto* on = gen->add_option("--n", args.gen_n, "Series length");
  auto* op0 = gen->add_option("--p0", args.gen_p0, "Initial price");
  auto* odr = gen->add_option("--drift", args.gen_drift, "Per-step drift");
  auto* ovol = gen->add_option("--vol", args.gen_vol, "Per-step volatility");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  args.seed_given = seed_opt->count() > 0;
  args.gen_n_given = on->count() > 0;
  args.gen_p0_given = op0->count() > 0;
  args.gen_drift_given = odr->count() > 0;
  args.gen_vol_given = ovol->count() > 0;

  try {
    ConfigFile cfg = args.config_path.empty()
                         ? parse_config_text("")
                         : parse_config(args.config_path);
    ConfigReader reader(std::move(cfg));
    if (train->parsed()) return cmd_train(reader, args);
    if (sweep->parsed()) return cmd_sweep(reader, args);
    if (verify->parsed()) return cmd_verify(reader, args);
    if (gen->parsed()) return cmd_gen_data(reader, args);
    throw ValidationError("no subcommand given");
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
