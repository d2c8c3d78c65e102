#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "volrl/common.hpp"
#include "volrl/config.hpp"
#include "volrl/policy.hpp"
#include "volrl/prices.hpp"

#ifndef VOLRL_CLI_PATH
#error "VOLRL_CLI_PATH must point at the built command-line binary"
#endif

namespace {

namespace fs = std::filesystem;
using volrl::Real;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  std::string cap = "cli_capture.tmp";
  std::string cmd =
      std::string("\"") + VOLRL_CLI_PATH + "\" " + args + " > " + cap +
      " 2>&1";
  int status = std::system(cmd.c_str());
  if (output) *output = slurp(cap);
  std::remove(cap.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kTrainConfig =
    "[env]\n"
    "kind = two-cycle\n"
    "epsilon = 0.2\n"
    "[policy]\n"
    "kind = softmax\n"
    "[train]\n"
    "algo = vola-pg\n"
    "gamma = 0.9\n"
    "lambda = 0.1\n"
    "iterations = 3\n"
    "batch = 6\n"
    "horizon = 10\n"
    "step_size = 0.05\n"
    "seed = 4\n";

TEST(ConfigParse, SectionsCommentsAndValueAccess) {
  volrl::ConfigFile cfg = volrl::parse_config_text(
      "# full-line comment\n"
      "[env]\n"
      "kind = two-cycle   # trailing comment\n"
      "epsilon = 0.25\n"
      "[train]\n"
      "gamma = 0.5\n"
      "timing = true\n"
      "grid = 0.1, 0.5,2\n");
  volrl::ConfigReader r(cfg);
  EXPECT_TRUE(r.has("env", "kind"));
  EXPECT_FALSE(r.has("env", "absent"));
  EXPECT_EQ(r.get_str("env", "kind", ""), "two-cycle");
  EXPECT_DOUBLE_EQ(r.get_real("env", "epsilon", 0.0), 0.25);
  EXPECT_DOUBLE_EQ(r.get_real("env", "missing", 7.5), 7.5);
  EXPECT_DOUBLE_EQ(r.get_real("nosection", "gamma", 1.5), 1.5);
  EXPECT_DOUBLE_EQ(r.get_real("train", "gamma", 0.0), 0.5);
  EXPECT_TRUE(r.get_bool("train", "timing", false));
  std::vector<Real> grid = r.get_real_list("train", "grid");
  ASSERT_EQ(grid.size(), 3u);
  EXPECT_DOUBLE_EQ(grid[0], 0.1);
  EXPECT_DOUBLE_EQ(grid[2], 2.0);
  EXPECT_NO_THROW(r.finish());
}

TEST(ConfigParse, RejectsMalformedInputWithLineNumbers) {
  auto expect_parse_error = [](const std::string& text,
                               const std::string& needle) {
    try {
      volrl::parse_config_text(text);
      FAIL() << "expected rejection for: " << text;
    } catch (const volrl::ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos)
          << e.what();
    }
  };
  expect_parse_error("x = 1\n", "line 1: key outside any [section]");
  expect_parse_error("[env]\nnot a pair\n", "line 2: expected key = value");
  expect_parse_error("[env\n", "line 1: unterminated section header");
  expect_parse_error("[]\n", "line 1: empty section name");
  expect_parse_error("[env]\n= 3\n", "line 2: empty key");
  expect_parse_error("[env]\nkind = a\nkind = b\n",
                     "line 3: duplicate key env.kind");

  volrl::ConfigReader bad(
      volrl::parse_config_text("[train]\ngamma = zebra\nflag = maybe\n"));
  EXPECT_THROW(bad.get_real("train", "gamma", 0.0), volrl::ValidationError);
  EXPECT_THROW(bad.get_bool("train", "flag", false), volrl::ValidationError);

  volrl::ConfigReader unused(
      volrl::parse_config_text("[env]\nkind = two-cycle\nepsilonn = 0.1\n"));
  unused.get_str("env", "kind", "");
  try {
    unused.finish();
    FAIL() << "expected unknown-key rejection";
  } catch (const volrl::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(
                  "config line 3: unknown key env.epsilonn"),
              std::string::npos)
        << e.what();
  }
}

// [DERIVED] FNV-1a 64-bit reference values: the offset basis for empty
// input and the published digest of "a".
TEST(ConfigHash, MatchesFnv1aReferenceVectorsAndTracksRawBytes) {
  EXPECT_EQ(volrl::config_hash(volrl::parse_config_text("")),
            "cbf29ce484222325");
  volrl::ConfigFile one;
  one.raw = "a";
  EXPECT_EQ(volrl::config_hash(one), "af63dc4c8601ec8c");

  std::string base = "[env]\nkind = two-cycle\n";
  volrl::ConfigFile with_comment = volrl::parse_config_text(base + "# note\n");
  volrl::ConfigFile without = volrl::parse_config_text(base);
  EXPECT_NE(volrl::config_hash(with_comment), volrl::config_hash(without));
}

TEST(CliTrain, WritesByteStableLogAndLoadablePolicy) {
  TempDir dir("cli_train_case");
  std::string cfg_path = dir.file("run.cfg");
  write_file(cfg_path, kTrainConfig);

  std::string out;
  int rc = run_cli("train --config " + cfg_path + " --out " + dir.file("a"),
                   &out);
  ASSERT_EQ(rc, 0) << out;
  EXPECT_NE(out.find("train: 3 iterations"), std::string::npos);

  std::string log = slurp(dir.file("a") + "/train_log.csv");
  std::vector<std::string> ls = lines_of(log);
  ASSERT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls[0].rfind("# seed=4 config_hash=", 0), 0u);
  EXPECT_NE(ls[0].find(" version="), std::string::npos);
  EXPECT_EQ(ls[1],
            "iter,j_hat,nu2_hat,sigma2_hat,eta_hat,grad_norm,kl_step,"
            "accepted_step_size,wall_time");
  EXPECT_EQ(ls[2].substr(0, 2), "0,");

  volrl::Policy pol = volrl::Policy::load(dir.file("a") + "/policy.txt");
  EXPECT_EQ(pol.kind(), volrl::PolicyKind::softmax_linear);
  EXPECT_EQ(pol.param_dim(), 10);

  ASSERT_EQ(run_cli("train --config " + cfg_path + " --out " + dir.file("b"),
                    &out),
            0)
      << out;
  EXPECT_EQ(log, slurp(dir.file("b") + "/train_log.csv"));
  EXPECT_EQ(slurp(dir.file("a") + "/policy.txt"),
            slurp(dir.file("b") + "/policy.txt"));
}

TEST(CliTrain, ExitCodesDistinguishValidationFailures) {
  TempDir dir("cli_exit_case");
  std::string out;
  EXPECT_EQ(run_cli("train --config " + dir.file("missing.cfg"), &out), 1);
  EXPECT_NE(out.find("cannot open"), std::string::npos);

  std::string typo_path = dir.file("typo.cfg");
  write_file(typo_path, std::string(kTrainConfig) + "type = extra\n");
  EXPECT_EQ(run_cli("train --config " + typo_path, &out), 1);
  EXPECT_NE(out.find("unknown key"), std::string::npos);

  std::string gauss_path = dir.file("gauss.cfg");
  std::string gauss_cfg = kTrainConfig;
  gauss_cfg.replace(gauss_cfg.find("kind = softmax"), 14, "kind = gaussian");
  write_file(gauss_path, gauss_cfg);
  EXPECT_EQ(run_cli("train --config " + gauss_path, &out), 1);
  EXPECT_NE(out.find("gaussian"), std::string::npos);

  std::string cfg_path = dir.file("ok.cfg");
  write_file(cfg_path, kTrainConfig);
  EXPECT_EQ(run_cli("train --config " + cfg_path + " --algo bogus", &out), 1);
  EXPECT_NE(out.find("unknown algorithm"), std::string::npos);

  EXPECT_EQ(run_cli("", &out), 1);
  EXPECT_EQ(run_cli("verify --mdps 0 --out " + dir.str(), &out), 1);
}

TEST(CliGenData, EmitsConstantSeriesTheLoaderAcceptsBack) {
  TempDir dir("cli_gen_case");
  std::string out;
  int rc = run_cli("gen-data --n 12 --p0 50 --vol 0 --seed 9 --out " +
                       dir.str(),
                   &out);
  ASSERT_EQ(rc, 0) << out;

  std::vector<std::string> ls = lines_of(slurp(dir.file("prices.csv")));
  ASSERT_EQ(ls.size(), 14u);
  EXPECT_EQ(ls[0].rfind("# seed=9 config_hash=cbf29ce484222325 version=", 0),
            0u);
  EXPECT_EQ(ls[1], "price");
  EXPECT_EQ(ls[2], "50");

  volrl::PriceSeries series = volrl::load_prices_csv(dir.file("prices.csv"));
  ASSERT_EQ(series.p.size(), 12u);
  for (Real p : series.p) EXPECT_EQ(p, 50.0);
}

TEST(CliSweep, FrontierRowsAreConsistentAndJobInvariant) {
  TempDir dir("cli_sweep_case");
  std::string cfg_path = dir.file("sweep.cfg");
  write_file(cfg_path,
             "[env]\n"
             "kind = two-cycle\n"
             "epsilon = 0.2\n"
             "[train]\n"
             "algo = vola-pg\n"
             "gamma = 0.9\n"
             "iterations = 2\n"
             "batch = 4\n"
             "horizon = 8\n"
             "seed = 4\n"
             "[sweep]\n"
             "eval_batch = 20\n");

  std::string out;
  int rc = run_cli("sweep --config " + cfg_path +
                       " --lambda-grid 0,0.5,2 --out " + dir.file("a"),
                   &out);
  ASSERT_EQ(rc, 0) << out;

  std::string frontier = slurp(dir.file("a") + "/frontier.csv");
  std::vector<std::string> ls = lines_of(frontier);
  ASSERT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls[1],
            "lambda_or_c,j_hat,nu2_hat,sigma2_hat,eta_hat,iterations,seed");
  const Real lambdas[3] = {0.0, 0.5, 2.0};
  for (int k = 0; k < 3; ++k) {
    std::istringstream row(ls[static_cast<size_t>(2 + k)]);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 7u);
    EXPECT_DOUBLE_EQ(std::stod(cells[0]), lambdas[k]);
    Real j = std::stod(cells[1]), nu2 = std::stod(cells[2]);
    Real eta = std::stod(cells[4]);
    EXPECT_DOUBLE_EQ(eta, j - lambdas[k] * nu2);
    EXPECT_EQ(cells[5], "2");
    EXPECT_EQ(std::stoull(cells[6]),
              volrl::mix_seed(4, 1000 + static_cast<std::uint64_t>(k)));
    EXPECT_TRUE(
        fs::exists(dir.file("a") + "/train_log_" + std::to_string(k) +
                   ".csv"));
  }

  ASSERT_EQ(run_cli("sweep --config " + cfg_path +
                        " --lambda-grid 0,0.5,2 --jobs 3 --out " +
                        dir.file("b"),
                    &out),
            0)
      << out;
  EXPECT_EQ(frontier, slurp(dir.file("b") + "/frontier.csv"));

  EXPECT_EQ(run_cli("sweep --config " + cfg_path +
                        " --lambda-grid 1 --c-grid 1 --out " + dir.file("c"),
                    &out),
            1);
  EXPECT_EQ(run_cli("sweep --config " + cfg_path +
                        " --algo trpo-exp --lambda-grid 1 --out " +
                        dir.file("c"),
                    &out),
            1);
  EXPECT_NE(out.find("c-grid"), std::string::npos);
}

TEST(CliVerify, SmallCorpusPassesEverySuite) {
  TempDir dir("cli_verify_case");
  std::string out;
  int rc = run_cli("verify --mdps 3 --out " + dir.str(), &out);
  ASSERT_EQ(rc, 0) << out;
  EXPECT_NE(out.find("verify: all suites passed"), std::string::npos);

  std::vector<std::string> ls = lines_of(slurp(dir.file("verify_report.csv")));
  ASSERT_GE(ls.size(), 3u);
  EXPECT_EQ(ls[1], "theorem_id,instances,max_violation,tolerance,pass");
  EXPECT_EQ(ls.size(), 16u);  // metadata + header + 14 suites
  for (size_t i = 2; i < ls.size(); ++i)
    EXPECT_EQ(ls[i].substr(ls[i].size() - 5), ",true") << ls[i];
}

}  // namespace
