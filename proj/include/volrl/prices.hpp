#pragma once
// Price inputs for the trading environment: CSV loading and a seeded
// geometric Brownian motion generator.

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "volrl/common.hpp"

namespace volrl {

/** Strictly positive price path, one value per step. */
struct PriceSeries {
  std::vector<Real> p;

  int size() const { return static_cast<int>(p.size()); }

  void validate() const {
    require(!p.empty(), "price series: empty");
    for (Real v : p)
      require(std::isfinite(v) && v > 0.0,
              "price series: prices must be finite and positive");
  }
};

/** Loads a one-column CSV of prices. Lines starting with '#' and a
 *  single optional non-numeric header line are skipped.
 *  \throws ValidationError on malformed numbers or nonpositive prices. */
inline PriceSeries load_prices_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_prices_csv: cannot open " + path);
  PriceSeries ps;
  std::string line;
  bool header_allowed = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    // Tolerate a trailing comma column (price,volume style extracts).
    std::string field = line.substr(0, line.find(','));
    try {
      size_t used = 0;
      Real v = std::stod(field, &used);
      while (used < field.size() &&
             std::isspace(static_cast<unsigned char>(field[used])))
        ++used;
      if (used != field.size()) throw std::invalid_argument("trailing junk");
      ps.p.push_back(v);
    } catch (const std::exception&) {
      if (header_allowed) {
        header_allowed = false;
        continue;
      }
      throw ValidationError("load_prices_csv: bad number at line " +
                            std::to_string(line_no));
    }
    header_allowed = false;
  }
  ps.validate();
  return ps;
}

/** Geometric Brownian motion path:
 *    p[t+1] = p[t] * exp(drift - vol^2/2 + vol * z_t),  z_t ~ N(0, 1).
 *  Deterministic for a fixed seed. */
inline PriceSeries gen_gbm_prices(int n, Real p0, Real drift, Real vol,
                                  std::uint64_t seed) {
  require(n > 0, "gen_gbm_prices: n must be positive");
  require(p0 > 0.0, "gen_gbm_prices: p0 must be positive");
  require(vol >= 0.0, "gen_gbm_prices: vol must be nonnegative");
  std::mt19937_64 gen(mix_seed(seed, 0));
  std::normal_distribution<Real> z(0.0, 1.0);
  PriceSeries ps;
  ps.p.resize(n);
  ps.p[0] = p0;
  for (int t = 1; t < n; ++t)
    ps.p[t] = ps.p[t - 1] * std::exp(drift - 0.5 * vol * vol + vol * z(gen));
  ps.validate();
  return ps;
}

}  // namespace volrl
