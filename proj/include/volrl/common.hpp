#pragma once
// Shared aliases, error types, deterministic seeding, compensated summation.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace volrl {

inline constexpr const char* kArtifactVersion = "0.1.0";

using Real = double;
using Vec  = Eigen::VectorXd;
using Mat  = Eigen::MatrixXd;
using IVec = Eigen::VectorXi;

// Thrown on contract violations (bad arguments, malformed inputs). CLI exit 1.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when an iterative routine fails to converge or produces
// non-finite values. CLI exit 2.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// splitmix64: decorrelates derived stream seeds from a master seed.
// Used so per-trajectory streams are independent of collection order
// and thread count.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Inverse-cdf categorical draw. Every categorical sample in the library
// goes through this one implementation so a seed pins the same path
// everywhere.
inline int sample_categorical(const Vec& probs, std::mt19937_64& gen) {
  std::uniform_real_distribution<Real> unif(0.0, 1.0);
  Real u = unif(gen);
  Real acc = 0.0;
  int last = 0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;  // u fell into accumulated rounding slack
}

// Kahan-Babuska compensated accumulator. Reductions over trajectories run
// in fixed index order with this accumulator so results do not depend on
// chunking.
class KahanSum {
 public:
  void add(Real x) {
    Real t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  Real value() const { return sum_ + comp_; }

 private:
  Real sum_ = 0.0;
  Real comp_ = 0.0;
};

}  // namespace volrl
