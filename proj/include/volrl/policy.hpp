#pragma once
// Differentiable linear policies: softmax over discrete actions and a
// fixed-variance Gaussian over a scalar action. Everything the update
// rules need is closed-form: score, observed information, KL, Fisher
// vector products, and the smoothness constants entering the safe
// step-size machinery.

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "volrl/common.hpp"
#include "volrl/numerics.hpp"

namespace volrl {

enum class PolicyKind { softmax_linear, gaussian_linear };

/** Bounds on the policy's log-likelihood derivatives, uniform over the
 *  states they were computed from:
 *    psi   >= E_a ||grad log pi||
 *    kappa >= E_a ||grad log pi||^2
 *    xi    >= E_a ||hess log pi||   (spectral norm)
 */
struct SmoothingConstants {
  Real psi = 0.0;
  Real kappa = 0.0;
  Real xi = 0.0;
};

class Policy {
 public:
  /** Softmax-linear policy on `action_count` discrete actions. When
   *  `bias` is set a constant 1 feature is appended internally. */
  static Policy softmax(int feature_dim, int action_count, bool bias = false) {
    require(feature_dim > 0 && action_count > 1,
            "policy: need feature_dim > 0 and at least 2 actions");
    Policy p;
    p.kind_ = PolicyKind::softmax_linear;
    p.feature_dim_ = feature_dim;
    p.action_count_ = action_count;
    p.bias_ = bias;
    p.theta_ = Vec::Zero(static_cast<Eigen::Index>(action_count) *
                         p.aug_dim());
    return p;
  }

  /** Gaussian-linear policy, scalar action, fixed standard deviation. */
  static Policy gaussian(int feature_dim, Real sigma, bool bias = false) {
    require(feature_dim > 0, "policy: feature_dim must be positive");
    require(sigma > 0.0, "policy: sigma must be positive");
    Policy p;
    p.kind_ = PolicyKind::gaussian_linear;
    p.feature_dim_ = feature_dim;
    p.action_count_ = 1;
    p.sigma_ = sigma;
    p.bias_ = bias;
    p.theta_ = Vec::Zero(p.aug_dim());
    return p;
  }

  PolicyKind kind() const { return kind_; }
  int feature_dim() const { return feature_dim_; }
  int action_count() const { return action_count_; }
  bool has_bias() const { return bias_; }
  Real sigma() const { return sigma_; }
  int param_dim() const { return static_cast<int>(theta_.size()); }
  const Vec& theta() const { return theta_; }
  void set_theta(const Vec& t) {
    require(t.size() == theta_.size(), "policy: parameter size mismatch");
    theta_ = t;
  }

  // Internal feature vector: input features plus the optional bias 1.
  Vec aug(const Vec& phi) const {
    require(phi.size() == feature_dim_, "policy: feature size mismatch");
    if (!bias_) return phi;
    Vec out(phi.size() + 1);
    out.head(phi.size()) = phi;
    out[phi.size()] = 1.0;
    return out;
  }

  /** Action distribution at phi (softmax only). */
  Vec action_probs(const Vec& phi) const {
    require_softmax();
    return probs_aug(aug(phi));
  }

  Real mean_action(const Vec& phi) const {
    require_gaussian();
    return theta_.dot(aug(phi));
  }

  int sample_discrete(const Vec& phi, std::mt19937_64& gen) const {
    return sample_categorical(action_probs(phi), gen);
  }

  Real sample_continuous(const Vec& phi, std::mt19937_64& gen) const {
    require_gaussian();
    std::normal_distribution<Real> z(0.0, 1.0);
    return mean_action(phi) + sigma_ * z(gen);
  }

  /** grad_theta log pi(a | phi). */
  Vec score(const Vec& phi, int action) const {
    require_softmax();
    require(action >= 0 && action < action_count_,
            "policy: action out of range");
    Vec x = aug(phi);
    Vec pi = probs_aug(x);
    const int d = aug_dim();
    Vec g(theta_.size());
    for (int i = 0; i < action_count_; ++i) {
      Real coef = ((i == action) ? 1.0 : 0.0) - pi[i];
      g.segment(static_cast<Eigen::Index>(i) * d, d) = coef * x;
    }
    return g;
  }

  Vec score(const Vec& phi, Real action) const {
    require_gaussian();
    Vec x = aug(phi);
    return ((action - theta_.dot(x)) / (sigma_ * sigma_)) * x;
  }

  /** Negated log-likelihood Hessian, -hess_theta log pi(a | phi).
   *  Both families are curved the same way for every action, so no
   *  action argument. Coincides with the Fisher matrix at phi. */
  Mat observed_information(const Vec& phi) const {
    Vec x = aug(phi);
    const int d = aug_dim();
    if (kind_ == PolicyKind::gaussian_linear)
      return (x * x.transpose()) / (sigma_ * sigma_);
    Vec pi = probs_aug(x);
    Mat cat = Mat(pi.asDiagonal()) - pi * pi.transpose();
    Mat out(theta_.size(), theta_.size());
    Mat outer = x * x.transpose();
    for (int i = 0; i < action_count_; ++i)
      for (int j = 0; j < action_count_; ++j)
        out.block(static_cast<Eigen::Index>(i) * d,
                  static_cast<Eigen::Index>(j) * d, d, d) =
            cat(i, j) * outer;
    return out;
  }

  /** KL(this(.|phi) || other(.|phi)). Policies must share kind, shape,
   *  and (Gaussian) sigma. */
  Real kl(const Policy& other, const Vec& phi) const {
    require(kind_ == other.kind_ && theta_.size() == other.theta_.size() &&
                bias_ == other.bias_,
            "policy kl: incompatible policies");
    if (kind_ == PolicyKind::gaussian_linear) {
      require(sigma_ == other.sigma_, "policy kl: sigma mismatch");
      Vec x = aug(phi);
      Real dmu = theta_.dot(x) - other.theta_.dot(x);
      return dmu * dmu / (2.0 * sigma_ * sigma_);
    }
    Vec x = aug(phi);
    Vec p = probs_aug(x);
    Vec q = other.probs_aug(x);
    Real kl = 0.0;
    for (int i = 0; i < action_count_; ++i)
      kl += p[i] * (std::log(p[i]) - std::log(q[i]));
    return std::max(kl, 0.0);  // clip -1e-17 rounding
  }

  Real kl_max(const Policy& other, const std::vector<Vec>& states) const {
    require(!states.empty(), "policy kl_max: empty state set");
    Real m = 0.0;
    for (const Vec& phi : states) m = std::max(m, kl(other, phi));
    return m;
  }

  /** Mean Fisher-information product over `states` plus damping:
   *  (1/n) sum_s F(s) v + damping * v, computed matrix-free. */
  Vec fisher_vector_product(const std::vector<Vec>& states, const Vec& v,
                            Real damping = 0.0) const {
    require(!states.empty(), "policy fvp: empty state set");
    require(v.size() == theta_.size(), "policy fvp: vector size mismatch");
    require(damping >= 0.0, "policy fvp: damping must be nonnegative");
    Vec acc = Vec::Zero(v.size());
    const int d = aug_dim();
    for (const Vec& phi : states) {
      Vec x = aug(phi);
      if (kind_ == PolicyKind::gaussian_linear) {
        acc += (x.dot(v) / (sigma_ * sigma_)) * x;
        continue;
      }
      Vec pi = probs_aug(x);
      // u_i = <v_i, x>; F v blocks are ((pi o u) - pi <pi, u>) x^T.
      Vec u(action_count_);
      for (int i = 0; i < action_count_; ++i)
        u[i] = v.segment(static_cast<Eigen::Index>(i) * d, d).dot(x);
      Real mean_u = pi.dot(u);
      for (int i = 0; i < action_count_; ++i)
        acc.segment(static_cast<Eigen::Index>(i) * d, d) +=
            pi[i] * (u[i] - mean_u) * x;
    }
    return acc / static_cast<Real>(states.size()) + damping * v;
  }

  /** Smoothness constants as maxima of exact per-action expectations over
   *  the given states (no sampling), scaled by `safety_factor`. Valid at
   *  the current parameters; see `uniform_smoothing_constants` for bounds
   *  valid at every parameter vector. */
  SmoothingConstants smoothing_constants(const std::vector<Vec>& states,
                                         Real safety_factor = 1.0) const {
    require(!states.empty(), "smoothing_constants: empty state set");
    require(safety_factor >= 1.0,
            "smoothing_constants: safety factor below 1");
    SmoothingConstants c;
    for (const Vec& phi : states) {
      Vec x = aug(phi);
      Real xn2 = x.squaredNorm();
      if (kind_ == PolicyKind::gaussian_linear) {
        Real s2 = sigma_ * sigma_;
        c.psi = std::max(c.psi, std::sqrt(xn2) * std::sqrt(2.0 / M_PI) /
                                    sigma_);
        c.kappa = std::max(c.kappa, xn2 / s2);
        c.xi = std::max(c.xi, xn2 / s2);
        continue;
      }
      Vec pi = probs_aug(x);
      Real sum_sq = pi.squaredNorm();
      Real e_norm = 0.0;
      for (int a = 0; a < action_count_; ++a)
        e_norm += pi[a] * std::sqrt(xn2 * (1.0 - 2.0 * pi[a] + sum_sq));
      Real e_norm2 = xn2 * (1.0 - sum_sq);
      Mat cat = Mat(pi.asDiagonal()) - pi * pi.transpose();
      Real hess_norm = spectral_norm(cat) * xn2;
      c.psi = std::max(c.psi, e_norm);
      c.kappa = std::max(c.kappa, e_norm2);
      c.xi = std::max(c.xi, hess_norm);
    }
    c.psi *= safety_factor;
    c.kappa *= safety_factor;
    c.xi *= safety_factor;
    return c;
  }

  /** Parameter-free smoothness constants from a feature-norm bound,
   *  valid for every theta. Used where a guarantee must hold along a
   *  whole update segment, not just at the current iterate. */
  SmoothingConstants uniform_smoothing_constants(
      Real feature_norm_bound) const {
    require(feature_norm_bound > 0.0,
            "uniform_smoothing_constants: bound must be positive");
    Real b = feature_norm_bound;
    if (bias_) b = std::sqrt(b * b + 1.0);
    Real b2 = b * b;
    SmoothingConstants c;
    if (kind_ == PolicyKind::gaussian_linear) {
      c.psi = b * std::sqrt(2.0 / M_PI) / sigma_;
      c.kappa = b2 / (sigma_ * sigma_);
      c.xi = b2 / (sigma_ * sigma_);
      return c;
    }
    // Softmax: (1 - 2 pi_a + sum pi^2) <= 2 and the categorical
    // covariance has spectral norm <= 1/2.
    c.psi = std::sqrt(2.0) * b;
    c.kappa = 2.0 * b2;
    c.xi = 0.5 * b2;
    return c;
  }

  /** Writes a flat-text checkpoint: kind, dimensions, sigma, then one
   *  full-precision parameter per line. */
  void save(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "policy save: cannot open " + path);
    out << "volrl-policy 1\n";
    out << "kind "
        << (kind_ == PolicyKind::softmax_linear ? "softmax_linear"
                                                : "gaussian_linear")
        << "\n";
    out << "feature_dim " << feature_dim_ << "\n";
    out << "action_count " << action_count_ << "\n";
    out << "bias " << (bias_ ? 1 : 0) << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", sigma_);
    out << "sigma " << buf << "\n";
    out << "theta " << theta_.size() << "\n";
    for (Eigen::Index i = 0; i < theta_.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", theta_[i]);
      out << buf << "\n";
    }
    require(out.good(), "policy save: write failed for " + path);
  }

  static Policy load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "policy load: cannot open " + path);
    auto next = [&](const std::string& key) {
      std::string k;
      in >> k;
      require(in.good() && k == key,
              "policy load: malformed checkpoint, expected " + key);
    };
    std::string magic, version;
    in >> magic >> version;
    require(magic == "volrl-policy" && version == "1",
            "policy load: unrecognized checkpoint header");
    next("kind");
    std::string kind;
    in >> kind;
    int fd, ac, bias;
    Real sigma;
    next("feature_dim");
    in >> fd;
    next("action_count");
    in >> ac;
    next("bias");
    in >> bias;
    next("sigma");
    in >> sigma;
    next("theta");
    Eigen::Index m;
    in >> m;
    require(in.good(), "policy load: malformed checkpoint body");
    Policy p;
    if (kind == "softmax_linear") {
      p = Policy::softmax(fd, ac, bias != 0);
    } else if (kind == "gaussian_linear") {
      p = Policy::gaussian(fd, sigma, bias != 0);
    } else {
      throw ValidationError("policy load: unknown kind " + kind);
    }
    require(m == p.theta_.size(), "policy load: parameter count mismatch");
    for (Eigen::Index i = 0; i < m; ++i) {
      in >> p.theta_[i];
      require(!in.fail(), "policy load: bad parameter value");
    }
    return p;
  }

 private:
  Policy() = default;

  int aug_dim() const { return feature_dim_ + (bias_ ? 1 : 0); }

  void require_softmax() const {
    require(kind_ == PolicyKind::softmax_linear,
            "policy: operation requires a softmax policy");
  }
  void require_gaussian() const {
    require(kind_ == PolicyKind::gaussian_linear,
            "policy: operation requires a gaussian policy");
  }

  Vec probs_aug(const Vec& x) const {
    const int d = aug_dim();
    Vec logits(action_count_);
    for (int i = 0; i < action_count_; ++i)
      logits[i] = theta_.segment(static_cast<Eigen::Index>(i) * d, d).dot(x);
    Real mx = logits.maxCoeff();
    Vec e = (logits.array() - mx).exp();
    return e / e.sum();
  }

  PolicyKind kind_ = PolicyKind::softmax_linear;
  int feature_dim_ = 0;
  int action_count_ = 0;
  Real sigma_ = 0.0;
  bool bias_ = false;
  Vec theta_;
};

}  // namespace volrl
