#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "ccf/errors.hpp"
#include "ccf/numerics/rng.hpp"

namespace ccf::synthetic {

inline constexpr std::size_t kClasses = 3;

/// Parameters of the three-class linear model. Classes are 0-based here.
class SyntheticParams {
 public:
  SyntheticParams(double mu, double sigma, double lambda, double epsilon = 0.0, double beta = 0.0)
      : mu_(mu), sigma_(sigma), lambda_(lambda), epsilon_(epsilon), beta_(beta) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw InvalidParameter("mu must be > 0");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidParameter("sigma must be > 0");
    if (!(sigma < std::sqrt(std::numbers::pi) * mu)) {
      throw InvalidParameter("sigma must be < sqrt(pi) * mu");
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidParameter("lambda must be > 0");
    if (!(epsilon >= 0.0 && epsilon < mu / 2.0)) throw InvalidParameter("epsilon must be in [0, mu/2)");
    if (!(beta >= 0.0 && beta < 1.0 / 3.0)) throw InvalidParameter("beta must be in [0, 1/3)");
  }

  /// mu = 1, sigma = sqrt(pi)/2 (so sigma/sqrt(pi) = 0.5), lambda = 0.1.
  static SyntheticParams verification_default(double epsilon = 0.0, double beta = 0.0) {
    return {1.0, std::sqrt(std::numbers::pi) / 2.0, 0.1, epsilon, beta};
  }

  double mu() const noexcept { return mu_; }
  double sigma() const noexcept { return sigma_; }
  double lambda() const noexcept { return lambda_; }
  double epsilon() const noexcept { return epsilon_; }
  double beta() const noexcept { return beta_; }
  /// sigma / sqrt(pi), the expected gap between a N(mu, sigma^2) pair and its minimum.
  double spread() const noexcept { return sigma_ / std::sqrt(std::numbers::pi); }

  SyntheticParams with_epsilon(double e) const { return {mu_, sigma_, lambda_, e, beta_}; }
  SyntheticParams with_beta(double b) const { return {mu_, sigma_, lambda_, epsilon_, b}; }

 private:
  double mu_, sigma_, lambda_, epsilon_, beta_;
};

struct LinearHypothesis {
  double w1 = 0.0;  // class-specific weight
  double w2 = 0.0;  // cross-class weight

  LinearHypothesis() = default;
  LinearHypothesis(double specific, double cross) : w1(specific), w2(cross) {
    if (!(w1 >= 0.0) || !(w2 >= 0.0)) throw InvalidParameter("hypothesis weights must be >= 0");
  }
  double squared_norm() const noexcept { return w1 * w1 + w2 * w2; }
};

/// Six coordinates: class-specific x_E[0..2], then cross-class x_C[0..2].
/// For label i, x_E[j] = 0 for j != i and x_C[i] = 0.
struct SyntheticSample {
  std::array<double, kClasses> specific{};
  std::array<double, kClasses> cross{};
  std::size_t label = 0;

  std::array<double, 6> flat() const {
    return {specific[0], specific[1], specific[2], cross[0], cross[1], cross[2]};
  }
};

using Perturbation = std::array<double, 6>;  // (delta_E | delta_C)

inline void require_class(std::size_t cls) {
  if (cls >= kClasses) throw InvalidParameter("class index must be 0, 1 or 2");
}

inline SyntheticSample draw_sample(const SyntheticParams& p, std::size_t cls, RngStream& rng) {
  require_class(cls);
  SyntheticSample s;
  s.label = cls;
  s.specific[cls] = rng.normal(p.mu(), p.sigma());
  for (std::size_t j = 0; j < kClasses; ++j) {
    if (j != cls) s.cross[j] = rng.normal(p.mu(), p.sigma());
  }
  return s;
}

inline std::vector<SyntheticSample> sample(const SyntheticParams& p, std::size_t cls, std::size_t n,
                                           RngStream& rng) {
  require_class(cls);
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(draw_sample(p, cls, rng));
  return out;
}

/// Logit of class j: w1 * x_E[j] + w2 * (sum of x_C[k] for k != j).
inline std::array<double, kClasses> logits(const LinearHypothesis& w, const std::array<double, 6>& x) {
  const double cross_total = x[3] + x[4] + x[5];
  std::array<double, kClasses> f{};
  for (std::size_t j = 0; j < kClasses; ++j) f[j] = w.w1 * x[j] + w.w2 * (cross_total - x[3 + j]);
  return f;
}

inline std::array<double, 6> perturbed(const SyntheticSample& s, const Perturbation& d) {
  auto x = s.flat();
  for (std::size_t k = 0; k < 6; ++k) x[k] += d[k];
  return x;
}

/// Maximizer of the inner margin over the linf ball for a sample of class
/// `cls`: lower the own class-specific coordinate and the cross-class
/// coordinates the class uses, raise everything else. Valid for w1, w2 >= 0.
inline Perturbation worst_case_delta(const SyntheticParams& p, std::size_t cls = 0) {
  require_class(cls);
  const double e = p.epsilon();
  Perturbation d{};
  for (std::size_t j = 0; j < kClasses; ++j) {
    d[j] = j == cls ? -e : e;
    d[3 + j] = j == cls ? e : -e;
  }
  return d;
}

/// max_{j != y} f_j(x) - f_y(x).
inline double margin(const LinearHypothesis& w, const std::array<double, 6>& x, std::size_t label) {
  const auto f = logits(w, x);
  double rival = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < kClasses; ++j) {
    if (j != label) rival = std::max(rival, f[j]);
  }
  return rival - f[label];
}

/// Inner margin loss at perturbation d.
inline double inner_loss(const LinearHypothesis& w, const SyntheticSample& s, const Perturbation& d) {
  return margin(w, perturbed(s, d), s.label);
}

/// Label-smoothed per-sample objective at perturbation d:
/// (1 - beta) * margin - (beta / 2) * sum of rival logits.
inline double ls_inner_loss(const LinearHypothesis& w, const SyntheticSample& s, const Perturbation& d,
                            double beta) {
  const auto x = perturbed(s, d);
  const auto f = logits(w, x);
  double rivals = 0.0;
  for (std::size_t j = 0; j < kClasses; ++j) {
    if (j != s.label) rivals += f[j];
  }
  return (1.0 - beta) * margin(w, x, s.label) - 0.5 * beta * rivals;
}

}  // namespace ccf::synthetic
