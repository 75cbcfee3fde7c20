#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ccf/errors.hpp"
#include "ccf/numerics/special.hpp"
#include "ccf/synthetic/model.hpp"

namespace ccf::synthetic {

/// Expected robust margin loss plus (lambda/2)|w|^2, exactly:
/// (2eps - mu) w1 + (2eps - mu + sigma/sqrt(pi)) w2 + (lambda/2)(w1^2 + w2^2).
inline double robust_loss_closed(const SyntheticParams& p, const LinearHypothesis& w) {
  const double e = p.epsilon();
  return (2.0 * e - p.mu()) * w.w1 + ((2.0 * e + p.spread()) - p.mu()) * w.w2 +
         0.5 * p.lambda() * w.squared_norm();
}

/// Minimizer of robust_loss_closed over w >= 0.
inline LinearHypothesis optimal_weights(const SyntheticParams& p) {
  const double e = p.epsilon();
  return {std::max(0.0, (p.mu() - 2.0 * e) / p.lambda()),
          std::max(0.0, (p.mu() - 2.0 * e - p.spread()) / p.lambda())};
}

/// Perturbation bound above which the optimal cross-class weight is zero.
inline double eps0(const SyntheticParams& p) { return 0.5 * (p.mu() - p.spread()); }

/// Label-smoothed counterpart of robust_loss_closed, with the linear terms
/// obtained by expanding (1-beta)[robust margin] - beta[eps w1 + mu w2]:
/// w1 coefficient -(1-beta) mu + (2 - 3 beta) eps,
/// w2 coefficient (1-beta)(2 eps + sigma/sqrt(pi)) - mu.
inline double ls_loss_closed(const SyntheticParams& p, const LinearHypothesis& w) {
  const double e = p.epsilon(), b = p.beta();
  // Grouped as (1-beta)(2eps - mu) - beta eps so beta = 0 reproduces
  // robust_loss_closed bit for bit.
  return ((1.0 - b) * (2.0 * e - p.mu()) - b * e) * w.w1 +
         ((1.0 - b) * (2.0 * e + p.spread()) - p.mu()) * w.w2 + 0.5 * p.lambda() * w.squared_norm();
}

inline LinearHypothesis ls_optimal_weights(const SyntheticParams& p) {
  const double e = p.epsilon(), b = p.beta();
  return {std::max(0.0, ((1.0 - b) * p.mu() - (2.0 - 3.0 * b) * e) / p.lambda()),
          std::max(0.0, (p.mu() - (1.0 - b) * (2.0 * e + p.spread())) / p.lambda())};
}

/// Label-smoothed threshold 0.5 (mu / (1-beta) - sigma/sqrt(pi)). May exceed
/// mu/2 in principle; see eps1_in_domain.
inline double eps1(const SyntheticParams& p) {
  return 0.5 * (p.mu() / (1.0 - p.beta()) - p.spread());
}

/// eps1 clamped to the admissible perturbation range (0, mu/2].
inline double eps1_in_domain(const SyntheticParams& p) { return std::min(eps1(p), 0.5 * p.mu()); }

enum class MarginVariance {
  exact,   // the class-specific difference has variance sigma^2
  doubled  // variance 2 sigma^2, as stated in the original derivation
};

/// Probability that a class-0 sample under the pairwise worst-case
/// perturbation scores class 0 above class 1:
/// Phi((w1 + w2)(mu - 2eps) / (s sqrt(w1^2 + w2^2))), s = sigma or sigma sqrt(2).
inline double pair_margin_prob(const SyntheticParams& p, const LinearHypothesis& w,
                               MarginVariance convention = MarginVariance::exact) {
  if (!(w.w1 > 0.0)) throw InvalidParameter("pair_margin_prob requires w1 > 0");
  const double s = convention == MarginVariance::exact ? p.sigma() : p.sigma() * std::numbers::sqrt2;
  const double z = (w.w1 + w.w2) * (p.mu() - 2.0 * p.epsilon()) / (s * std::sqrt(w.squared_norm()));
  return std_normal_cdf(z);
}

}  // namespace ccf::synthetic
