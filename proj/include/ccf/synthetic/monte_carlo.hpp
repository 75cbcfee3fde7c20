#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "ccf/errors.hpp"
#include "ccf/numerics/rng.hpp"
#include "ccf/synthetic/model.hpp"
#include "ccf/synthetic/theory.hpp"

namespace ccf::synthetic {

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;

  bool within(double target, double standard_errors = 3.0) const {
    return std::abs(mean - target) <= standard_errors * std_error;
  }
};

namespace detail {

inline constexpr std::size_t kMcChunk = std::size_t{1} << 16;

// Welford accumulator; chunks are merged in index order so the result does
// not depend on how chunks are scheduled.
struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  void merge(const Moments& o) {
    if (o.n == 0) return;
    const double total = static_cast<double>(n + o.n);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.n) / total;
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / total;
    n += o.n;
  }
  McEstimate estimate() const {
    const double var = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
    return {mean, n > 0 ? std::sqrt(var / static_cast<double>(n)) : 0.0, n};
  }
};

// Draws `n` values f(rng, i) with one RNG stream per chunk of indices.
template <class F>
McEstimate chunked_estimate(std::size_t n, const RngStream& rng, F&& f) {
  if (n == 0) throw InvalidParameter("Monte Carlo estimate needs at least one sample");
  Moments total;
  for (std::size_t start = 0, chunk = 0; start < n; start += kMcChunk, ++chunk) {
    RngStream local = rng.split(chunk);
    Moments m;
    const std::size_t end = std::min(n, start + kMcChunk);
    for (std::size_t i = start; i < end; ++i) m.add(f(local, i));
    total.merge(m);
  }
  return total.estimate();
}

}  // namespace detail

/// Sample average of the robust margin loss under the analytic worst-case
/// perturbation, plus the regularizer. Classes cycle 0, 1, 2.
inline McEstimate robust_loss_mc(const SyntheticParams& p, const LinearHypothesis& w, std::size_t n,
                                 const RngStream& rng) {
  std::array<Perturbation, kClasses> deltas{};
  for (std::size_t c = 0; c < kClasses; ++c) deltas[c] = worst_case_delta(p, c);
  auto est = detail::chunked_estimate(n, rng, [&](RngStream& r, std::size_t i) {
    const auto s = draw_sample(p, i % kClasses, r);
    return inner_loss(w, s, deltas[s.label]);
  });
  est.mean += 0.5 * p.lambda() * w.squared_norm();
  return est;
}

/// Label-smoothed objective: (1-beta) margin - (beta/2) sum of rival logits,
/// both at the analytic worst-case perturbation, plus the regularizer.
inline McEstimate ls_loss_mc(const SyntheticParams& p, const LinearHypothesis& w, std::size_t n,
                             const RngStream& rng) {
  std::array<Perturbation, kClasses> deltas{};
  for (std::size_t c = 0; c < kClasses; ++c) deltas[c] = worst_case_delta(p, c);
  auto est = detail::chunked_estimate(n, rng, [&](RngStream& r, std::size_t i) {
    const auto s = draw_sample(p, i % kClasses, r);
    return ls_inner_loss(w, s, deltas[s.label], p.beta());
  });
  est.mean += 0.5 * p.lambda() * w.squared_norm();
  return est;
}

/// Fraction of class-0 samples whose class-0 logit beats class 1 after the
/// pairwise worst-case shift (-eps on x_E[0] and x_C[1], +eps on x_E[1] and x_C[0]).
inline McEstimate pair_margin_prob_mc(const SyntheticParams& p, const LinearHypothesis& w, std::size_t n,
                                      const RngStream& rng) {
  if (!(w.w1 > 0.0)) throw InvalidParameter("pair_margin_prob requires w1 > 0");
  const double e = p.epsilon();
  const Perturbation d{-e, e, 0.0, e, -e, 0.0};
  return detail::chunked_estimate(n, rng, [&](RngStream& r, std::size_t) {
    const auto f = logits(w, perturbed(draw_sample(p, 0, r), d));
    return f[0] > f[1] ? 1.0 : 0.0;
  });
}

/// E[max(X, Y)] for independent standard normals.
inline McEstimate expected_max_normal_mc(std::size_t n, const RngStream& rng) {
  return detail::chunked_estimate(n, rng, [](RngStream& r, std::size_t) {
    const double x = r.normal();
    const double y = r.normal();
    return std::max(x, y);
  });
}

/// Largest inner margin loss over `tries` perturbations drawn uniformly from
/// the linf ball of radius eps.
inline double best_random_delta_loss(const LinearHypothesis& w, const SyntheticSample& s, double eps,
                                     std::size_t tries, RngStream& rng) {
  double best = -std::numeric_limits<double>::infinity();
  Perturbation d{};
  for (std::size_t t = 0; t < tries; ++t) {
    for (double& v : d) v = rng.uniform(-eps, eps);
    best = std::max(best, inner_loss(w, s, d));
  }
  return best;
}

/// Fixed draw of samples (classes cycling 0, 1, 2) reused across objective
/// evaluations, so the sample-average objective is a deterministic function of w.
class FrozenSampleSet {
 public:
  FrozenSampleSet(const SyntheticParams& p, std::size_t n, const RngStream& rng)
      : mu_(p.mu()), sigma_(p.sigma()) {
    if (n == 0) throw InvalidParameter("frozen sample set must be nonempty");
    samples_.reserve(n);
    for (std::size_t start = 0, chunk = 0; start < n; start += detail::kMcChunk, ++chunk) {
      RngStream local = rng.split(chunk);
      const std::size_t end = std::min(n, start + detail::kMcChunk);
      for (std::size_t i = start; i < end; ++i) samples_.push_back(draw_sample(p, i % kClasses, local));
    }
  }

  const std::vector<SyntheticSample>& samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }

  void require_compatible(const SyntheticParams& p) const {
    if (p.mu() != mu_ || p.sigma() != sigma_) {
      throw InvalidParameter("frozen samples were drawn with a different mu or sigma");
    }
  }

 private:
  double mu_, sigma_;
  std::vector<SyntheticSample> samples_;
};

enum class Objective { robust, label_smoothed };

struct ProjectedGdOptions {
  std::optional<double> step;  // defaults to 0.01 / lambda
  std::size_t iterations = 10000;
  LinearHypothesis start{};
};

struct ProjectedGdResult {
  LinearHypothesis weights;
  double objective = 0.0;
};

namespace detail {

// Per-sample linear pieces of the objective after the worst-case shift: the
// margin against the two rivals is a0 w1 + b0 w2 and a1 w1 + b1 w2. Stored
// as the second rival's totals plus per-sample differences (a0 - a1, b0 - b1).
struct MarginPieces {
  std::vector<double> da, db;
  double a1_total = 0.0, b1_total = 0.0;
  double smooth_w1 = 0.0;  // mean of -(beta/2) sum of rival logits, per weight
  double smooth_w2 = 0.0;
  double margin_scale = 1.0;  // 1 - beta
  std::vector<double> a1, b1;  // kept for objective values

  std::size_t size() const noexcept { return da.size(); }
};

inline MarginPieces margin_pieces(const SyntheticParams& p, const FrozenSampleSet& set, Objective obj) {
  set.require_compatible(p);
  const double beta = obj == Objective::label_smoothed ? p.beta() : 0.0;
  MarginPieces out;
  out.margin_scale = 1.0 - beta;
  out.da.reserve(set.size());
  out.db.reserve(set.size());
  out.a1.reserve(set.size());
  out.b1.reserve(set.size());
  double s1 = 0.0, s2 = 0.0;
  for (const auto& s : set.samples()) {
    const auto x = perturbed(s, worst_case_delta(p, s.label));
    const double cross_total = x[3] + x[4] + x[5];
    std::array<double, 4> r{};
    std::size_t slot = 0;
    for (std::size_t j = 0; j < kClasses; ++j) {
      if (j == s.label) continue;
      r[slot++] = x[j] - x[s.label];
      r[slot++] = x[3 + s.label] - x[3 + j];
      s1 += x[j];
      s2 += cross_total - x[3 + j];
    }
    out.da.push_back(r[0] - r[2]);
    out.db.push_back(r[1] - r[3]);
    out.a1.push_back(r[2]);
    out.b1.push_back(r[3]);
    out.a1_total += r[2];
    out.b1_total += r[3];
  }
  const double n = static_cast<double>(set.size());
  out.smooth_w1 = -0.5 * beta * s1 / n;
  out.smooth_w2 = -0.5 * beta * s2 / n;
  return out;
}

// (Right-)gradient of the sample-average objective. At a tie the rival with
// the larger w2 coefficient is taken, which is the active piece for any small
// increase of w2.
inline void objective_gradient(const MarginPieces& m, double lambda, const LinearHypothesis& w, double& g1,
                               double& g2) {
  constexpr std::size_t kLanes = 4;
  double a_sum[kLanes] = {}, b_sum[kLanes] = {};
  const std::size_t n = m.size();
  const double* da = m.da.data();
  const double* db = m.db.data();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double x = da[i + l], y = db[i + l];
      const double gap = x * w.w1 + y * w.w2;
      const double f = static_cast<double>((gap > 0.0) | ((gap == 0.0) & (y >= 0.0)));
      a_sum[l] += f * x;
      b_sum[l] += f * y;
    }
  }
  for (; i < n; ++i) {
    const double x = da[i], y = db[i];
    const double gap = x * w.w1 + y * w.w2;
    const double f = static_cast<double>((gap > 0.0) | ((gap == 0.0) & (y >= 0.0)));
    a_sum[0] += f * x;
    b_sum[0] += f * y;
  }
  const double count = static_cast<double>(n);
  const double a = m.a1_total + ((a_sum[0] + a_sum[1]) + (a_sum[2] + a_sum[3]));
  const double b = m.b1_total + ((b_sum[0] + b_sum[1]) + (b_sum[2] + b_sum[3]));
  g1 = m.margin_scale * a / count + m.smooth_w1 + lambda * w.w1;
  g2 = m.margin_scale * b / count + m.smooth_w2 + lambda * w.w2;
}

inline double objective_value(const MarginPieces& m, double lambda, const LinearHypothesis& w) {
  double value = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double second = m.a1[i] * w.w1 + m.b1[i] * w.w2;
    value += second + std::max(0.0, m.da[i] * w.w1 + m.db[i] * w.w2);
  }
  return m.margin_scale * value / static_cast<double>(m.size()) + m.smooth_w1 * w.w1 + m.smooth_w2 * w.w2 +
         0.5 * lambda * w.squared_norm();
}

}  // namespace detail

/// Sample-average objective on a frozen set, for the robust or label-smoothed loss.
inline double frozen_objective(const SyntheticParams& p, const FrozenSampleSet& set, Objective obj,
                               const LinearHypothesis& w) {
  return detail::objective_value(detail::margin_pieces(p, set, obj), p.lambda(), w);
}

/// Projected gradient descent, w <- max(w - step * grad, 0), on the
/// sample-average objective over a frozen sample set.
inline ProjectedGdResult projected_gd(const SyntheticParams& p, const FrozenSampleSet& set, Objective obj,
                                      const ProjectedGdOptions& opt = {}) {
  const double step = opt.step.value_or(0.01 / p.lambda());
  if (!(step > 0.0)) throw InvalidParameter("projected_gd step must be > 0");
  const auto pieces = detail::margin_pieces(p, set, obj);
  LinearHypothesis w = opt.start;
  double g1 = 0.0, g2 = 0.0;
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    detail::objective_gradient(pieces, p.lambda(), w, g1, g2);
    w.w1 = std::max(0.0, w.w1 - step * g1);
    w.w2 = std::max(0.0, w.w2 - step * g2);
  }
  ProjectedGdResult out;
  out.weights = w;
  out.objective = detail::objective_value(pieces, p.lambda(), w);
  return out;
}

/// Replicated model: G independent feature groups, each a copy of the
/// six-coordinate model with its own parameters and its own (w1, w2). The
/// extended loss is the sum of the per-group losses, so each group's optimum
/// is the single-group closed form. `joint_oracle` is projected GD over all
/// 2G weights at once on a frozen draw where every sample carries all groups.
struct ReplicationCheck {
  std::vector<LinearHypothesis> closed_form;
  std::vector<LinearHypothesis> joint_oracle;
};

inline ReplicationCheck replicate_groups(const std::vector<SyntheticParams>& groups, std::size_t n,
                                         const RngStream& rng, const ProjectedGdOptions& opt = {}) {
  if (groups.empty()) throw InvalidParameter("replicate_groups needs at least one group");
  const double lambda = groups.front().lambda();
  for (const auto& g : groups) {
    if (g.lambda() != lambda) throw InvalidParameter("replicated groups must share lambda");
  }
  const std::size_t G = groups.size();
  std::vector<detail::MarginPieces> pieces;
  pieces.reserve(G);
  for (std::size_t k = 0; k < G; ++k) {
    // Sample i has class i mod 3 in every group; group k draws from stream k.
    FrozenSampleSet set(groups[k], n, rng.split(k));
    pieces.push_back(detail::margin_pieces(groups[k], set, Objective::robust));
  }

  ReplicationCheck out;
  for (const auto& g : groups) out.closed_form.push_back(optimal_weights(g));
  const double step = opt.step.value_or(0.01 / lambda);
  std::vector<LinearHypothesis> w(G, opt.start);
  std::vector<double> g1(G), g2(G);
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    for (std::size_t k = 0; k < G; ++k) detail::objective_gradient(pieces[k], lambda, w[k], g1[k], g2[k]);
    for (std::size_t k = 0; k < G; ++k) {
      w[k].w1 = std::max(0.0, w[k].w1 - step * g1[k]);
      w[k].w2 = std::max(0.0, w[k].w2 - step * g2[k]);
    }
  }
  out.joint_oracle = std::move(w);
  return out;
}

inline ReplicationCheck replicate_groups(const SyntheticParams& p, std::size_t group_count, std::size_t n,
                                         const RngStream& rng, const ProjectedGdOptions& opt = {}) {
  if (group_count == 0) throw InvalidParameter("replicate_groups needs at least one group");
  return replicate_groups(std::vector<SyntheticParams>(group_count, p), n, rng, opt);
}

}  // namespace ccf::synthetic
