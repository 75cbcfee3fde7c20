#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccf/errors.hpp"
#include "ccf/model/backward.hpp"
#include "ccf/model/classifier.hpp"
#include "ccf/numerics/rng.hpp"
#include "ccf/numerics/tensor.hpp"

namespace ccf {

enum class Norm { linf, l2 };

inline std::string to_string(Norm n) { return n == Norm::linf ? "linf" : "l2"; }

inline Norm parse_norm(const std::string& s) {
  if (s == "linf") return Norm::linf;
  if (s == "l2") return Norm::l2;
  throw InvalidParameter("unknown norm '" + s + "' (expected linf or l2)");
}

/// Perturbation set B(x, epsilon) and the ascent schedule used to search it.
struct AttackConfig {
  Norm norm = Norm::linf;
  double epsilon = 0.0;
  double step_size = 1.0;
  int steps = 10;
  bool random_start = false;
  std::optional<std::pair<double, double>> input_bounds;

  void validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw InvalidParameter("attack epsilon must be >= 0");
    if (!(step_size > 0.0)) throw InvalidParameter("attack step size must be > 0");
    if (steps < 1) throw InvalidParameter("attack steps must be >= 1");
    if (input_bounds && !(input_bounds->first <= input_bounds->second)) {
      throw InvalidParameter("attack input bounds must satisfy lo <= hi");
    }
  }

  /// 10 steps, alpha = eps/4 (linf) or eps/8 (l2), no random start.
  static AttackConfig pgd_default(Norm norm, double epsilon) {
    AttackConfig c;
    c.norm = norm;
    c.epsilon = epsilon;
    c.steps = 10;
    c.step_size = epsilon > 0.0 ? (norm == Norm::linf ? epsilon / 4.0 : epsilon / 8.0) : 1.0;
    c.random_start = false;
    return c;
  }

  /// Single step of size eps from a uniform random start.
  static AttackConfig fast_default(Norm norm, double epsilon) {
    AttackConfig c;
    c.norm = norm;
    c.epsilon = epsilon;
    c.steps = 1;
    c.step_size = epsilon > 0.0 ? epsilon : 1.0;
    c.random_start = true;
    return c;
  }

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

namespace detail {

inline Tensor as_rows(const Tensor& x) { return x.rank() == 1 ? x.reshaped({1, x.size()}) : x; }

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// Projects each row of x onto the epsilon-ball around the matching row of
/// x0, then clamps into the input box if one is configured.
inline Tensor project(const Tensor& x0, const Tensor& x, const AttackConfig& cfg) {
  x0.require_same_shape(x);
  Tensor out = x;
  const Tensor base = detail::as_rows(x0);
  const std::size_t rows = base.rows(), cols = base.cols();
  const double eps = cfg.epsilon;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto b = base.row(r);
    double* o = out.data().data() + r * cols;
    if (cfg.norm == Norm::linf) {
      for (std::size_t i = 0; i < cols; ++i) o[i] = std::clamp(o[i], b[i] - eps, b[i] + eps);
    } else {
      double n2 = 0.0;
      for (std::size_t i = 0; i < cols; ++i) n2 += (o[i] - b[i]) * (o[i] - b[i]);
      const double n = std::sqrt(n2);
      if (n > eps) {
        const double s = n > 0.0 ? eps / n : 0.0;
        for (std::size_t i = 0; i < cols; ++i) o[i] = b[i] + (o[i] - b[i]) * s;
      }
    }
    if (cfg.input_bounds) {
      for (std::size_t i = 0; i < cols; ++i) {
        o[i] = std::clamp(o[i], cfg.input_bounds->first, cfg.input_bounds->second);
      }
    }
  }
  return out;
}

/// Gradient of the batch cross-entropy with respect to the input rows.
inline Tensor input_gradient(const Classifier& model, const Tensor& x,
                             std::span<const std::size_t> labels) {
  Targets t = Targets::hard(std::vector<std::size_t>(labels.begin(), labels.end()));
  return backward(model, x, t, CrossEntropy{}, GradientScope::input_only).input;
}

/// Untargeted projected gradient ascent on cross-entropy (Madry et al.).
///
/// linf steps move by step_size * sign(grad); l2 steps move by step_size
/// along grad / |grad|_2 per row. A zero gradient leaves the row in place for
/// that step. With random_start the search starts from a uniform draw in the
/// ball (per row), consuming the rng; otherwise the rng is untouched.
inline Tensor pgd(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels,
                  const AttackConfig& cfg, RngStream& rng) {
  cfg.validate();
  const Tensor x0 = detail::as_rows(x);
  if (labels.size() != x0.rows()) throw ShapeError("pgd: label count does not match batch");
  if (cfg.epsilon == 0.0) return project(x, x, cfg);

  const std::size_t rows = x0.rows(), cols = x0.cols();
  Tensor adv = x0;
  if (cfg.random_start) {
    for (std::size_t r = 0; r < rows; ++r) {
      auto a = adv.row(r);
      if (cfg.norm == Norm::linf) {
        for (double& v : a) v += rng.uniform(-cfg.epsilon, cfg.epsilon);
      } else {
        // Uniform in the l2 ball: Gaussian direction, radius eps * U^(1/d).
        std::vector<double> dir(cols);
        double n2 = 0.0;
        for (double& v : dir) {
          v = rng.normal();
          n2 += v * v;
        }
        const double radius =
            cfg.epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(cols));
        const double s = n2 > 0.0 ? radius / std::sqrt(n2) : 0.0;
        for (std::size_t i = 0; i < cols; ++i) a[i] += dir[i] * s;
      }
    }
    adv = project(x0, adv, cfg);
  }

  for (int step = 0; step < cfg.steps; ++step) {
    const Tensor g = input_gradient(model, adv, labels);
    for (std::size_t r = 0; r < rows; ++r) {
      auto a = adv.row(r);
      const auto gr = g.row(r);
      if (cfg.norm == Norm::linf) {
        for (std::size_t i = 0; i < cols; ++i) a[i] += cfg.step_size * detail::sign(gr[i]);
      } else {
        const double n = norm2(gr);
        if (n == 0.0) continue;
        for (std::size_t i = 0; i < cols; ++i) a[i] += cfg.step_size * gr[i] / n;
      }
    }
    adv = project(x0, adv, cfg);
  }
  return x.rank() == 1 ? adv.reshaped({x.size()}) : adv;
}

/// Single-step attack: pgd with one step (cfg.steps is ignored).
inline Tensor fgsm(const Classifier& model, const Tensor& x, std::span<const std::size_t> labels,
                   const AttackConfig& cfg, RngStream& rng) {
  AttackConfig one = cfg;
  one.steps = 1;
  return pgd(model, x, labels, one, rng);
}

}  // namespace ccf
