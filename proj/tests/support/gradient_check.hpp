#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ccf/model/backward.hpp"
#include "ccf/numerics/rng.hpp"

namespace ccf::testing {

struct GradientCheckResult {
  std::size_t coordinates = 0;
  std::size_t failures = 0;
  double worst_excess = 0.0;  // max over coordinates of |fd - g| - tolerance
  std::string first_failure;
};

/// Compares every parameter and input gradient coordinate of `backward`
/// against central differences of `loss_value` with step h. A coordinate
/// passes when |fd - g| <= max(rel * |g|, abs).
inline GradientCheckResult central_difference_check(const Classifier& model, const Tensor& x, const Targets& t,
                                                    const LossSpec& spec, double h = 1e-5, double rel = 1e-4,
                                                    double abs = 1e-6) {
  GradientCheckResult out;
  const GradientBundle g = backward(model, x, t, spec);
  auto check = [&](double analytic, double numeric, const std::string& where) {
    ++out.coordinates;
    const double tol = std::max(rel * std::abs(analytic), abs);
    const double excess = std::abs(numeric - analytic) - tol;
    out.worst_excess = std::max(out.worst_excess, excess);
    if (excess > 0.0 && out.failures++ == 0) {
      out.first_failure = where + ": analytic " + std::to_string(analytic) + " numeric " + std::to_string(numeric);
    }
  };

  Classifier probe = model;
  auto params = probe.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double v = p[i];
      p[i] = v + h;
      const double up = loss_value(probe, x, t, spec);
      p[i] = v - h;
      const double down = loss_value(probe, x, t, spec);
      p[i] = v;
      check(g.parameters[k][i], (up - down) / (2 * h), "param " + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  }
  Tensor xp = x;
  for (std::size_t i = 0; i < xp.size(); ++i) {
    const double v = xp[i];
    xp[i] = v + h;
    const double up = loss_value(model, xp, t, spec);
    xp[i] = v - h;
    const double down = loss_value(model, xp, t, spec);
    xp[i] = v;
    check(g.input[i], (up - down) / (2 * h), "input[" + std::to_string(i) + "]");
  }
  return out;
}

/// One random draw: an MLP with two hidden layers of width <= 16, a small
/// batch and labels; the loss cycles through cross-entropy, label smoothing
/// and distillation.
struct RandomGradientCase {
  Classifier model;
  Tensor x;
  Targets targets;
  LossSpec spec;
};

inline RandomGradientCase random_gradient_case(RngStream& rng, std::size_t index) {
  const std::size_t in = 2 + rng.uniform_index(6);
  const std::size_t h1 = 1 + rng.uniform_index(16), h2 = 1 + rng.uniform_index(16);
  const std::size_t K = 2 + rng.uniform_index(4);
  const std::size_t batch = 1 + rng.uniform_index(4);
  RandomGradientCase c{Classifier::mlp(in, {h1, h2}, K, rng, index % 2 == 1), Tensor({batch, in}), {}, {}};
  for (double& v : c.x.data()) v = rng.normal();
  std::vector<std::size_t> labels(batch);
  for (auto& y : labels) y = rng.uniform_index(K);
  c.targets = Targets::hard(labels);
  switch (index % 3) {
    case 0:
      c.spec = CrossEntropy{};
      break;
    case 1:
      c.spec = LabelSmoothing{rng.uniform(0.0, 0.5)};
      break;
    default: {
      Tensor teacher({batch, K});
      for (double& v : teacher.data()) v = rng.normal(0.0, 2.0);
      c.targets.teacher_logits = teacher;
      c.spec = Distillation{rng.uniform(0.5, 4.0), rng.uniform(0.0, 1.0),
                            index % 2 ? KlDirection::teacher_reference : KlDirection::student_reference};
    }
  }
  return c;
}

}  // namespace ccf::testing
