#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ccf/errors.hpp"
#include "ccf/numerics/tensor.hpp"

namespace ccf {

/// Which distribution is the reference ("first argument") of the KL term.
enum class KlDirection {
  teacher_reference,  // KL(teacher || student), the usual distillation form
  student_reference,  // KL(student || teacher), literal argument order of the AT+KD loss
};

struct CrossEntropy {};

/// Cross-entropy against (1 - beta) on the true class and beta / (K - 1) on each other class.
struct LabelSmoothing {
  double beta = 0.0;
};

/// (1 - mix) * CE(student, y) + mix * T^2 * KL(softmax(teacher / T), softmax(student / T)).
struct Distillation {
  double temperature = 1.0;
  double mix = 0.5;
  KlDirection direction = KlDirection::teacher_reference;
};

using LossSpec = std::variant<CrossEntropy, LabelSmoothing, Distillation>;

/// Supervision for one batch. `labels` is always required except for plain
/// cross-entropy against `soft` probability rows.
struct Targets {
  std::vector<std::size_t> labels;
  std::optional<Tensor> soft;
  std::optional<Tensor> teacher_logits;

  static Targets hard(std::vector<std::size_t> labels) { return Targets{std::move(labels), {}, {}}; }
};

inline void validate(const LossSpec& spec) {
  if (const auto* ls = std::get_if<LabelSmoothing>(&spec)) {
    if (!(ls->beta >= 0.0 && ls->beta < 1.0)) throw InvalidParameter("label smoothing beta must be in [0, 1)");
  }
  if (const auto* kd = std::get_if<Distillation>(&spec)) {
    if (!(kd->temperature > 0.0)) throw InvalidParameter("distillation temperature must be > 0");
    if (!(kd->mix >= 0.0 && kd->mix <= 1.0)) throw InvalidParameter("distillation mix must be in [0, 1]");
  }
}

namespace detail {

inline void log_softmax(std::span<const double> z, double scale, std::span<double> out) {
  double m = -INFINITY;
  for (double v : z) m = std::max(m, v * scale);
  double s = 0.0;
  for (double v : z) s += std::exp(v * scale - m);
  const double lse = m + std::log(s);
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] * scale - lse;
}

}  // namespace detail

/// Per-sample losses and d(loss_b)/d(logits_b) for every row b.
struct LogitLoss {
  std::vector<double> losses;
  Tensor grad;  // batch x K
};

inline LogitLoss logit_loss(const Tensor& logits, const Targets& targets, const LossSpec& spec) {
  validate(spec);
  const std::size_t batch = logits.rows();
  const std::size_t K = logits.cols();
  const bool use_soft = std::holds_alternative<CrossEntropy>(spec) && targets.soft.has_value();
  if (use_soft) {
    if (targets.soft->rows() != batch || targets.soft->cols() != K) throw ShapeError("soft target shape");
  } else {
    if (targets.labels.size() != batch) throw ShapeError("label count does not match batch size");
    for (std::size_t y : targets.labels) {
      if (y >= K) throw InvalidParameter("class index " + std::to_string(y) + " out of range");
    }
  }
  const auto* kd = std::get_if<Distillation>(&spec);
  if (kd) {
    if (!targets.teacher_logits) throw InvalidParameter("distillation requires teacher logits");
    if (targets.teacher_logits->rows() != batch || targets.teacher_logits->cols() != K) {
      throw ShapeError("teacher logit shape");
    }
  }
  if (const auto* ls = std::get_if<LabelSmoothing>(&spec); ls && K < 2 && ls->beta > 0.0) {
    throw InvalidParameter("label smoothing needs at least two classes");
  }

  LogitLoss out{std::vector<double>(batch), Tensor({batch, K})};
  std::vector<double> logp(K), q(K), logs(K), logt(K);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto z = logits.row(b);
    auto g = out.grad.row(b);
    detail::log_softmax(z, 1.0, logp);

    // Target distribution for the cross-entropy part.
    if (use_soft) {
      std::copy(targets.soft->row(b).begin(), targets.soft->row(b).end(), q.begin());
    } else {
      std::fill(q.begin(), q.end(), 0.0);
      q[targets.labels[b]] = 1.0;
      if (const auto* ls = std::get_if<LabelSmoothing>(&spec); ls && ls->beta > 0.0) {
        const double off = ls->beta / static_cast<double>(K - 1);
        for (std::size_t k = 0; k < K; ++k) q[k] = k == targets.labels[b] ? 1.0 - ls->beta : off;
      }
    }
    double qsum = 0.0, ce = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      qsum += q[k];
      if (q[k] != 0.0) ce -= q[k] * logp[k];
    }
    for (std::size_t k = 0; k < K; ++k) g[k] = std::exp(logp[k]) * qsum - q[k];

    if (!kd) {
      out.losses[b] = ce;
      continue;
    }
    const double T = kd->temperature;
    detail::log_softmax(z, 1.0 / T, logs);
    detail::log_softmax(targets.teacher_logits->row(b), 1.0 / T, logt);
    double kl = 0.0;
    if (kd->direction == KlDirection::teacher_reference) {
      for (std::size_t k = 0; k < K; ++k) kl += std::exp(logt[k]) * (logt[k] - logs[k]);
    } else {
      for (std::size_t k = 0; k < K; ++k) kl += std::exp(logs[k]) * (logs[k] - logt[k]);
    }
    out.losses[b] = (1.0 - kd->mix) * ce + kd->mix * T * T * kl;
    for (std::size_t k = 0; k < K; ++k) {
      double dkl;
      if (kd->direction == KlDirection::teacher_reference) {
        dkl = T * (std::exp(logs[k]) - std::exp(logt[k]));
      } else {
        dkl = T * std::exp(logs[k]) * ((logs[k] - logt[k]) - kl);
      }
      g[k] = (1.0 - kd->mix) * g[k] + kd->mix * dkl;
    }
  }
  return out;
}

}  // namespace ccf
